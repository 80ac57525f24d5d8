"""Grayscale rasters, PGM/label-file I/O and synthetic test scenes."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

MAX_SCALE_EXP = 16
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class RasterError(Exception):
    """Base class for image and label-file failures."""


class UnreadableFileError(RasterError):
    pass


class MalformedHeaderError(RasterError):
    pass


class UnsupportedDepthError(RasterError):
    pass


class UnwritablePathError(RasterError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Exact-rational grayscale raster.

    Pixel ``(x, y)`` has intensity ``numer[y, x] / scale``. Keeping a shared
    integer denominator lets pyramid averaging and region sums stay exact.
    """

    numer: np.ndarray
    scale: int = 1

    def __post_init__(self):
        numer = np.array(self.numer, dtype=np.int64, order="C")
        if numer.ndim != 2 or numer.shape[0] < 1 or numer.shape[1] < 1:
            raise ValueError(f"image must be a nonempty 2-D array, got shape {numer.shape}")
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")
        if numer.min() < 0 or numer.max() > 255 * self.scale:
            raise ValueError("intensities must lie in [0, 255]")
        numer.setflags(write=False)
        object.__setattr__(self, "numer", numer)
        object.__setattr__(self, "scale", int(self.scale))

    @classmethod
    def from_array(cls, values) -> GrayImage:
        """Build from a 2-D array of intensities in [0, 255].

        Values are placed on the coarsest dyadic grid ``k / 2**e``
        (``e <= 16``) that represents them exactly; anything finer is rounded
        half-to-even onto the 1/65536 grid.
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("image must be 2-D")
        if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
            raise ValueError("intensities must lie in [0, 255]")
        for e in range(MAX_SCALE_EXP + 1):
            scaled = arr * (1 << e)
            if np.all(scaled == np.floor(scaled)):
                return cls(scaled.astype(np.int64), 1 << e)
        scale = 1 << MAX_SCALE_EXP
        return cls(np.rint(arr * scale).astype(np.int64), scale)

    @property
    def width(self) -> int:
        return self.numer.shape[1]

    @property
    def height(self) -> int:
        return self.numer.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        """Intensities as float64, shape (height, width)."""
        return self.numer / self.scale

    @property
    def intensities(self) -> np.ndarray:
        """Row-major flat view of the intensities."""
        return self.pixels.ravel()

    def value(self, x: int, y: int) -> Fraction:
        return Fraction(int(self.numer[y, x]), self.scale)

    def rounded(self) -> np.ndarray:
        """uint8 pixels, rounded half-to-even on the exact values."""
        q, r = np.divmod(self.numer, self.scale)
        twice = 2 * r
        up = (twice > self.scale) | ((twice == self.scale) & (q % 2 == 1))
        return (q + up).astype(np.uint8)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        if self.numer.shape != other.numer.shape:
            return False
        return bool(np.all(self.numer * other.scale == other.numer * self.scale))

    __hash__ = None


# -- PGM ---------------------------------------------------------------------


def _header_tokens(data: bytes, count: int, path) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise MalformedHeaderError(f"{path}: truncated PGM header")
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise MalformedHeaderError(f"{path}: missing whitespace after PGM header")
    return tokens, i + 1


def parse_pgm(data: bytes, path="<bytes>") -> GrayImage:
    if data[:2] != b"P5":
        raise MalformedHeaderError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    tokens, offset = _header_tokens(data, 4, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric PGM header field") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedDepthError(f"{path}: maxval {maxval} unsupported (only 8-bit, maxval 255)")
    raw = data[offset : offset + width * height]
    if len(raw) < width * height:
        raise MalformedHeaderError(f"{path}: expected {width * height} pixel bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels.astype(np.int64), 1)


def encode_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.rounded().tobytes()


def _load_png(data: bytes, path) -> GrayImage:
    try:
        from PIL import Image
    except ImportError:
        raise UnsupportedDepthError(f"{path}: PNG input needs Pillow") from None
    import io

    with Image.open(io.BytesIO(data)) as im:
        if im.mode != "L":
            raise UnsupportedDepthError(f"{path}: PNG mode {im.mode} unsupported (8-bit grayscale only)")
        return GrayImage(np.asarray(im, dtype=np.int64), 1)


def load_image(path) -> GrayImage:
    """Read an 8-bit binary PGM (or grayscale PNG when Pillow is present)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"{path}: {exc.strerror or exc}") from exc
    if data.startswith(PNG_SIGNATURE):
        return _load_png(data, path)
    return parse_pgm(data, path)


def save_image(img: GrayImage, path) -> None:
    _write_bytes(path, encode_pgm(img))


def _write_bytes(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise UnwritablePathError(f"{path}: {exc.strerror or exc}") from exc


# -- label sidecar -------------------------------------------------------------
#
#   LABELS <width> <height>
#   <width space-separated integers>   (one line per row, height lines)


def encode_labels(labels: np.ndarray) -> str:
    h, w = labels.shape
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in labels)
    return f"LABELS {w} {h}\n{rows}\n"


def save_labels(labels: np.ndarray, path) -> None:
    _write_bytes(path, encode_labels(np.asarray(labels)).encode("ascii"))


def load_labels(path) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "LABELS":
        raise MalformedHeaderError(f"{path}: expected 'LABELS <w> <h>' header")
    try:
        w, h = int(head[1]), int(head[2])
        rows = [[int(t) for t in line.split()] for line in lines[1 : 1 + h]]
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-integer label entry") from None
    if len(rows) != h or any(len(r) != w for r in rows):
        raise MalformedHeaderError(f"{path}: label rows do not match {w}x{h}")
    return np.array(rows, dtype=np.int64).reshape(h, w)


def render_labels(labels: np.ndarray) -> GrayImage:
    """Spread label ids over 0..255 for eyeballing; not invertible."""
    labels = np.asarray(labels, dtype=np.int64)
    top = int(labels.max())
    if top == 0:
        return GrayImage(np.zeros_like(labels), 1)
    return GrayImage((labels * 255) // top, 1)


# -- synthetic scenes ----------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of the SplitMix64 generator seeded with ``seed``."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


Rect = tuple[int, int, int, int]


def synth_scene(
    width: int,
    height: int,
    rects: Sequence[tuple[Rect, float]],
    background: float = 0,
    noise_amplitude: int = 0,
    rng_seed: int = 0,
) -> tuple[GrayImage, np.ndarray]:
    """Paint rectangles on a flat background and add uniform integer noise.

    ``rects`` holds ``((x, y, w, h), intensity)`` pairs; later entries
    overwrite earlier ones. The noise offset of the i-th pixel in raster
    order is ``splitmix64(seed)[i] % (2a + 1) - a``, and the result is
    clamped to [0, 255]. The returned ground truth labels the 4-connected
    pieces of equal paint in raster order of first occurrence.
    """
    if width < 1 or height < 1:
        raise ValueError("scene dimensions must be positive")
    if noise_amplitude < 0:
        raise ValueError("noise amplitude must be non-negative")
    if not 0 <= background <= 255:
        raise ValueError("background intensity outside [0, 255]")
    base = np.full((height, width), float(background))
    paint = np.zeros((height, width), dtype=np.int64)
    for k, ((x, y, w, h), value) in enumerate(rects, start=1):
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"rectangle {k} {(x, y, w, h)} out of bounds for {width}x{height}")
        if not 0 <= value <= 255:
            raise ValueError(f"rectangle {k} intensity {value} outside [0, 255]")
        base[y : y + h, x : x + w] = value
        paint[y : y + h, x : x + w] = k
    if noise_amplitude:
        span = np.uint64(2 * noise_amplitude + 1)
        draws = splitmix64(rng_seed, width * height) % span
        base = base + (draws.astype(np.int64) - noise_amplitude).reshape(height, width)
        base = np.clip(base, 0, 255)
    truth, _ = kernels.cc_label(paint)
    return GrayImage.from_array(base), truth
