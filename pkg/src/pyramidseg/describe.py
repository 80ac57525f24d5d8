"""Per-level region descriptors ("appearance list") and reconstruction from them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .pyramid import Pyramid
from .raster import GrayImage, UnreadableFileError, _write_bytes
from .refine import LevelResult
from .segment import LabelMap

LEFT_OF = "left-of"
RIGHT_OF = "right-of"
ABOVE = "above"
BELOW = "below"
_OPPOSITE = {LEFT_OF: RIGHT_OF, RIGHT_OF: LEFT_OF, ABOVE: BELOW, BELOW: ABOVE}

FORMAT_VERSION = 1


class StackError(ValueError):
    """Inconsistent pipeline results or a malformed stack file."""


@dataclass
class RegionDescriptor:
    level: int
    label: int
    size: int
    centroid: tuple[float, float]
    mean_intensity: float
    bbox: tuple[int, int, int, int]
    parent_label: int | None = None
    adjacent: list[int] = field(default_factory=list)
    relative_position: dict[int, str] = field(default_factory=dict)

    @property
    def bbox_width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def bbox_height(self) -> int:
        return self.bbox[3] - self.bbox[1] + 1


@dataclass
class StackLevel:
    level: int
    width: int
    height: int
    converged: bool
    deviant_count_history: list[int]
    regions: list[RegionDescriptor]

    def by_label(self) -> dict[int, RegionDescriptor]:
        return {d.label: d for d in self.regions}


@dataclass
class DescriptionStack:
    """Region descriptors of every level, top (coarsest) level first."""

    width: int
    height: int
    config: dict
    levels: list[StackLevel]

    def level(self, index: int) -> StackLevel:
        for lv in self.levels:
            if lv.level == index:
                return lv
        raise StackError(f"level {index} not in stack (have {[lv.level for lv in self.levels]})")

    @property
    def base(self) -> StackLevel:
        return self.level(0)


def relation(a: RegionDescriptor, b: RegionDescriptor) -> str:
    """Qualitative position of ``a`` relative to ``b`` from centroid deltas.

    The axis with the larger offset decides (ties: horizontal). Coincident
    centroids fall back to label order so the relation stays antisymmetric.
    """
    dx = b.centroid[0] - a.centroid[0]
    dy = b.centroid[1] - a.centroid[1]
    if abs(dx) >= abs(dy):
        if dx == 0:
            return LEFT_OF if a.label < b.label else RIGHT_OF
        return LEFT_OF if dx > 0 else RIGHT_OF
    return ABOVE if dy > 0 else BELOW


def _adjacent_pairs(labels: np.ndarray) -> set[tuple[int, int]]:
    pairs = set()
    for a, b in (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
    ):
        diff = a != b
        for x, y in zip(a[diff].tolist(), b[diff].tolist()):
            pairs.add((min(x, y), max(x, y)))
    return pairs


def _parents(labels: np.ndarray, coarse: np.ndarray) -> dict[int, int]:
    """Plurality coarse label under the (x // 2, y // 2) projection."""
    h, w = labels.shape
    proj = coarse[np.arange(h)[:, None] // 2, np.arange(w)[None, :] // 2]
    pairs = np.stack([labels.ravel(), proj.ravel()], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    parent: dict[int, tuple[int, int]] = {}
    for (lab, par), c in zip(uniq.tolist(), counts.tolist()):
        best = parent.get(lab)
        # uniq is sorted by (label, parent), so ">" keeps the lower parent on ties
        if best is None or c > best[1]:
            parent[lab] = (par, c)
    return {lab: par for lab, (par, _) in parent.items()}


def describe_level(result: LevelResult, image: GrayImage, coarse: LabelMap | None = None) -> StackLevel:
    labels = result.labels.labels
    if labels.shape != image.numer.shape:
        raise StackError(f"level {result.level}: label map and image differ in size")
    h, w = labels.shape
    ys, xs = np.indices((h, w))
    flat = labels.ravel()
    present = np.unique(flat)
    n = int(present.max()) + 1
    size = np.bincount(flat, minlength=n)
    cx = np.bincount(flat, weights=xs.ravel(), minlength=n)
    cy = np.bincount(flat, weights=ys.ravel(), minlength=n)
    sums = np.zeros(n, dtype=np.int64)
    np.add.at(sums, flat, image.numer.ravel())
    big = np.iinfo(np.int64).max
    x0 = np.full(n, big)
    y0 = np.full(n, big)
    x1 = np.full(n, -1)
    y1 = np.full(n, -1)
    np.minimum.at(x0, flat, xs.ravel())
    np.minimum.at(y0, flat, ys.ravel())
    np.maximum.at(x1, flat, xs.ravel())
    np.maximum.at(y1, flat, ys.ravel())
    parents = _parents(labels, coarse.labels) if coarse is not None else {}

    regions = {}
    for lab in present.tolist():
        s = int(size[lab])
        regions[lab] = RegionDescriptor(
            level=result.level,
            label=lab,
            size=s,
            centroid=(float(cx[lab] / s), float(cy[lab] / s)),
            mean_intensity=float(sums[lab] / (s * image.scale)),
            bbox=(int(x0[lab]), int(y0[lab]), int(x1[lab]), int(y1[lab])),
            parent_label=parents.get(lab),
        )
    for a, b in sorted(_adjacent_pairs(labels)):
        ra, rb = regions[a], regions[b]
        ra.adjacent.append(b)
        rb.adjacent.append(a)
        rel = relation(ra, rb)
        ra.relative_position[b] = rel
        rb.relative_position[a] = _OPPOSITE[rel]
    for d in regions.values():
        d.adjacent.sort()
        d.relative_position = dict(sorted(d.relative_position.items()))
    return StackLevel(
        level=result.level,
        width=w,
        height=h,
        converged=result.converged,
        deviant_count_history=list(result.deviant_count_history),
        regions=[regions[lab] for lab in present.tolist()],
    )


def register_regions(
    results: Sequence[LevelResult], pyramid: Pyramid, config: dict | None = None
) -> DescriptionStack:
    """Describe every region of every level; ``results`` run top to bottom."""
    if len(results) != len(pyramid):
        raise StackError(f"{len(results)} level results for a {len(pyramid)}-level pyramid")
    levels = []
    coarse = None
    for expected, result in zip(range(len(pyramid) - 1, -1, -1), results):
        if result.level != expected:
            raise StackError(f"results out of order: got level {result.level}, expected {expected}")
        levels.append(describe_level(result, pyramid[result.level], coarse))
        coarse = result.labels
    base = pyramid[0]
    return DescriptionStack(base.width, base.height, dict(config or {}), levels)


def reconstruct(stack: DescriptionStack, level: int, label_maps: dict[int, LabelMap] | Sequence[LabelMap]) -> GrayImage:
    """Paint every pixel of ``level`` with its region's mean intensity.

    ``label_maps`` maps level index to label map (or is a sequence indexed
    by level).
    """
    lv = stack.level(level)
    try:
        lm = label_maps[level]
    except (KeyError, IndexError):
        raise StackError(f"no label map for level {level}") from None
    labels = lm.labels if isinstance(lm, LabelMap) else np.asarray(lm)
    if labels.shape != (lv.height, lv.width):
        raise StackError(f"label map {labels.shape} does not match level {level} ({lv.height}, {lv.width})")
    means = {d.label: d.mean_intensity for d in lv.regions}
    missing = set(np.unique(labels).tolist()) - means.keys()
    if missing:
        raise StackError(f"labels {sorted(missing)} have no descriptor at level {level}")
    lut = np.zeros(int(labels.max()) + 1)
    for lab, m in means.items():
        if lab < len(lut):
            lut[lab] = m
    return GrayImage.from_array(np.clip(lut[labels], 0, 255))


# -- serialization ---------------------------------------------------------------


def _descriptor_record(d: RegionDescriptor) -> dict:
    return {
        "label": d.label,
        "size": d.size,
        "centroid": list(d.centroid),
        "mean_intensity": d.mean_intensity,
        "bbox": list(d.bbox),
        "parent_label": d.parent_label,
        "adjacent": list(d.adjacent),
        "relative_position": {str(k): v for k, v in d.relative_position.items()},
    }


def stack_to_dict(stack: DescriptionStack) -> dict:
    return {
        "format": "pyramidseg-description-stack",
        "version": FORMAT_VERSION,
        "source": {"width": stack.width, "height": stack.height},
        "config": stack.config,
        "levels": [
            {
                "level": lv.level,
                "width": lv.width,
                "height": lv.height,
                "converged": lv.converged,
                "deviant_count_history": lv.deviant_count_history,
                "regions": [_descriptor_record(d) for d in lv.regions],
            }
            for lv in stack.levels
        ],
    }


def dumps_stack(stack: DescriptionStack) -> str:
    return json.dumps(stack_to_dict(stack), indent=2, sort_keys=True) + "\n"


def save_stack(stack: DescriptionStack, path) -> None:
    _write_bytes(path, dumps_stack(stack).encode("utf-8"))


def stack_from_dict(doc: dict) -> DescriptionStack:
    try:
        if doc.get("format") != "pyramidseg-description-stack":
            raise StackError("not a description-stack document")
        levels = []
        for lv in doc["levels"]:
            regions = [
                RegionDescriptor(
                    level=lv["level"],
                    label=r["label"],
                    size=r["size"],
                    centroid=tuple(r["centroid"]),
                    mean_intensity=r["mean_intensity"],
                    bbox=tuple(r["bbox"]),
                    parent_label=r["parent_label"],
                    adjacent=list(r["adjacent"]),
                    relative_position={int(k): v for k, v in r["relative_position"].items()},
                )
                for r in lv["regions"]
            ]
            levels.append(
                StackLevel(lv["level"], lv["width"], lv["height"], lv["converged"], lv["deviant_count_history"], regions)
            )
        return DescriptionStack(doc["source"]["width"], doc["source"]["height"], doc["config"], levels)
    except (KeyError, TypeError, AttributeError) as exc:
        raise StackError(f"malformed description stack: {exc!r}") from None


def load_stack(path) -> DescriptionStack:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFileError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StackError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return stack_from_dict(doc)


__all__ = [
    "ABOVE",
    "BELOW",
    "LEFT_OF",
    "RIGHT_OF",
    "DescriptionStack",
    "RegionDescriptor",
    "StackError",
    "StackLevel",
    "describe_level",
    "dumps_stack",
    "load_stack",
    "reconstruct",
    "register_regions",
    "relation",
    "save_stack",
    "stack_from_dict",
    "stack_to_dict",
]
