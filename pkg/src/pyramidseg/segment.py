"""Segmentation of the pyramid top: intensity sweep plus 4-connected labeling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .raster import GrayImage

DEFAULT_TOL = 10.0


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel region ids, shape (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, order="C")
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError("label map must be a nonempty 2-D array")
        if labels.min() < 0:
            raise ValueError("labels must be non-negative")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def region_count(self) -> int:
        return len(np.unique(self.labels))

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool(np.all(self.labels == other.labels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RegionStats:
    """Exact per-label pixel counts and intensity sums.

    Arrays are indexed by label; labels with ``count == 0`` are unused or
    have vanished. ``sum_numer / scale`` is the intensity sum.
    """

    count: np.ndarray
    sum_numer: np.ndarray
    scale: int

    @property
    def sum_intensity(self) -> np.ndarray:
        return self.sum_numer / self.scale

    @property
    def mean_intensity(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sum_numer / (self.count * float(self.scale))

    @property
    def present(self) -> np.ndarray:
        return np.flatnonzero(self.count)

    def __eq__(self, other):
        if not isinstance(other, RegionStats):
            return NotImplemented
        n = max(len(self.count), len(other.count))
        return (
            self.scale == other.scale
            and np.array_equal(_pad(self.count, n), _pad(other.count, n))
            and np.array_equal(_pad(self.sum_numer, n), _pad(other.sum_numer, n))
        )

    __hash__ = None


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.int64)
    out[: len(a)] = a
    return out


def compute_stats(labels: LabelMap | np.ndarray, img: GrayImage, capacity: int | None = None) -> RegionStats:
    """Region statistics from scratch."""
    arr = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels, dtype=np.int64)
    if arr.shape != img.numer.shape:
        raise ValueError(f"label map {arr.shape} does not match image {img.numer.shape}")
    n = int(arr.max()) + 1
    if capacity is not None:
        n = max(n, capacity)
    count, sums = kernels.region_stats(arr, img.numer, n)
    return RegionStats(count, sums, img.scale)


def cluster_intensities(img: GrayImage, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Group the intensity axis by an ascending sweep over distinct values.

    A value opens a new cluster when it exceeds the running mean of the
    current cluster's distinct values by more than ``tol``. Returns the
    per-pixel cluster index, shape (height, width).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    values, inverse = np.unique(img.numer, return_inverse=True)
    clusters = kernels.cluster_sorted(values, float(tol) * img.scale)
    return clusters[inverse.reshape(img.numer.shape)]


def connected_components(cluster_map: np.ndarray) -> LabelMap:
    """4-connected pieces of equal cluster index, numbered in raster order."""
    keys = np.asarray(cluster_map, dtype=np.int64)
    if keys.ndim != 2 or keys.size == 0:
        raise ValueError("cluster map must be a nonempty 2-D array")
    if keys.min() < 0:
        raise ValueError("cluster indices must be non-negative")
    labels, _ = kernels.cc_label(keys)
    return LabelMap(labels)


def segment_top(img: GrayImage, tol: float = DEFAULT_TOL) -> tuple[LabelMap, RegionStats]:
    labels = connected_components(cluster_intensities(img, tol))
    return labels, compute_stats(labels, img)
