"""Top-down refinement: expand labels one level, fix deviating pixels, seed new regions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .pyramid import DEFAULT_TOP_TARGET, Pyramid, build_pyramid
from .raster import GrayImage
from .segment import DEFAULT_TOL, LabelMap, RegionStats, compute_stats, segment_top

SweepHook = Callable[[np.ndarray, np.ndarray, np.ndarray], None]


@dataclass(frozen=True)
class RefineConfig:
    tol: float = DEFAULT_TOL
    max_sweeps: int = 10
    min_seed_size: int = 1
    merge: bool = True
    polish: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.min_seed_size < 1:
            raise ValueError(f"min_seed_size must be >= 1, got {self.min_seed_size}")


@dataclass(frozen=True)
class LevelResult:
    level: int
    labels: LabelMap
    stats: RegionStats
    converged: bool
    deviant_count_history: list[int] = field(default_factory=list)

    @property
    def next_label(self) -> int:
        """First label id never used at or above this level."""
        return len(self.stats.count)


def expand_labels(coarse: LabelMap, fine_dims: tuple[int, int]) -> LabelMap:
    """1-to-4 expansion: fine pixel (x, y) takes coarse label (x // 2, y // 2).

    ``fine_dims`` is (width, height) and must ceil-halve to the coarse dims.
    """
    fw, fh = fine_dims
    if ((fw + 1) // 2, (fh + 1) // 2) != (coarse.width, coarse.height):
        raise ValueError(f"fine dims {fw}x{fh} do not halve to {coarse.width}x{coarse.height}")
    fine = np.repeat(np.repeat(coarse.labels, 2, axis=0), 2, axis=1)[:fh, :fw]
    return LabelMap(fine)


def downsample_labels(fine: LabelMap) -> LabelMap:
    """Majority vote over each 2x2 block (existing pixels only; ties: lower label)."""
    h, w = fine.labels.shape
    ch, cw = (h + 1) // 2, (w + 1) // 2
    padded = np.full((2 * ch, 2 * cw), -1, dtype=np.int64)
    padded[:h, :w] = fine.labels
    blocks = padded.reshape(ch, 2, cw, 2).transpose(0, 2, 1, 3).reshape(ch, cw, 4)
    votes = (blocks[..., :, None] == blocks[..., None, :]).sum(axis=-1)
    votes[blocks < 0] = -1
    # rank by votes, then by smaller label
    big = int(padded.max()) + 2
    score = votes * big - blocks
    pick = np.argmax(score, axis=-1)
    return LabelMap(np.take_along_axis(blocks, pick[..., None], axis=-1)[..., 0])


def _threshold(tol: float, img: GrayImage) -> float:
    return float(tol) * img.scale


def detect_deviants(labels: LabelMap, stats: RegionStats, reference: GrayImage, tol: float) -> np.ndarray:
    """Pixels whose intensity is more than ``tol`` from their region mean.

    Returns an (n, 2) int array of (x, y) coordinates in raster order.
    """
    mask = deviant_mask(labels, stats, reference, tol)
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys]).astype(np.int64)


def deviant_mask(labels: LabelMap, stats: RegionStats, reference: GrayImage, tol: float) -> np.ndarray:
    if labels.labels.shape != reference.numer.shape:
        raise ValueError("label map and reference image differ in size")
    if stats.scale != reference.scale:
        raise ValueError("stats were computed against a different image scale")
    return kernels.deviant_mask(
        labels.labels, reference.numer, stats.count, stats.sum_numer, _threshold(tol, reference)
    )


def _grow(a: np.ndarray, n: int) -> np.ndarray:
    if len(a) >= n:
        return a
    out = np.zeros(n, dtype=np.int64)
    out[: len(a)] = a
    return out


def _mint_seeds(labels, numer, cnt, sums, seeds, thr, min_seed_size, next_label):
    """Turn seed pixels into fresh regions; returns the next unused label."""
    h, w = labels.shape
    keys = np.full(h * w, -1, dtype=np.int64)
    keys[seeds] = 0
    comp, _ = kernels.cc_label(keys.reshape(h, w))
    seed_comp = comp.ravel()[seeds]
    seed_vals = numer.ravel()[seeds]
    order = np.lexsort((seed_vals, seed_comp))
    clusters = np.empty(len(seeds), dtype=np.int64)
    clusters[order] = kernels.cluster_groups(seed_comp[order], seed_vals[order], thr)
    keys[seeds] = clusters
    groups, n_groups = kernels.cc_label(keys.reshape(h, w))
    seed_group = groups.ravel()[seeds]
    sizes = np.bincount(seed_group, minlength=n_groups)
    fresh = np.full(n_groups, -1, dtype=np.int64)
    keep = np.flatnonzero(sizes >= min_seed_size)
    fresh[keep] = np.arange(next_label, next_label + len(keep))
    new = fresh[seed_group]
    moving = new >= 0
    kernels.move_pixels(labels, numer, cnt, sums, seeds[moving], new[moving])
    return next_label + len(keep)


def refine_level(
    labels: LabelMap,
    stats: RegionStats,
    reference: GrayImage,
    cfg: RefineConfig = RefineConfig(),
    *,
    level: int = 0,
    next_label: int | None = None,
    on_sweep: SweepHook | None = None,
) -> LevelResult:
    """Sweep deviating pixels until none remain or ``cfg.max_sweeps`` is hit.

    Each sweep visits the current deviants in raster order, re-testing each
    against the live region means. A pixel still deviating moves to the
    4-neighboring region with the nearest mean (ties: lower label) if that
    mean is within ``tol``; otherwise it becomes a seed. Seeds are grouped
    into 4-connected, intensity-coherent groups and groups of at least
    ``min_seed_size`` pixels get fresh labels. Regions left in several pieces
    keep their label on the largest piece and the rest are relabeled.

    With ``cfg.merge`` set, adjacent regions are fused before the first
    sweep and after each one whenever every pixel of the union stays within
    ``tol`` of the union mean. A merge never creates a deviant; it removes
    the slivers that coarse-level mixed pixels leave behind. With
    ``cfg.polish`` set, non-deviant pixels are also visited and move to a
    neighboring region when that lowers the pair's summed squared
    deviation; this dissolves small regions that straddle a true border.
    Sweeping stops once there is neither a deviant nor a polish move left.

    ``on_sweep(labels, count, sum_numer)`` is called after every sweep with
    the live arrays (copy them if you keep them).
    """
    lab = np.array(labels.labels, dtype=np.int64)
    if lab.shape != reference.numer.shape:
        raise ValueError("label map and reference image differ in size")
    if stats.scale != reference.scale:
        raise ValueError("stats were computed against a different image scale")
    numer = reference.numer
    npix = lab.size
    nl = int(lab.max()) + 1
    nl = max(nl, len(stats.count), next_label or 0)
    cnt = _grow(np.array(stats.count, dtype=np.int64), nl)
    sums = _grow(np.array(stats.sum_numer, dtype=np.int64), nl)
    thr = _threshold(cfg.tol, reference)

    if cfg.merge:
        kernels.merge_coherent(lab, numer, cnt, sums, thr)
    dev = kernels.deviant_mask(lab, numer, cnt, sums, thr)
    history = [int(dev.sum())]
    for _ in range(cfg.max_sweeps):
        todo = dev
        if cfg.polish:
            todo = dev | kernels.polish_mask(lab, numer, cnt, sums, thr)
        if not todo.any():
            break
        cnt = _grow(cnt, nl + npix)
        sums = _grow(sums, nl + npix)
        seeds = kernels.reassign_pass(lab, numer, cnt, sums, np.flatnonzero(todo), thr, cfg.polish)
        if len(seeds):
            nl = _mint_seeds(lab, numer, cnt, sums, seeds, thr, cfg.min_seed_size, nl)
        nl = kernels.split_disconnected(lab, numer, cnt, sums, nl)
        if cfg.merge:
            kernels.merge_coherent(lab, numer, cnt, sums, thr)
        dev = kernels.deviant_mask(lab, numer, cnt, sums, thr)
        history.append(int(dev.sum()))
        if on_sweep is not None:
            on_sweep(lab, cnt[:nl], sums[:nl])

    return LevelResult(
        level=level,
        labels=LabelMap(lab),
        stats=RegionStats(cnt[:nl].copy(), sums[:nl].copy(), reference.scale),
        converged=history[-1] == 0,
        deviant_count_history=history,
    )


def segment_image(
    img: GrayImage,
    cfg: RefineConfig = RefineConfig(),
    top_target: int = DEFAULT_TOP_TARGET,
    pyramid: Pyramid | None = None,
) -> list[LevelResult]:
    """Full coarse-to-fine segmentation; results are ordered top level first.

    The top segmentation goes through the same refinement cycle as every
    other level so that each level carries a convergence flag.
    """
    if pyramid is None:
        pyramid = build_pyramid(img, top_target)
    top = len(pyramid) - 1
    labels, stats = segment_top(pyramid.top, cfg.tol)
    results = [refine_level(labels, stats, pyramid.top, cfg, level=top)]
    for level in range(top - 1, -1, -1):
        ref = pyramid[level]
        prev = results[-1]
        labels = expand_labels(prev.labels, (ref.width, ref.height))
        stats = compute_stats(labels, ref, capacity=prev.next_label)
        results.append(refine_level(labels, stats, ref, cfg, level=level, next_label=prev.next_label))
    return results
