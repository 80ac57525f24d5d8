from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from pyramidseg.raster import synth_scene

ACCEPTANCE_LINES: list[str] = []

FOUR = ndimage.generate_binary_structure(2, 1)


def canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel a partition by raster order of first occurrence."""
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inverse].reshape(labels.shape)


def components_per_label(labels: np.ndarray) -> dict[int, int]:
    out = {}
    for lab in np.unique(labels):
        _, n = ndimage.label(labels == lab, structure=FOUR)
        out[int(lab)] = n
    return out


def random_scene(seed: int, size: int = 256, tol: float = 10.0, max_rects: int = 5, noise: int | None = None):
    """Rectangles on a background, pairwise intensity gaps > 2*tol, noise < tol/2 unless given."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_rects + 1))
    step = int(2 * tol) + 1
    levels = rng.permutation(np.arange(0, 256, step))[: k + 1]
    rects = []
    for i in range(k):
        w, h = (int(v) for v in rng.integers(12, size // 3, size=2))
        x = int(rng.integers(0, size - w))
        y = int(rng.integers(0, size - h))
        rects.append(((x, y, w, h), int(levels[i + 1])))
    if noise is None:
        noise = int(np.ceil(tol / 2)) - 1
    return synth_scene(size, size, rects, int(levels[0]), noise, seed)


def pixel_accuracy(labels: np.ndarray, truth: np.ndarray) -> float:
    hits = 0
    for lab in np.unique(labels):
        hits += np.bincount(truth[labels == lab]).max()
    return hits / labels.size


@pytest.fixture
def record():
    def _record(criterion: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" -- {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
