"""Bottom-up 4-to-1 averaging pyramid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .raster import GrayImage

DEFAULT_TOP_TARGET = 100


@dataclass(frozen=True)
class Pyramid:
    """Image levels from the input (index 0) up to the coarsest top.

    ``weights[L][y, x]`` is the number of input pixels that level-L pixel
    stands for and ``sums[L][y, x]`` their exact numerator sum, in units of
    ``1 / levels[0].scale``. Each level pixel is ``sums / (weights * scale0)``.
    """

    levels: tuple[GrayImage, ...]
    weights: tuple[np.ndarray, ...]
    sums: tuple[np.ndarray, ...]
    top_target: int = DEFAULT_TOP_TARGET

    @property
    def top(self) -> GrayImage:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, level: int) -> GrayImage:
        return self.levels[level]


def level_dims(width: int, height: int, top_target: int = DEFAULT_TOP_TARGET) -> list[tuple[int, int]]:
    """(width, height) of every level under the ceil-halving rule."""
    dims = [(width, height)]
    while dims[-1][0] * dims[-1][1] > top_target:
        w, h = dims[-1]
        dims.append(((w + 1) // 2, (h + 1) // 2))
    return dims


def build_pyramid(img: GrayImage, top_target: int = DEFAULT_TOP_TARGET) -> Pyramid:
    """Shrink ``img`` by 2x2 block averaging until a level has at most
    ``top_target`` pixels.

    Blocks on the right/bottom edge of odd-sized levels are partial. Each
    coarse pixel is the mean of the input pixels in its footprint, which is
    the plain 4-to-1 mean whenever the level below has even dimensions and
    keeps the area-weighted mean intensity identical on every level.
    """
    if top_target < 1:
        raise ValueError("top_target must be >= 1")
    levels = [img]
    weights = [np.ones((img.height, img.width), dtype=np.int64)]
    sums = [img.numer]
    while levels[-1].width * levels[-1].height > top_target:
        weight = kernels.block_sum2x2(weights[-1])
        total = kernels.block_sum2x2(sums[-1])
        denom = math.lcm(*(int(v) for v in np.unique(weight)))
        if 255 * img.scale * denom * weight.size >= 2**62:
            raise OverflowError("pyramid level denominators exceed int64 range")
        levels.append(GrayImage(total * (denom // weight), img.scale * denom))
        weights.append(weight)
        sums.append(total)
    return Pyramid(tuple(levels), tuple(weights), tuple(sums), top_target)
