"""Compare the numba kernels with the pure-numpy / pure-Python fallback.

Per-kernel timings run both paths in this process (``.py_func`` is the
undecorated source). The end-to-end timing runs ``segment_image`` in two
subprocesses, one with ``PYRAMIDSEG_DISABLE_NUMBA=1``, and checks that both
produce the same label maps.

    python benchmarks/bench_kernels.py --size 256 --repeat 5
"""

from __future__ import annotations

import argparse
import hashlib
import os
import subprocess
import sys
import timeit

import numpy as np

from pyramidseg import kernels
from pyramidseg._accel import USE_NUMBA
from pyramidseg.raster import synth_scene


def scene(size: int):
    rects = [
        ((size // 10, size // 10, size // 3, size // 4), 200),
        ((size // 2, size // 5, size // 3, size // 2), 120),
        ((size // 5, 2 * size // 3, size // 2, size // 5), 250),
    ]
    img, truth = synth_scene(size, size, rects, background=40, noise_amplitude=4, rng_seed=1)
    return img.numer.astype(np.int64), truth.astype(np.int64)


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(size: int, repeat: int) -> list[tuple[str, float, float]]:
    numer, truth = scene(size)
    n = int(truth.max()) + 1
    cnt, sums = kernels._region_stats_numpy(truth, numer, n)
    even = numer[: size - size % 2, : size - size % 2]
    # shifted labels make every pixel a deviance / reassignment candidate
    shifted = np.roll(truth, 3, axis=1)
    scnt, ssums = kernels._region_stats_numpy(shifted, numer, n)
    order = np.flatnonzero(kernels._deviant_mask_numpy(shifted, numer, scnt, ssums, 10.0))

    def reassign(fn):
        lab = shifted.copy()
        c = np.zeros(n + lab.size, dtype=np.int64)
        s = np.zeros(n + lab.size, dtype=np.int64)
        c[:n], s[:n] = scnt, ssums
        fn(lab, numer, c, s, order, 10.0, True)

    cases = [
        ("block_sum2x2", kernels._block_sum2x2_loop, kernels._block_sum2x2_numpy, (even,)),
        ("cc_label", kernels._cc_label_loop, kernels._cc_label_loop.py_func, (truth,)),
        ("region_stats", kernels._region_stats_loop, kernels._region_stats_numpy, (truth, numer, n)),
        ("deviant_mask", kernels._deviant_mask_loop, kernels._deviant_mask_numpy, (shifted, numer, scnt, ssums, 10.0)),
        ("polish_mask", kernels._polish_mask_loop, kernels._polish_mask_loop.py_func, (truth, numer, cnt, sums, 10.0)),
    ]
    rows = []
    for name, fast, slow, args in cases:
        if USE_NUMBA:
            fast(*args)  # compile
        rows.append((name, best_of(lambda: fast(*args), repeat), best_of(lambda: slow(*args), repeat)))
    if USE_NUMBA:
        reassign(kernels._reassign_pass_loop)
    rows.append(
        (
            f"reassign_pass ({len(order)} px)",
            best_of(lambda: reassign(kernels._reassign_pass_loop), repeat),
            best_of(lambda: reassign(kernels._reassign_pass_loop.py_func), max(1, repeat // 2)),
        )
    )
    return rows


_PIPELINE = """
import hashlib, sys, time
sys.path.insert(0, {bench_dir!r})
from bench_kernels import scene
from pyramidseg.raster import GrayImage
from pyramidseg.refine import segment_image
img = GrayImage(scene({size})[0])
segment_image(img)  # warm-up / compile
t0 = time.perf_counter()
for _ in range({repeat}):
    res = segment_image(img)
dt = (time.perf_counter() - t0) / {repeat}
digest = hashlib.sha256(b"".join(r.labels.labels.tobytes() for r in res)).hexdigest()
print(dt, digest)
"""


def pipeline(size: int, repeat: int, disable: bool) -> tuple[float, str]:
    code = _PIPELINE.format(bench_dir=os.path.dirname(os.path.abspath(__file__)), size=size, repeat=repeat)
    env = dict(os.environ, PYRAMIDSEG_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    dt, digest = out.stdout.split()
    return float(dt), digest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="square image side")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args(argv)

    if not USE_NUMBA:
        print("numba disabled in this process; both columns run the fallback")
    print(f"kernels on a {args.size}x{args.size} scene (best of {args.repeat}, ms)")
    print(f"{'kernel':<28}{'numba':>10}{'fallback':>12}{'speedup':>10}")
    for name, fast, slow in kernel_table(args.size, args.repeat):
        print(f"{name:<28}{fast * 1e3:>10.3f}{slow * 1e3:>12.3f}{slow / fast:>9.1f}x")

    if not args.skip_pipeline:
        fast, d1 = pipeline(args.size, args.repeat, disable=False)
        slow, d2 = pipeline(args.size, max(1, args.repeat // 5), disable=True)
        print(f"\nsegment_image end to end: numba {fast * 1e3:.1f} ms, fallback {slow * 1e3:.1f} ms ({slow / fast:.1f}x)")
        print(f"label maps identical: {d1 == d2}")
        if d1 != d2:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
