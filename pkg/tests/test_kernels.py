"""Compiled and fallback kernels must agree bit for bit."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pyramidseg import kernels
from pyramidseg._accel import USE_NUMBA

from .conftest import random_scene

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba disabled")


def labelled_field(seed, h=24, w=31, k=5):
    rng = np.random.default_rng(seed)
    numer = rng.integers(0, 256, size=(h, w)).astype(np.int64)
    labels = rng.integers(0, k, size=(h, w)).astype(np.int64)
    return labels, numer


@pytest.mark.parametrize("seed", range(5))
def test_block_sum(seed):
    a = np.random.default_rng(seed).integers(0, 1000, size=(2 * 7, 2 * 9)).astype(np.int64)
    assert np.array_equal(kernels._block_sum2x2_numpy(a), kernels._block_sum2x2_loop.py_func(a))
    if USE_NUMBA:
        assert np.array_equal(kernels._block_sum2x2_numpy(a), kernels._block_sum2x2_loop(a))


@pytest.mark.parametrize("seed", range(5))
def test_stats_and_deviance(seed):
    labels, numer = labelled_field(seed)
    cnt, sums = kernels._region_stats_numpy(labels, numer, 5)
    c2, s2 = kernels._region_stats_loop.py_func(labels, numer, 5)
    assert np.array_equal(cnt, c2) and np.array_equal(sums, s2)
    m1 = kernels._deviant_mask_numpy(labels, numer, cnt, sums, 40.0)
    m2 = kernels._deviant_mask_loop.py_func(labels, numer, cnt, sums, 40.0)
    assert np.array_equal(m1, m2)
    if USE_NUMBA:
        c3, s3 = kernels._region_stats_loop(labels, numer, 5)
        assert np.array_equal(cnt, c3) and np.array_equal(sums, s3)
        assert np.array_equal(m1, kernels._deviant_mask_loop(labels, numer, cnt, sums, 40.0))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_sequential_kernels(seed):
    labels, numer = labelled_field(seed, k=3)
    cc1 = kernels._cc_label_loop(labels)
    cc2 = kernels._cc_label_loop.py_func(labels)
    assert np.array_equal(cc1[0], cc2[0]) and cc1[1] == cc2[1]

    lab = cc1[0].astype(np.int64)
    n = int(cc1[1])
    cnt, sums = kernels._region_stats_numpy(lab, numer, n)
    cap = n + lab.size

    def run(mode):
        get = (lambda f: f) if mode == "jit" else (lambda f: f.py_func)
        L = lab.copy()
        c = np.zeros(cap, dtype=np.int64)
        s = np.zeros(cap, dtype=np.int64)
        c[:n], s[:n] = cnt, sums
        merges = get(kernels._merge_coherent_loop)(L, numer, c, s, 60.0)
        todo = np.flatnonzero(kernels._deviant_mask_numpy(L, numer, c, s, 60.0) | get(kernels._polish_mask_loop)(L, numer, c, s, 60.0))
        seeds = get(kernels._reassign_pass_loop)(L, numer, c, s, todo, 60.0, True)
        nl = get(kernels._split_disconnected_loop)(L, numer, c, s, n)
        return merges, L, c, s, np.asarray(seeds), nl

    a, b = run("jit"), run("py")
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def _pipeline_digest(disable: bool) -> str:
    code = (
        "import json, numpy as np\n"
        "from tests.conftest import random_scene\n"
        "from pyramidseg.refine import segment_image\n"
        "out = []\n"
        "for seed in (3, 4):\n"
        "    img, _ = random_scene(seed, size=96)\n"
        "    res = segment_image(img)\n"
        "    out.append([r.labels.labels.tolist() for r in res])\n"
        "print(json.dumps(out))\n"
    )
    env = dict(os.environ, PYRAMIDSEG_DISABLE_NUMBA="1" if disable else "0")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    proc = subprocess.run([sys.executable, "-c", code], env=env, cwd=root, capture_output=True, text=True, check=True)
    return proc.stdout


@needs_numba
def test_env_flag_gives_identical_segmentation():
    fast = _pipeline_digest(False)
    slow = _pipeline_digest(True)
    assert json.loads(fast) == json.loads(slow)


def test_env_flag_is_read():
    code = "from pyramidseg._accel import USE_NUMBA; print(USE_NUMBA)"
    env = dict(os.environ, PYRAMIDSEG_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_random_scene_helper_is_deterministic():
    a, ta = random_scene(7, size=64)
    b, tb = random_scene(7, size=64)
    assert a == b and np.array_equal(ta, tb)
