"""Hot loops of the pipeline.

Every kernel exists in a loop form compiled by numba and a fallback used when
numba is disabled (see ``_accel``). Where a kernel vectorizes cleanly the
fallback is a separate numpy implementation; inherently sequential kernels
(flood fill, raster-order reassignment) fall back to their own Python source.
Both paths must return bit-identical results.

Intensities reach these kernels as exact int64 numerators over a common
per-image scale, and region statistics are int64 (count, numerator-sum)
pairs, so incremental updates never accumulate rounding error. Tolerances
arrive pre-multiplied by the scale (``thr = tol * scale``).
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "USE_NUMBA",
    "block_sum2x2",
    "cc_label",
    "cluster_sorted",
    "region_stats",
    "deviant_mask",
    "reassign_pass",
    "split_disconnected",
    "cluster_groups",
    "move_pixels",
    "merge_coherent",
    "polish_mask",
]


# -- 2x2 block sums ---------------------------------------------------------


@njit
def _block_sum2x2_loop(a):
    h, w = a.shape
    out = np.zeros(((h + 1) // 2, (w + 1) // 2), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            out[y // 2, x // 2] += a[y, x]
    return out


def _block_sum2x2_numpy(a):
    h, w = a.shape
    padded = np.zeros((h + (h & 1), w + (w & 1)), dtype=np.int64)
    padded[:h, :w] = a
    return padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).sum(axis=(1, 3))


# -- connected components ----------------------------------------------------


@njit
def _cc_label_loop(keys):
    # keys < 0 are background and stay -1
    h, w = keys.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    stack = np.empty(h * w, dtype=np.int64)
    n = 0
    for start in range(h * w):
        sy = start // w
        sx = start - sy * w
        key = keys[sy, sx]
        if key < 0 or labels[sy, sx] >= 0:
            continue
        labels[sy, sx] = n
        top = 0
        stack[top] = start
        top += 1
        while top > 0:
            top -= 1
            p = stack[top]
            y = p // w
            x = p - y * w
            if y > 0 and labels[y - 1, x] < 0 and keys[y - 1, x] == key:
                labels[y - 1, x] = n
                stack[top] = p - w
                top += 1
            if x > 0 and labels[y, x - 1] < 0 and keys[y, x - 1] == key:
                labels[y, x - 1] = n
                stack[top] = p - 1
                top += 1
            if x + 1 < w and labels[y, x + 1] < 0 and keys[y, x + 1] == key:
                labels[y, x + 1] = n
                stack[top] = p + 1
                top += 1
            if y + 1 < h and labels[y + 1, x] < 0 and keys[y + 1, x] == key:
                labels[y + 1, x] = n
                stack[top] = p + w
                top += 1
        n += 1
    return labels, n


# -- 1-D intensity sweep -----------------------------------------------------


@njit
def _cluster_sorted_loop(values, thr):
    # values: ascending distinct numerators; running mean is over distinct values
    n = values.shape[0]
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    cluster = 0
    total = float(values[0])
    members = 1
    out[0] = 0
    for i in range(1, n):
        v = float(values[i])
        if v - total / members > thr:
            cluster += 1
            total = v
            members = 1
        else:
            total += v
            members += 1
        out[i] = cluster
    return out


@njit
def _cluster_groups_loop(groups, values, thr):
    # inputs sorted by (group, value); the sweep restarts at every group boundary
    n = values.shape[0]
    out = np.empty(n, dtype=np.int64)
    cluster = -1
    total = 0.0
    members = 0
    for i in range(n):
        v = float(values[i])
        if i == 0 or groups[i] != groups[i - 1] or v - total / members > thr:
            cluster += 1
            total = v
            members = 1
        elif values[i] != values[i - 1]:
            total += v
            members += 1
        out[i] = cluster
    return out


# -- region statistics -------------------------------------------------------


@njit
def _region_stats_loop(labels, numer, n):
    cnt = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n, dtype=np.int64)
    h, w = labels.shape
    for y in range(h):
        for x in range(w):
            lab = labels[y, x]
            cnt[lab] += 1
            sums[lab] += numer[y, x]
    return cnt, sums


def _region_stats_numpy(labels, numer, n):
    flat = labels.ravel()
    cnt = np.bincount(flat, minlength=n).astype(np.int64)
    sums = np.zeros(n, dtype=np.int64)
    np.add.at(sums, flat, numer.ravel())
    return cnt, sums


# -- deviance ----------------------------------------------------------------


@njit
def _deviant_mask_loop(labels, numer, cnt, sums, thr):
    h, w = labels.shape
    out = np.zeros((h, w), dtype=np.bool_)
    for y in range(h):
        for x in range(w):
            lab = labels[y, x]
            c = cnt[lab]
            out[y, x] = float(abs(numer[y, x] * c - sums[lab])) > thr * c
    return out


def _deviant_mask_numpy(labels, numer, cnt, sums, thr):
    c = cnt[labels]
    return np.abs(numer * c - sums[labels]).astype(np.float64) > thr * c


# -- refinement sweep --------------------------------------------------------


@njit
def _nearest_neighbor_region(labels, cnt, sums, y, x, own, v):
    # 4-neighbor region (other than own) whose mean is nearest to v; ties: lower label
    h, w = labels.shape
    best = -1
    best_d = np.inf
    for j in range(4):
        ny = y + (-1, 0, 0, 1)[j]
        nx = x + (0, -1, 1, 0)[j]
        if ny < 0 or ny >= h or nx < 0 or nx >= w:
            continue
        lab = labels[ny, nx]
        if lab == own:
            continue
        cl = cnt[lab]
        d = float(abs(v * cl - sums[lab])) / cl
        if d < best_d or (d == best_d and lab < best):
            best = lab
            best_d = d
    return best, best_d


@njit
def _polish_gain(v, own, best, best_d, cnt, sums, thr):
    # True when moving a non-deviant pixel to ``best`` lowers the summed
    # squared deviation of the two regions and keeps it within thr there
    if best < 0 or best_d > thr:
        return False
    ca = cnt[own]
    if ca < 2:
        return False
    da = float(abs(v * ca - sums[own])) / ca
    cb = cnt[best]
    return cb * best_d * best_d / (cb + 1) < ca * da * da / (ca - 1)


@njit
def _polish_mask_loop(labels, numer, cnt, sums, thr):
    h, w = labels.shape
    out = np.zeros((h, w), dtype=np.bool_)
    for y in range(h):
        for x in range(w):
            own = labels[y, x]
            v = numer[y, x]
            best, best_d = _nearest_neighbor_region(labels, cnt, sums, y, x, own, v)
            out[y, x] = _polish_gain(v, own, best, best_d, cnt, sums, thr)
    return out


@njit
def _reassign_pass_loop(labels, numer, cnt, sums, order, thr, polish):
    """One raster-order pass over candidate pixels with live statistics.

    A pixel that still deviates from its region mean by more than ``thr``
    moves to the nearest-mean 4-neighbor region when that mean is within
    ``thr``, and is returned as a seed otherwise. With ``polish`` set, a
    non-deviant pixel moves when that lowers the two regions' summed
    squared deviation. ``labels``, ``cnt`` and ``sums`` are updated in place.
    """
    w = labels.shape[1]
    seeds = np.empty(order.shape[0], dtype=np.int64)
    n_seeds = 0
    for k in range(order.shape[0]):
        p = order[k]
        y = p // w
        x = p - y * w
        own = labels[y, x]
        v = numer[y, x]
        c = cnt[own]
        deviant = float(abs(v * c - sums[own])) > thr * c
        if not deviant and not polish:
            continue
        best, best_d = _nearest_neighbor_region(labels, cnt, sums, y, x, own, v)
        if deviant:
            move = best >= 0 and float(abs(v * cnt[best] - sums[best])) <= thr * cnt[best]
            if not move:
                seeds[n_seeds] = p
                n_seeds += 1
        else:
            move = _polish_gain(v, own, best, best_d, cnt, sums, thr)
        if move:
            cnt[own] -= 1
            sums[own] -= v
            cnt[best] += 1
            sums[best] += v
            labels[y, x] = best
    return seeds[:n_seeds]


@njit
def _move_pixels_loop(labels, numer, cnt, sums, flat_idx, new_labels):
    w = labels.shape[1]
    for k in range(flat_idx.shape[0]):
        p = flat_idx[k]
        y = p // w
        x = p - y * w
        old = labels[y, x]
        new = new_labels[k]
        v = numer[y, x]
        cnt[old] -= 1
        sums[old] -= v
        cnt[new] += 1
        sums[new] += v
        labels[y, x] = new


@njit
def _split_disconnected_loop(labels, numer, cnt, sums, next_label):
    """Give every extra 4-connected piece of a region a fresh label.

    The largest piece keeps the label (ties: the piece reached first in
    raster order); the others are relabeled in raster order of their first
    pixel. Returns the next unused label.
    """
    h, w = labels.shape
    comp, n = _cc_label_loop(labels)
    size = np.zeros(n, dtype=np.int64)
    owner = np.empty(n, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            c = comp[y, x]
            if size[c] == 0:
                owner[c] = labels[y, x]
            size[c] += 1
    keeper = np.full(cnt.shape[0], -1, dtype=np.int64)
    for c in range(n):
        lab = owner[c]
        k = keeper[lab]
        if k < 0 or size[c] > size[k]:
            keeper[lab] = c
    fresh = np.full(n, -1, dtype=np.int64)
    for c in range(n):
        if keeper[owner[c]] != c:
            fresh[c] = next_label
            next_label += 1
    for y in range(h):
        for x in range(w):
            c = comp[y, x]
            new = fresh[c]
            if new >= 0:
                old = labels[y, x]
                v = numer[y, x]
                cnt[old] -= 1
                sums[old] -= v
                cnt[new] += 1
                sums[new] += v
                labels[y, x] = new
    return next_label


@njit
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@njit
def _merge_coherent_loop(labels, numer, cnt, sums, thr):
    """Fuse adjacent regions whose union keeps every pixel within ``thr``
    of the union mean. Returns the number of merges.

    Candidate pairs are visited by increasing mean difference (ties: by
    label pair); the larger region survives (ties: lower label). Passes
    repeat until one makes no merge.
    """
    h, w = labels.shape
    n = cnt.shape[0]
    lo = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    keys = np.empty(2 * h * w, dtype=np.int64)
    nk = 0
    for y in range(h):
        for x in range(w):
            a = labels[y, x]
            v = numer[y, x]
            if v < lo[a]:
                lo[a] = v
            if v > hi[a]:
                hi[a] = v
            if x + 1 < w and labels[y, x + 1] != a:
                b = labels[y, x + 1]
                keys[nk] = min(a, b) * n + max(a, b)
                nk += 1
            if y + 1 < h and labels[y + 1, x] != a:
                b = labels[y + 1, x]
                keys[nk] = min(a, b) * n + max(a, b)
                nk += 1
    if nk == 0:
        return 0
    pairs = np.unique(keys[:nk])
    parent = np.arange(n)
    merges = 0
    while True:
        m = pairs.shape[0]
        diff = np.empty(m, dtype=np.float64)
        for i in range(m):
            a = _find(parent, pairs[i] // n)
            b = _find(parent, pairs[i] % n)
            if a == b:
                diff[i] = np.inf
            else:
                diff[i] = abs(sums[a] / cnt[a] - sums[b] / cnt[b])
        order = np.argsort(diff, kind="mergesort")
        merged = 0
        for i in order:
            if diff[i] == np.inf:
                break
            a = _find(parent, pairs[i] // n)
            b = _find(parent, pairs[i] % n)
            if a == b:
                continue
            c = cnt[a] + cnt[b]
            s = sums[a] + sums[b]
            mn = min(lo[a], lo[b])
            mx = max(hi[a], hi[b])
            if float(abs(mx * c - s)) > thr * c or float(abs(mn * c - s)) > thr * c:
                continue
            if cnt[b] > cnt[a] or (cnt[b] == cnt[a] and b < a):
                a, b = b, a
            parent[b] = a
            cnt[a] = c
            sums[a] = s
            lo[a] = mn
            hi[a] = mx
            cnt[b] = 0
            sums[b] = 0
            merged += 1
        merges += merged
        if merged == 0:
            break
    if merges:
        for y in range(h):
            for x in range(w):
                labels[y, x] = _find(parent, labels[y, x])
    return merges


if USE_NUMBA:
    block_sum2x2 = _block_sum2x2_loop
    cc_label = _cc_label_loop
    cluster_sorted = _cluster_sorted_loop
    region_stats = _region_stats_loop
    deviant_mask = _deviant_mask_loop
    reassign_pass = _reassign_pass_loop
    split_disconnected = _split_disconnected_loop
    cluster_groups = _cluster_groups_loop
    move_pixels = _move_pixels_loop
    merge_coherent = _merge_coherent_loop
    polish_mask = _polish_mask_loop
else:
    block_sum2x2 = _block_sum2x2_numpy
    cc_label = _cc_label_loop.py_func
    cluster_sorted = _cluster_sorted_loop.py_func
    region_stats = _region_stats_numpy
    deviant_mask = _deviant_mask_numpy
    reassign_pass = _reassign_pass_loop.py_func
    split_disconnected = _split_disconnected_loop.py_func
    cluster_groups = _cluster_groups_loop.py_func
    move_pixels = _move_pixels_loop.py_func
    merge_coherent = _merge_coherent_loop.py_func
    polish_mask = _polish_mask_loop.py_func
