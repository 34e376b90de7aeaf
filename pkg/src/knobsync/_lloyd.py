# Compiled Lloyd iterations for complete and partially observed data.
# The two kernels share loop order and accumulation order so that a fully
# observed mask reproduces the complete-data result bit for bit.

import numpy as np
from numba import njit, prange

MAX_ITER = 1000
REL_TOL = 1e-12


@njit(cache=True)
def _assign(x, mask, use_mask, centers, labels, dist):
    n, p = x.shape
    k_count = centers.shape[0]
    changed = 0
    for i in range(n):
        best = np.inf
        bk = 0
        for k in range(k_count):
            d = 0.0
            for j in range(p):
                if use_mask and not mask[i, j]:
                    continue
                diff = x[i, j] - centers[k, j]
                d += diff * diff
            if d < best:
                best = d
                bk = k
        if labels[i] != bk:
            changed += 1
            labels[i] = bk
        dist[i] = best
    return changed


@njit(cache=True)
def _repair_empty(x, mask, use_mask, centers, labels, dist):
    # Farthest-point reseeding: the observation farthest from its own centroid,
    # taken from a cluster with at least two members, becomes a singleton.
    n, p = x.shape
    k_count = centers.shape[0]
    counts = np.zeros(k_count, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    moved = 0
    for k in range(k_count):
        if counts[k] > 0:
            continue
        far = -1
        far_d = -1.0
        for i in range(n):
            if counts[labels[i]] > 1 and dist[i] > far_d:
                far_d = dist[i]
                far = i
        counts[labels[far]] -= 1
        counts[k] = 1
        labels[far] = k
        dist[far] = 0.0
        for j in range(p):
            if not use_mask or mask[far, j]:
                centers[k, j] = x[far, j]
        moved += 1
    return moved


@njit(cache=True)
def _update(x, mask, use_mask, centers, labels):
    n, p = x.shape
    k_count = centers.shape[0]
    sums = np.zeros((k_count, p))
    cnt = np.zeros((k_count, p))
    for i in range(n):
        k = labels[i]
        for j in range(p):
            if use_mask and not mask[i, j]:
                continue
            sums[k, j] += x[i, j]
            cnt[k, j] += 1.0
    for k in range(k_count):
        for j in range(p):
            if cnt[k, j] > 0:
                centers[k, j] = sums[k, j] / cnt[k, j]


@njit(cache=True)
def _wss(x, mask, use_mask, centers, labels):
    n, p = x.shape
    total = 0.0
    for i in range(n):
        k = labels[i]
        for j in range(p):
            if use_mask and not mask[i, j]:
                continue
            diff = x[i, j] - centers[k, j]
            total += diff * diff
    return total


@njit(cache=True)
def lloyd(x, mask, use_mask, centers, max_iter, wss_hist):
    """Run Lloyd iterations in place on ``centers``.

    Returns (labels, wss, iterations).  ``wss_hist[t]`` receives the objective
    after the t-th update step when the buffer is long enough.
    """
    n = x.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    dist = np.empty(n)
    prev = np.inf
    wss = np.inf
    it = 0
    while it < max_iter:
        changed = _assign(x, mask, use_mask, centers, labels, dist)
        changed += _repair_empty(x, mask, use_mask, centers, labels, dist)
        _update(x, mask, use_mask, centers, labels)
        wss = _wss(x, mask, use_mask, centers, labels)
        if it < wss_hist.shape[0]:
            wss_hist[it] = wss
        it += 1
        if changed == 0:
            break
        if prev < np.inf and abs(prev - wss) <= REL_TOL * prev:
            break
        prev = wss
    return labels, wss, it


@njit(cache=True, parallel=True)
def lloyd_many(x, mask, use_mask, init_centers, max_iter):
    """Objective value reached from each of ``init_centers.shape[0]`` starts."""
    s_count = init_centers.shape[0]
    out = np.empty(s_count)
    empty_hist = np.empty(0)
    for s in prange(s_count):
        c = init_centers[s].copy()
        _, w, _ = lloyd(x, mask, use_mask, c, max_iter, empty_hist)
        out[s] = w
    return out
