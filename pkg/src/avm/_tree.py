"""Compiled regression-tree kernels.

Trees are grown depth-first into flat node arrays. Split quality is the
decrease in sum of squared errors; among equal gains the lowest feature index
and then the lowest threshold win. Exhaustive splits put the threshold at the
largest sample value going left, so "x <= threshold" is preserved by any
strictly increasing transform of the feature.

Randomness inside the kernel (feature subsets, random thresholds) comes from
a SplitMix64 stream seeded per tree, so a tree depends only on its inputs and
its seed.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _uniform(state):
    """Uniform double in [0, 1)."""
    return np.float64(_next_u64(state) >> _S11) * _INV53


@njit(cache=True, nogil=True)
def _randint(state, n):
    i = np.int64(_uniform(state) * n)
    return min(i, n - 1)


@njit(cache=True, nogil=True)
def _best_exhaustive(X, y, idx, start, end, f, min_leaf, total):
    nn = end - start
    vals = np.empty(nn)
    ys = np.empty(nn)
    for i in range(nn):
        vals[i] = X[idx[start + i], f]
        ys[i] = y[idx[start + i]]
    order = np.argsort(vals, kind="mergesort")
    best = -np.inf
    thr = 0.0
    s_left = 0.0
    for i in range(nn - 1):
        s_left += ys[order[i]]
        v0 = vals[order[i]]
        v1 = vals[order[i + 1]]
        if v0 == v1:
            continue
        n_left = i + 1
        n_right = nn - n_left
        if n_left < min_leaf or n_right < min_leaf:
            continue
        s_right = total - s_left
        proxy = s_left * s_left / n_left + s_right * s_right / n_right
        if proxy > best:
            best = proxy
            # the largest left value, not the midpoint: a data value keeps
            # "x <= t" unchanged under any increasing feature transform
            thr = v0
    return best, thr


@njit(cache=True, nogil=True)
def _random_threshold(X, y, idx, start, end, f, min_leaf, total, lo, hi, rng):
    t = lo + _uniform(rng) * (hi - lo)
    if t >= hi:
        t = lo
    s_left = 0.0
    n_left = 0
    for i in range(start, end):
        j = idx[i]
        if X[j, f] <= t:
            s_left += y[j]
            n_left += 1
    nn = end - start
    n_right = nn - n_left
    if n_left < min_leaf or n_right < min_leaf or n_left == 0 or n_right == 0:
        return -np.inf, t
    s_right = total - s_left
    return s_left * s_left / n_left + s_right * s_right / n_right, t


@njit(cache=True, nogil=True)
def build_tree(X, y, sample_idx, max_depth, min_leaf, mtry, random_split, seed):
    """Grow one tree on the rows ``sample_idx`` (duplicates allowed).

    ``max_depth < 0`` means unlimited. ``mtry`` features are examined per
    node, drawn without replacement among those not constant in the node.
    ``random_split`` selects one uniform threshold per feature instead of the
    exhaustive search.

    Returns ``(feature, threshold, left, right, value, n_samples,
    improvement)``; leaves have ``feature == -1``.
    """
    n = sample_idx.shape[0]
    p = X.shape[1]
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = np.uint64(seed)
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_samples = np.zeros(cap, dtype=np.int64)
    improvement = np.zeros(cap)

    idx = sample_idx.copy()
    buf = np.empty(n, dtype=np.int64)
    feats = np.arange(p)
    cand = np.empty(p, dtype=np.int64)
    lo_f = np.empty(p)
    hi_f = np.empty(p)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    top = 1
    count = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        nn = end - start

        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        n_samples[node] = nn
        if ymin == ymax:
            value[node] = ymin
            continue
        value[node] = total / nn
        if nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        # candidate features: Fisher-Yates over all, keep the first mtry
        # that are not constant in this node
        for i in range(p):
            feats[i] = i
        n_cand = 0
        remaining = p
        while remaining > 0 and n_cand < mtry:
            if mtry >= p:
                k = p - remaining
            else:
                k = (p - remaining) + _randint(rng, remaining)
            f = feats[k]
            feats[k] = feats[p - remaining]
            feats[p - remaining] = f
            remaining -= 1
            lo = np.inf
            hi = -np.inf
            for i in range(start, end):
                v = X[idx[i], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi > lo:
                cand[n_cand] = f
                lo_f[f] = lo
                hi_f[f] = hi
                n_cand += 1
        if n_cand == 0:
            continue
        cs = np.sort(cand[:n_cand])

        best = -np.inf
        best_f = -1
        best_t = 0.0
        for c in range(n_cand):
            f = cs[c]
            if random_split:
                proxy, t = _random_threshold(X, y, idx, start, end, f, min_leaf, total, lo_f[f], hi_f[f], rng)
            else:
                proxy, t = _best_exhaustive(X, y, idx, start, end, f, min_leaf, total)
            if proxy > best:
                best = proxy
                best_f = f
                best_t = t
        if best_f < 0:
            continue

        # stable partition of idx[start:end]
        nl = 0
        nr = 0
        for i in range(start, end):
            j = idx[i]
            if X[j, best_f] <= best_t:
                idx[start + nl] = j
                nl += 1
            else:
                buf[nr] = j
                nr += 1
        for i in range(nr):
            idx[start + nl + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        improvement[node] = best - total * total / nn
        lnode = count
        rnode = count + 1
        count += 2
        left[node] = lnode
        right[node] = rnode
        mid = start + nl
        st_node[top] = rnode
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:count].copy(),
        threshold[:count].copy(),
        left[:count].copy(),
        right[:count].copy(),
        value[:count].copy(),
        n_samples[:count].copy(),
        improvement[:count].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
