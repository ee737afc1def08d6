"""Numba kernels for regression-tree growth, forests and boosting.

Randomness comes from a counter-based hash (splitmix64) keyed by
``(tree_key, node_id, slot)``, so a tree is fully determined by its key and
its inputs regardless of how trees are scheduled.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

BOOTSTRAP_STREAM = 1 << 40
SUBSAMPLE_STREAM = (1 << 40) + 1

LEAF = -1


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def uniform(key, a, b):
    z = mix64(key + _GOLDEN * np.uint64(a + 1))
    z = mix64(z ^ (np.uint64(b) * _M2 + _GOLDEN))
    return np.float64(z >> _S11) * _INV53


@njit(cache=True, inline="always")
def tree_key(key, t):
    return mix64(key ^ (_GOLDEN * np.uint64(t + 1)))


@njit(cache=True, nogil=True)
def grow_tree(X, r, sample_idx, max_depth, min_split, n_cand, random_split, l2, key,
              feature, threshold, left, right, value, gain):
    """Grow one tree depth-first on rows ``sample_idx`` of ``X`` with targets ``r``.

    Leaf value is sum(r) / (count + l2); split score is the matching
    regularised gain GL^2/(nL+l2) + GR^2/(nR+l2) - G^2/(n+l2), which for
    l2 = 0 is the sum-of-squares reduction. Rows go left when x <= threshold.
    Output arrays must hold 2 * len(sample_idx) - 1 nodes. Returns the node count.

    Exact mode keeps, per feature, the node's local positions sorted by that
    feature (ties by position) and stable-partitions every list on a split.
    """
    p = X.shape[1]
    m0 = sample_idx.shape[0]
    Xl = np.empty((m0, p))
    rl = np.empty(m0)
    for k in range(m0):
        rl[k] = r[sample_idx[k]]
        for f in range(p):
            Xl[k, f] = X[sample_idx[k], f]

    # row 0: positions in increasing order; row f + 1: positions sorted by feature f
    n_lists = 1 if random_split else p + 1
    S = np.empty((n_lists, m0), np.int64)
    for k in range(m0):
        S[0, k] = k
    if not random_split:
        for f in range(p):
            S[f + 1] = np.argsort(Xl[:, f], kind="mergesort")
    go_left = np.zeros(m0, np.bool_)
    buf = np.empty(m0, np.int64)

    cap = 2 * m0 + 2
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    cand = np.empty(p, np.int64)
    keys = np.empty(p)

    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m0
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        m = end - start

        members = S[0, start:end]
        G = 0.0
        SS = 0.0
        for k in range(m):
            v = rl[members[k]]
            G += v
            SS += v * v
        value[node] = G / (m + l2)
        feature[node] = LEAF
        threshold[node] = 0.0
        left[node] = LEAF
        right[node] = LEAF
        gain[node] = 0.0
        if depth >= max_depth or m < min_split or m < 2:
            continue

        if n_cand >= p:
            nc = p
            for f in range(p):
                cand[f] = f
        else:
            nc = n_cand
            for f in range(p):
                keys[f] = uniform(key, node, f)
            order = np.argsort(keys, kind="mergesort")
            chosen = np.sort(order[:nc])
            for c in range(nc):
                cand[c] = chosen[c]

        parent = G * G / (m + l2)
        best = 1e-12 * SS
        best_f = -1
        best_t = 0.0
        for c in range(nc):
            f = cand[c]
            if random_split:
                lo = np.inf
                hi = -np.inf
                for k in range(m):
                    x = Xl[members[k], f]
                    if x < lo:
                        lo = x
                    if x > hi:
                        hi = x
                if not hi > lo:
                    continue
                t = lo + uniform(key, node, p + f) * (hi - lo)
                if not t < hi:
                    continue
                GL = 0.0
                nL = 0
                for k in range(m):
                    if Xl[members[k], f] <= t:
                        GL += rl[members[k]]
                        nL += 1
                GR = G - GL
                nR = m - nL
                g = GL * GL / (nL + l2) + GR * GR / (nR + l2) - parent
                if g > best:
                    best = g
                    best_f = f
                    best_t = t
            else:
                GL = 0.0
                row = f + 1
                for k in range(start, end - 1):
                    GL += rl[S[row, k]]
                    a = Xl[S[row, k], f]
                    b = Xl[S[row, k + 1], f]
                    if a < b:
                        nL = k - start + 1
                        GR = G - GL
                        g = GL * GL / (nL + l2) + GR * GR / (m - nL + l2) - parent
                        if g > best:
                            best = g
                            best_f = f
                            t = a + 0.5 * (b - a)
                            best_t = t if t < b else a

        if best_f < 0:
            continue

        nL = 0
        for k in range(m):
            pos = S[0, start + k]
            go_left[pos] = Xl[pos, best_f] <= best_t
            if go_left[pos]:
                nL += 1
        if nL == 0 or nL == m:
            continue
        for row in range(n_lists):
            j = 0
            for k in range(start, end):
                if go_left[S[row, k]]:
                    buf[j] = S[row, k]
                    j += 1
            for k in range(start, end):
                if not go_left[S[row, k]]:
                    buf[j] = S[row, k]
                    j += 1
            for k in range(m):
                S[row, start + k] = buf[k]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lid
        right[node] = rid
        gain[node] = best

        st_node[top] = rid
        st_start[top] = start + nL
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lid
        st_start[top] = start
        st_end[top] = start + nL
        st_depth[top] = depth + 1
        top += 1

    return n_nodes


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while left[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def fit_forest(X, y, n_trees, max_depth, min_split, n_cand, random_split, bootstrap, key,
               feature, threshold, left, right, value, gain, counts):
    n = X.shape[0]
    idx = np.empty(n, np.int64)
    for t in range(n_trees):
        tk = tree_key(key, t)
        if bootstrap:
            for i in range(n):
                j = np.int64(uniform(tk, BOOTSTRAP_STREAM, i) * n)
                idx[i] = j if j < n else n - 1
        else:
            for i in range(n):
                idx[i] = i
        counts[t] = grow_tree(X, y, idx, max_depth, min_split, n_cand, random_split, 0.0, tk,
                              feature[t], threshold[t], left[t], right[t], value[t], gain[t])


@njit(cache=True, nogil=True)
def fit_boost(X, y, n_rounds, max_depth, learning_rate, n_sub, l2, key,
              feature, threshold, left, right, value, gain, counts, loss):
    """Squared-error boosting; returns the base prediction (mean of y).

    ``loss[t]`` receives the training MSE after round t.
    """
    n = X.shape[0]
    p = X.shape[1]
    base = 0.0
    for i in range(n):
        base += y[i]
    base /= n
    F = np.full(n, base)
    r = np.empty(n)
    keys = np.empty(n)
    idx_all = np.arange(n)
    for t in range(n_rounds):
        for i in range(n):
            r[i] = y[i] - F[i]
        tk = tree_key(key, t)
        if n_sub >= n:
            idx = idx_all
        else:
            for i in range(n):
                keys[i] = uniform(tk, SUBSAMPLE_STREAM, i)
            idx = np.sort(np.argsort(keys, kind="mergesort")[:n_sub])
        counts[t] = grow_tree(X, r, idx, max_depth, 2, p, False, l2, tk,
                              feature[t], threshold[t], left[t], right[t], value[t], gain[t])
        step = predict_tree(X, feature[t], threshold[t], left[t], right[t], value[t])
        mse = 0.0
        for i in range(n):
            F[i] += learning_rate * step[i]
            d = y[i] - F[i]
            mse += d * d
        loss[t] = mse / n
    return base
