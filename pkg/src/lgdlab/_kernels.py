"""Compiled inner loops for tree growth and prediction.

Rows are referenced by int32 index throughout. ``codes[f, row]`` is the rank of
``X[row, f]`` among the unique values of feature ``f``; ``orders[f]`` lists the
training rows sorted by that feature (stable) and ``sorted_codes[f]`` the codes
in that order. Exact greedy split search makes one pass per feature and level
over the presorted column, routing each row to its node through ``pos``, so
every distinct-value boundary inside a node is a candidate threshold.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def grow_tree(codes, orders, sorted_codes, uniq, uniq_offset, grad, sample_mask, feats,
              max_depth, min_child_weight, reg_lambda):
    """Grow one tree level by level; hessians are 1 (squared error)."""
    n = grad.shape[0]
    nf = feats.shape[0]
    m = 0
    for i in range(n):
        if sample_mask[i]:
            m += 1

    # sampled rows of each feature in ascending value order, with code and gradient
    # one spare slot per column lets the fill below run without branching
    crow = np.empty((nf, m + 1), dtype=np.int32)
    ccode = np.empty((nf, m + 1), dtype=np.int32)
    cgrad = np.empty((nf, m + 1), dtype=np.float64)
    for k in range(nf):
        f = feats[k]
        j = 0
        for i in range(n):
            row = orders[f, i]
            crow[k, j] = row
            ccode[k, j] = sorted_codes[f, i]
            cgrad[k, j] = grad[row]
            j += sample_mask[row]

    cap = 2 * m - 1 if m > 0 else 1
    if max_depth < 30:
        full = (1 << (max_depth + 1)) - 1
        if full < cap:
            cap = full
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int32)
    right = np.full(cap, LEAF, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    G = np.zeros(cap, dtype=np.float64)
    H = np.zeros(cap, dtype=np.float64)
    active = np.zeros(cap, dtype=np.bool_)
    parent_score = np.zeros(cap, dtype=np.float64)
    GL = np.zeros(cap, dtype=np.float64)
    HL = np.zeros(cap, dtype=np.int64)
    HN = np.zeros(cap, dtype=np.int64)
    last = np.zeros(cap, dtype=np.int32)
    best_gain = np.zeros(cap, dtype=np.float64)
    best_k = np.full(cap, -1, dtype=np.int64)
    best_code = np.zeros(cap, dtype=np.int32)
    best_thr = np.zeros(cap, dtype=np.float64)

    # hessians are unit, so hessian sums are row counts and 1 / (h + lambda) is tabulated
    inv = np.empty(m + 1, dtype=np.float64)
    for h in range(m + 1):
        inv[h] = 1.0 / (h + reg_lambda) if h + reg_lambda > 0.0 else 0.0

    pos = np.zeros(n, dtype=np.int32)
    for i in range(m):
        G[0] += cgrad[0, i]
    H[0] = m
    value[0] = -G[0] / (H[0] + reg_lambda)

    level = np.zeros(1, dtype=np.int64)
    n_level = 1
    if max_depth < 1 or m < 2:
        n_level = 0
    n_nodes = 1
    length = m
    depth = 0
    while n_level > 0:
        for j in range(n_level):
            node = level[j]
            active[node] = True
            HN[node] = int(H[node])
            parent_score[node] = G[node] * G[node] * inv[int(H[node])]
            best_gain[node] = 0.0
            best_k[node] = -1

        for k in range(nf):
            f = feats[k]
            off = uniq_offset[f]
            for j in range(n_level):
                node = level[j]
                GL[node] = 0.0
                HL[node] = 0
            for i in range(length):
                node = pos[crow[k, i]]
                if not active[node]:
                    continue
                c = ccode[k, i]
                hl = HL[node]
                if hl > 0 and c != last[node]:
                    hr = HN[node] - hl
                    if hl >= min_child_weight and hr >= min_child_weight:
                        gl = GL[node]
                        gr = G[node] - gl
                        gain = 0.5 * (gl * gl * inv[hl] + gr * gr * inv[hr] - parent_score[node])
                        if gain > best_gain[node]:
                            best_gain[node] = gain
                            best_k[node] = k
                            lc = last[node]
                            best_code[node] = lc
                            lo = uniq[off + lc]
                            hi = uniq[off + c]
                            thr = 0.5 * (lo + hi)
                            if thr <= lo:
                                thr = hi
                            best_thr[node] = thr
                GL[node] = GL[node] + cgrad[k, i]
                HL[node] = hl + 1
                last[node] = c

        depth += 1
        next_level = np.empty(2 * n_level, dtype=np.int64)
        n_next = 0
        any_split = False
        for j in range(n_level):
            node = level[j]
            active[node] = False
            if best_k[node] >= 0:
                any_split = True
                li = n_nodes
                ri = n_nodes + 1
                n_nodes += 2
                feature[node] = feats[best_k[node]]
                threshold[node] = best_thr[node]
                left[node] = li
                right[node] = ri
        if not any_split:
            break

        # route rows of split nodes to their children
        for i in range(length):
            row = crow[0, i]
            node = pos[row]
            if feature[node] != LEAF:
                f = feature[node]
                if codes[f, row] <= best_code[node]:
                    child = left[node]
                else:
                    child = right[node]
                pos[row] = child
                G[child] += cgrad[0, i]
                H[child] += 1.0

        for j in range(n_level):
            node = level[j]
            if feature[node] == LEAF:
                continue
            for child in (left[node], right[node]):
                value[child] = -G[child] / (H[child] + reg_lambda)
                if depth < max_depth and H[child] >= 2.0:
                    next_level[n_next] = child
                    n_next += 1
        level = next_level
        n_level = n_next
        if n_level == 0:
            break

        for j in range(n_level):
            active[level[j]] = True
        kept = 0
        for i in range(length):
            if active[pos[crow[0, i]]]:
                kept += 1
        if kept * 2 < length:
            for k in range(nf):
                w = 0
                for i in range(length):
                    if active[pos[crow[k, i]]]:
                        crow[k, w] = crow[k, i]
                        ccode[k, w] = ccode[k, i]
                        cgrad[k, w] = cgrad[k, i]
                        w += 1
            length = kept

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), H[:n_nodes].copy())


@njit(cache=True, nogil=True)
def tree_leaf_values(X, feature, threshold, left, right, value, root):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = root
        while feature[node] != LEAF:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def ensemble_leaf_matrix(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    k = roots.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        for t in range(k):
            node = roots[t]
            while feature[node] != LEAF:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = value[node]
    return out


@njit(cache=True, nogil=True)
def ensemble_predict(X, feature, threshold, left, right, value, roots, base_score, learning_rate):
    n = X.shape[0]
    k = roots.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for t in range(k):
            node = roots[t]
            while feature[node] != LEAF:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = base_score + learning_rate * acc
    return out
