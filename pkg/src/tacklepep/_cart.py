"""Numba kernels for CART regression trees.

Trees are stored as flat node arrays. A node is a leaf when ``feature < 0``;
internal nodes route ``x[feature] <= threshold`` to ``left``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow_tree(XT, y, sample_idx, mtry, min_node_size, rand_u):
    """Grow one tree on the multiset of rows ``sample_idx``.

    ``rand_u`` holds one row of uniforms per potential internal node and
    drives the without-replacement feature draw at that node.
    """
    n = sample_idx.shape[0]
    p = XT.shape[0]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    idx = sample_idx.copy()
    buf = np.empty(n, dtype=np.int64)
    perm = np.arange(p)
    xs = np.empty(n, dtype=np.float64)
    ys = np.empty(n, dtype=np.float64)

    # explicit stack of (node, start, end)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    top = 1
    n_nodes = 1
    n_draws = 0

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        m = end - start

        total = 0.0
        for i in range(start, end):
            total += y[idx[i]]
        mean = total / m
        value[node] = mean

        if m < 2 * min_node_size or n_draws >= rand_u.shape[0]:
            continue

        for j in range(mtry):
            r = j + int(rand_u[n_draws, j] * (p - j))
            if r >= p:
                r = p - 1
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
        n_draws += 1

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for j in range(mtry):
            f = perm[j]
            for i in range(m):
                xs[i] = XT[f, idx[start + i]]
            order = np.argsort(xs[:m])
            # centred responses make the gain exactly zero for constant nodes
            tot = 0.0
            for i in range(m):
                ys[i] = y[idx[start + order[i]]] - mean
                tot += ys[i]
            s_left = 0.0
            for i in range(m - 1):
                s_left += ys[i]
                n_left = i + 1
                if n_left < min_node_size:
                    continue
                if m - n_left < min_node_size:
                    break
                a = xs[order[i]]
                b = xs[order[i + 1]]
                if a == b:
                    continue
                s_right = tot - s_left
                gain = s_left * s_left / n_left + s_right * s_right / (m - n_left)
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr

        if best_feat < 0:
            continue

        # stable partition: x <= thr to the left
        n_l = 0
        for i in range(start, end):
            if XT[best_feat, idx[i]] <= best_thr:
                idx[start + n_l] = idx[i]
                n_l += 1
            else:
                buf[i - start - n_l] = idx[i]
        for i in range(m - n_l):
            idx[start + n_l + i] = buf[i]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is expanded first
        stack_node[top] = rc
        stack_start[top] = start + n_l
        stack_end[top] = end
        top += 1
        stack_node[top] = lc
        stack_start[top] = start
        stack_end[top] = start + n_l
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_trees(X, feature, threshold, left, right, value, offsets):
    """Per-tree leaf values, shape (n_rows, n_trees)."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees), dtype=np.float64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                k = base + node
                if X[i, feature[k]] <= threshold[k]:
                    node = left[k]
                else:
                    node = right[k]
            out[i, t] = value[base + node]
    return out
