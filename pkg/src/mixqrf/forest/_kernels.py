"""Compiled inner loops for tree growing and forest queries."""

import numpy as np
from numba import njit

# cumulative-weight slack when inverting the step CDF
CDF_TOL = 1e-12


@njit(cache=True, nogil=True)
def build_tree(X, y, w, cnt, idx, mtry, min_node_size, max_depth, keys):
    """Grow one CART regression tree on the rows ``idx``.

    ``w`` holds per-row weights (bootstrap multiplicity times case weight)
    and ``cnt`` the bootstrap multiplicity used for node-size rules.
    ``keys`` is an ``(n_nodes_max, p)`` matrix of uniforms used to draw the
    ``mtry`` candidate features of each node; it is ignored when
    ``mtry >= p``.
    """
    m = idx.shape[0]
    p = X.shape[1]
    max_nodes = 2 * m + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)

    order = idx.copy()
    tmp = np.empty(m, dtype=np.int64)
    all_feats = np.arange(p)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)
    stack_node[0] = 0
    stack_depth[0] = 0
    start[0] = 0
    end[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        depth = stack_depth[top]
        s = start[node]
        e = end[node]

        size = 0
        W = 0.0
        Sy = 0.0
        for j in range(s, e):
            i = order[j]
            size += cnt[i]
            W += w[i]
            Sy += w[i] * y[i]
        if size < 2 * min_node_size or W <= 0.0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        ybar = Sy / W
        sse = 0.0
        for j in range(s, e):
            i = order[j]
            sse += w[i] * (y[i] - ybar) ** 2
        if not sse > 0.0:
            continue

        if mtry >= p:
            feats = all_feats
        else:
            feats = np.sort(np.argsort(keys[node])[:mtry])

        seg = order[s:e]
        nseg = e - s
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        vals = np.empty(nseg)
        for f in feats:
            for j in range(nseg):
                vals[j] = X[seg[j], f]
            o = np.argsort(vals, kind="mergesort")
            SL = 0.0
            WL = 0.0
            NL = 0
            for j in range(nseg - 1):
                i = seg[o[j]]
                SL += w[i] * (y[i] - ybar)
                WL += w[i]
                NL += cnt[i]
                v = vals[o[j]]
                vn = vals[o[j + 1]]
                if not vn > v:
                    continue
                if NL < min_node_size or size - NL < min_node_size:
                    continue
                WR = W - WL
                if WL <= 0.0 or WR <= 1e-14 * W:
                    continue
                gain = SL * SL * (1.0 / WL + 1.0 / WR)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (v + vn)
                    if not thr < vn:
                        thr = v
                    best_thr = thr
        if best_f < 0 or not best_gain > 1e-12 * sse:
            continue

        nl = 0
        for j in range(s, e):
            i = order[j]
            if X[i, best_f] <= best_thr:
                tmp[nl] = i
                nl += 1
        nr = nl
        for j in range(s, e):
            i = order[j]
            if not X[i, best_f] <= best_thr:
                tmp[nr] = i
                nr += 1
        for j in range(nseg):
            order[s + j] = tmp[j]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        start[lc] = s
        end[lc] = s + nl
        start[rc] = s + nl
        end[rc] = e
        stack_node[top] = rc
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            start[:n_nodes].copy(), end[:n_nodes].copy(), order)


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@njit(cache=True, nogil=True)
def _accumulate(acc, q, leaves, mask, use_mask, node_offset, leaf_start,
                leaf_end, order_offset, order_idx, order_w, node_w, rank):
    B = leaves.shape[1]
    used = 0
    for b in range(B):
        if use_mask and not mask[q, b]:
            continue
        node = node_offset[b] + leaves[q, b]
        tot = node_w[node]
        if not tot > 0.0:
            continue
        used += 1
        base = order_offset[b]
        for j in range(base + leaf_start[node], base + leaf_end[node]):
            acc[rank[order_idx[j]]] += order_w[j] / tot
    return used


@njit(cache=True, nogil=True)
def forest_weights(leaves, mask, use_mask, node_offset, leaf_start, leaf_end,
                   order_offset, order_idx, order_w, node_w, rank, n_train):
    """Per-query weights on training outcomes, indexed by sorted rank."""
    nq = leaves.shape[0]
    out = np.zeros((nq, n_train))
    for q in range(nq):
        used = _accumulate(out[q], q, leaves, mask, use_mask, node_offset,
                           leaf_start, leaf_end, order_offset, order_idx,
                           order_w, node_w, rank)
        if used > 0:
            out[q] /= used
    return out


@njit(cache=True, nogil=True)
def forest_quantiles(leaves, mask, use_mask, node_offset, leaf_start,
                     leaf_end, order_offset, order_idx, order_w, node_w, rank,
                     y_sorted, taus):
    """Generalised inverse ``inf{y : F(y|x) >= tau}`` for every query row.

    ``taus`` must be sorted ascending. Rows without any usable tree (for
    example, never out-of-bag) get NaN.
    """
    nq = leaves.shape[0]
    n = y_sorted.shape[0]
    nt = taus.shape[0]
    out = np.full((nq, nt), np.nan)
    acc = np.zeros(n)
    for q in range(nq):
        acc[:] = 0.0
        used = _accumulate(acc, q, leaves, mask, use_mask, node_offset,
                           leaf_start, leaf_end, order_offset, order_idx,
                           order_w, node_w, rank)
        if used == 0:
            continue
        cum = 0.0
        t = 0
        last = -1
        for k in range(n):
            if acc[k] <= 0.0:
                continue
            cum += acc[k] / used
            last = k
            while t < nt and cum >= taus[t] - CDF_TOL:
                out[q, t] = y_sorted[k]
                t += 1
            if t == nt:
                break
        while t < nt:
            out[q, t] = y_sorted[last]
            t += 1
    return out
