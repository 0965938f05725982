"""Histogram tree growing kernels shared by every tree learner.

Features are pre-binned to small integer codes; a split ``(f, b)`` sends a
row left when ``codes[row, f] <= b``.  Three split criteria are supported:

``NEWTON``
    stats = (gradient, hessian); gain = G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l).
    Squared-error regression uses gradient = -y, hessian = 1.
``CAUSAL_CENTERED``
    stats = (w_resid, y_resid, w); child effect = sum(w_r y_r) / sum(w_r^2).
``CAUSAL_ARMS``
    stats = (w, y); child effect = mean(y | w=1) - mean(y | w=0).

Both causal criteria maximise ``n_L n_R / n_P^2 * (tau_L - tau_R)^2`` and
require every child to contain both treatment arms.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEWTON = 0
CAUSAL_CENTERED = 1
CAUSAL_ARMS = 2

_EPS = 1e-12


@njit(cache=True, nogil=True)
def _child_effect(kind, a0, a1, a2, cnt):
    """Returns (effect, valid) for summed child statistics."""
    if kind == CAUSAL_CENTERED:
        # a0 = sum w_r^2, a1 = sum w_r y_r, a2 = treated count
        if a2 < 1 or cnt - a2 < 1 or a0 <= _EPS:
            return 0.0, False
        return a1 / a0, True
    # CAUSAL_ARMS: a0 = treated count, a1 = treated y sum, a2 = control y sum
    if a0 < 1 or cnt - a0 < 1:
        return 0.0, False
    return a1 / a0 - a2 / (cnt - a0), True


@njit(cache=True, nogil=True)
def _row_stats(kind, stats, r):
    if kind == NEWTON:
        return stats[r, 0], stats[r, 1], 0.0
    if kind == CAUSAL_CENTERED:
        wr = stats[r, 0]
        return wr * wr, wr * stats[r, 1], stats[r, 2]
    w = stats[r, 0]
    y = stats[r, 1]
    return w, w * y, (1.0 - w) * y


@njit(cache=True, nogil=True)
def _best_split(kind, codes, n_bins, rows, start, end, stats, feats, min_leaf, reg_lambda):
    """Best (feature, bin, score) for the node ``rows[start:end]``.

    Features are scanned in ascending order and bins ascending; only a
    strictly better score replaces the incumbent, which breaks ties towards
    the lowest feature index and then the lowest threshold.
    """
    n_node = end - start
    nf = feats.shape[0]
    max_bins = 0
    for f in feats:
        if n_bins[f] > max_bins:
            max_bins = n_bins[f]
    hist = np.zeros((nf, max_bins, 4))

    tot0 = 0.0
    tot1 = 0.0
    tot2 = 0.0
    # Row-major pass with bin 0 skipped: one-hot columns are mostly zero, and
    # bin 0 is recovered below as node total minus the other bins.
    for i in range(start, end):
        r = rows[i]
        s0, s1, s2 = _row_stats(kind, stats, r)
        tot0 += s0
        tot1 += s1
        tot2 += s2
        for k in range(nf):
            b = codes[r, feats[k]]
            if b != 0:
                hist[k, b, 0] += s0
                hist[k, b, 1] += s1
                hist[k, b, 2] += s2
                hist[k, b, 3] += 1.0
    for k in range(nf):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        for b in range(1, n_bins[feats[k]]):
            a0 += hist[k, b, 0]
            a1 += hist[k, b, 1]
            a2 += hist[k, b, 2]
            a3 += hist[k, b, 3]
        hist[k, 0, 0] = tot0 - a0
        hist[k, 0, 1] = tot1 - a1
        hist[k, 0, 2] = tot2 - a2
        hist[k, 0, 3] = n_node - a3
    parent_score = 0.0
    if kind == NEWTON:
        parent_score = tot0 * tot0 / (tot1 + reg_lambda)

    best_f = -1
    best_b = -1
    best_score = 0.0
    for k in range(nf):
        f = feats[k]
        nb = n_bins[f]
        l0 = 0.0
        l1 = 0.0
        l2 = 0.0
        lc = 0.0
        for b in range(nb - 1):
            l0 += hist[k, b, 0]
            l1 += hist[k, b, 1]
            l2 += hist[k, b, 2]
            lc += hist[k, b, 3]
            if hist[k, b, 3] == 0.0:
                continue
            rc = n_node - lc
            if lc < min_leaf:
                continue
            if rc < min_leaf:
                break
            r0 = tot0 - l0
            r1 = tot1 - l1
            r2 = tot2 - l2
            if kind == NEWTON:
                score = l0 * l0 / (l1 + reg_lambda) + r0 * r0 / (r1 + reg_lambda) - parent_score
            else:
                tl, okl = _child_effect(kind, l0, l1, l2, lc)
                tr, okr = _child_effect(kind, r0, r1, r2, rc)
                if not (okl and okr):
                    continue
                score = lc * rc / (n_node * n_node) * (tl - tr) ** 2
            if score > best_score + _EPS:
                best_score = score
                best_f = f
                best_b = b
    return best_f, best_b, best_score


@njit(cache=True, nogil=True)
def _draw_features(p, mtry):
    if mtry >= p:
        return np.arange(p)
    perm = np.arange(p)
    for i in range(mtry):
        j = i + np.random.randint(p - i)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return np.sort(perm[:mtry])


@njit(cache=True, nogil=True)
def grow_tree(kind, codes, n_bins, rows, stats, max_depth, min_leaf, mtry, seed, reg_lambda):
    """Grow one tree on ``rows`` (which is permuted in place).

    Returns node arrays ``feature, threshold, left, right, parent, depth,
    start, end``; leaves have ``feature == -1`` and own ``rows[start:end]``.
    Nodes are numbered in creation order, so a parent always precedes its
    children.  ``max_depth < 0`` means unlimited.
    """
    np.random.seed(seed)
    n = rows.shape[0]
    p = codes.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    parent = np.full(cap, -1, np.int64)
    depth = np.zeros(cap, np.int64)
    nstart = np.zeros(cap, np.int64)
    nend = np.zeros(cap, np.int64)

    nstart[0] = 0
    nend[0] = n
    n_nodes = 1
    stack = np.empty(cap, np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s = nstart[node]
        e = nend[node]
        if (max_depth >= 0 and depth[node] >= max_depth) or e - s < 2 * min_leaf:
            continue
        feats = _draw_features(p, mtry)
        f, b, score = _best_split(kind, codes, n_bins, rows, s, e, stats, feats, min_leaf, reg_lambda)
        if f < 0:
            continue
        # partition rows[s:e] so that codes <= b come first
        i = s
        j = e - 1
        while i <= j:
            if codes[rows[i], f] <= b:
                i += 1
            else:
                tmp = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp
                j -= 1
        feature[node] = f
        threshold[node] = b
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        for c, cs, ce in ((lnode, s, i), (rnode, i, e)):
            parent[c] = node
            depth[c] = depth[node] + 1
            nstart[c] = cs
            nend[c] = ce
        # push right first so the left subtree is expanded first
        stack[top] = rnode
        stack[top + 1] = lnode
        top += 2
    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            parent[:k].copy(), depth[:k].copy(), nstart[:k].copy(), nend[:k].copy())


@njit(cache=True, nogil=True)
def apply_tree(codes, feature, threshold, left, right):
    """Leaf index reached by every row of ``codes``."""
    n = codes.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if codes[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def apply_forest(codes, feature, threshold, left, right, offsets):
    """Leaf index per (row, tree) for trees packed back to back.

    Tree ``t`` occupies nodes ``offsets[t]:offsets[t+1]``; child pointers
    are local to the tree.  Returned indices are global (offset added).
    """
    n = codes.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees), np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if codes[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[i, t] = base + node
    return out


@njit(cache=True, nogil=True)
def newton_leaf_update(rows, feature, nstart, nend, grad, hess, reg_lambda, shrink, score):
    """Set leaf values ``-shrink * G / (H + lambda)`` and add them to ``score``.

    Returns the value array over all nodes (zero for internal nodes).
    """
    k = feature.shape[0]
    value = np.zeros(k)
    for node in range(k):
        if feature[node] >= 0:
            continue
        g = 0.0
        h = 0.0
        for i in range(nstart[node], nend[node]):
            r = rows[i]
            g += grad[r]
            h += hess[r]
        v = -shrink * g / (h + reg_lambda)
        value[node] = v
        for i in range(nstart[node], nend[node]):
            score[rows[i]] += v
    return value


@njit(cache=True, nogil=True)
def forest_sum(codes, feature, threshold, left, right, value, offsets):
    """Sum over trees of the leaf value reached by each row."""
    n = codes.shape[0]
    out = np.zeros(n)
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if codes[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[i] += value[base + node]
    return out


@njit(cache=True, nogil=True)
def forest_mean_excluding(codes, feature, threshold, left, right, value, offsets, exclude):
    """Per-row mean leaf value over trees with ``exclude[t, i] == 0``.

    Also returns how many trees scored each row.
    """
    n = codes.shape[0]
    total = np.zeros(n)
    count = np.zeros(n, np.int64)
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        for i in range(n):
            if exclude[t, i]:
                continue
            node = 0
            while feature[base + node] >= 0:
                if codes[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            total[i] += value[base + node]
            count[i] += 1
    out = np.full(n, np.nan)
    for i in range(n):
        if count[i] > 0:
            out[i] = total[i] / count[i]
    return out, count


@njit(cache=True, nogil=True)
def honest_node_values(kind, leaf_of_row, stats, rows, parent, fallback):
    """Node estimates from estimation rows, falling back to the parent.

    ``kind`` is ``NEWTON`` for plain means (stats[:, 0] = y) or one of the
    causal criteria.  A node whose estimation rows cannot support an
    estimate inherits its parent's value; the root falls back to
    ``fallback``.
    """
    k = parent.shape[0]
    acc = np.zeros((k, 4))
    for i in range(rows.shape[0]):
        r = rows[i]
        node = leaf_of_row[i]
        if kind == NEWTON:
            acc[node, 0] += stats[r, 0]
        else:
            s0, s1, s2 = _row_stats(kind, stats, r)
            acc[node, 0] += s0
            acc[node, 1] += s1
            acc[node, 2] += s2
        acc[node, 3] += 1.0
    for node in range(k - 1, 0, -1):
        for c in range(4):
            acc[parent[node], c] += acc[node, c]
    value = np.empty(k)
    for node in range(k):
        if kind == NEWTON:
            ok = acc[node, 3] > 0
            v = acc[node, 0] / acc[node, 3] if ok else 0.0
        else:
            v, ok = _child_effect(kind, acc[node, 0], acc[node, 1], acc[node, 2], acc[node, 3])
        if ok:
            value[node] = v
        elif node == 0:
            value[node] = fallback
        else:
            value[node] = value[parent[node]]
    return value, acc[:, 3].copy()
