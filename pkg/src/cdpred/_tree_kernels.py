"""Numba kernels for exact-greedy tree construction and prediction.

The booster kernel grows one level at a time: node ids for a level are
contiguous, so a single pass over each presorted column evaluates every
candidate split of every node in that level. The forest kernel grows
depth-first with an explicit stack and per-node feature subsampling.
Candidate thresholds are midpoints between consecutive distinct sorted
values; ties break toward the lowest feature index, then lowest threshold,
via ascending scan order with strictly-greater comparisons. Each feature's
winning candidate is re-summed in ascending row order before the
cross-feature comparison, so features that induce the same partition yield
bitwise-equal gains and the tie rule is exact rather than at the mercy of
accumulation-order rounding.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _soft_threshold_weight(G, H, lam, alpha):
    mag = abs(G) - alpha
    if mag <= 0.0:
        return 0.0
    w = mag / (H + lam)
    return -w if G > 0.0 else w


@njit(cache=True)
def build_boost_tree(X, sort_idx_t, g, h, in_tree, col_idx,
                     max_depth, lam, alpha, gamma, min_child_weight):
    """Grow one second-order regression tree; returns flat node arrays.

    in_tree marks the subsampled rows; col_idx lists usable features in
    ascending order. A node splits only when some candidate has gain > 0 and
    both children carry at least min_child_weight total hessian.
    """
    n = X.shape[0]
    cap = 2
    for _ in range(max_depth):
        cap *= 2
        if cap > 2 * n + 2:
            cap = 2 * n + 2
            break

    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    gain_arr = np.zeros(cap)
    node_g = np.zeros(cap)
    node_h = np.zeros(cap)

    node_of = np.full(n, -1, np.int64)
    for r in range(n):
        if in_tree[r]:
            node_of[r] = 0
            node_g[0] += g[r]
            node_h[0] += h[r]
    n_nodes = 1

    best_gain = np.zeros(cap)
    best_feat = np.full(cap, -1, np.int64)
    best_thr = np.zeros(cap)
    run_g = np.zeros(cap)
    run_h = np.zeros(cap)
    run_c = np.zeros(cap, np.int64)
    prev_v = np.zeros(cap)
    fb_has = np.zeros(cap, np.bool_)
    fb_gain = np.zeros(cap)
    fb_thr = np.zeros(cap)
    c_gl = np.zeros(cap)
    c_hl = np.zeros(cap)
    c_gr = np.zeros(cap)
    c_hr = np.zeros(cap)

    lvl_lo = 0
    lvl_hi = 1
    depth = 0
    while depth < max_depth and lvl_lo < lvl_hi:
        for nid in range(lvl_lo, lvl_hi):
            best_gain[nid] = 0.0
            best_feat[nid] = -1

        for ci in range(col_idx.shape[0]):
            f = col_idx[ci]
            for nid in range(lvl_lo, lvl_hi):
                run_g[nid] = 0.0
                run_h[nid] = 0.0
                run_c[nid] = 0
                fb_has[nid] = False
                fb_gain[nid] = 0.0
            n_cand = 0
            for k in range(n):
                r = sort_idx_t[f, k]
                nid = node_of[r]
                if nid < lvl_lo or nid >= lvl_hi:
                    continue
                v = X[r, f]
                if run_c[nid] > 0 and v > prev_v[nid]:
                    GL = run_g[nid]
                    HL = run_h[nid]
                    GR = node_g[nid] - GL
                    HR = node_h[nid] - HL
                    if HL >= min_child_weight and HR >= min_child_weight:
                        gain = 0.5 * (GL * GL / (HL + lam)
                                      + GR * GR / (HR + lam)
                                      - (GL + GR) * (GL + GR) / (HL + HR + lam)) - gamma
                        if gain > fb_gain[nid]:
                            if not fb_has[nid]:
                                fb_has[nid] = True
                                n_cand += 1
                            fb_gain[nid] = gain
                            fb_thr[nid] = 0.5 * (prev_v[nid] + v)
                run_g[nid] += g[r]
                run_h[nid] += h[r]
                run_c[nid] += 1
                prev_v[nid] = v
            if n_cand == 0:
                continue
            # canonical re-summation only matters when this feature could
            # displace the incumbent; scan gains sit within ~1e-12 relative
            # of canonical ones, so a 1e-6 relative margin cannot drop a
            # genuine winner
            n_active = 0
            for nid in range(lvl_lo, lvl_hi):
                if fb_has[nid]:
                    if fb_gain[nid] < best_gain[nid] - 1e-6 * (best_gain[nid] + 1.0):
                        fb_has[nid] = False
                    else:
                        n_active += 1
            if n_active == 0:
                continue
            for nid in range(lvl_lo, lvl_hi):
                c_gl[nid] = 0.0
                c_hl[nid] = 0.0
                c_gr[nid] = 0.0
                c_hr[nid] = 0.0
            for r in range(n):
                nid = node_of[r]
                if nid < lvl_lo or nid >= lvl_hi or not fb_has[nid]:
                    continue
                if X[r, f] < fb_thr[nid]:
                    c_gl[nid] += g[r]
                    c_hl[nid] += h[r]
                else:
                    c_gr[nid] += g[r]
                    c_hr[nid] += h[r]
            for nid in range(lvl_lo, lvl_hi):
                if not fb_has[nid]:
                    continue
                GL = c_gl[nid]
                HL = c_hl[nid]
                GR = c_gr[nid]
                HR = c_hr[nid]
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                GS = GL + GR
                gain = 0.5 * (GL * GL / (HL + lam)
                              + GR * GR / (HR + lam)
                              - GS * GS / (HL + HR + lam)) - gamma
                if gain > best_gain[nid]:
                    best_gain[nid] = gain
                    best_feat[nid] = f
                    best_thr[nid] = fb_thr[nid]

        new_lo = n_nodes
        for nid in range(lvl_lo, lvl_hi):
            if best_feat[nid] >= 0:
                feature[nid] = best_feat[nid]
                threshold[nid] = best_thr[nid]
                gain_arr[nid] = best_gain[nid]
                left[nid] = n_nodes
                right[nid] = n_nodes + 1
                n_nodes += 2
            else:
                value[nid] = _soft_threshold_weight(node_g[nid], node_h[nid], lam, alpha)
        for r in range(n):
            nid = node_of[r]
            if lvl_lo <= nid < lvl_hi and feature[nid] >= 0:
                child = left[nid] if X[r, feature[nid]] < threshold[nid] else right[nid]
                node_of[r] = child
                node_g[child] += g[r]
                node_h[child] += h[r]
        lvl_lo = new_lo
        lvl_hi = n_nodes
        depth += 1

    for nid in range(lvl_lo, lvl_hi):
        value[nid] = _soft_threshold_weight(node_g[nid], node_h[nid], lam, alpha)

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), gain_arr[:n_nodes].copy())


@njit(cache=True)
def tree_predict_add(feature, threshold, left, right, value, X, out, scale):
    """Route every row of X to its leaf and add scale * leaf value to out."""
    for i in range(X.shape[0]):
        nid = 0
        while feature[nid] >= 0:
            if X[i, feature[nid]] < threshold[nid]:
                nid = left[nid]
            else:
                nid = right[nid]
        out[i] += scale * value[nid]


@njit(cache=True)
def build_gini_tree(X, y, boot_idx, max_depth, min_samples_leaf, max_features,
                    tree_seed):
    """Grow one Gini CART tree on bootstrap rows; returns flat node arrays.

    Leaf values store the class-1 frequency of the routed training rows.
    Feature subsets are drawn per node without replacement from the kernel's
    own seeded stream, so every tree is a pure function of its inputs.
    """
    np.random.seed(tree_seed)
    n = boot_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 2

    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    gain_arr = np.zeros(cap)

    idx = boot_idx.copy()
    scratch = np.empty(n, np.int64)
    perm = np.empty(d, np.int64)

    stack_s = np.empty(cap, np.int64)
    stack_e = np.empty(cap, np.int64)
    stack_d = np.empty(cap, np.int64)
    stack_n = np.empty(cap, np.int64)
    top = 0
    stack_s[0] = 0
    stack_e[0] = n
    stack_d[0] = 0
    stack_n[0] = 0
    top = 1
    n_nodes = 1

    kf = max_features if max_features < d else d

    while top > 0:
        top -= 1
        s = stack_s[top]
        e = stack_e[top]
        depth = stack_d[top]
        nid = stack_n[top]
        m = e - s

        pos = 0
        for i in range(s, e):
            pos += y[idx[i]]
        value[nid] = pos / m

        if depth >= max_depth or m < 2 * min_samples_leaf or pos == 0 or pos == m:
            continue

        for j in range(d):
            perm[j] = j
        for j in range(kf):
            swap = j + np.random.randint(0, d - j)
            tmp = perm[j]
            perm[j] = perm[swap]
            perm[swap] = tmp
        feats = np.sort(perm[:kf])

        pm = pos / m
        parent_imp = 1.0 - pm * pm - (1.0 - pm) * (1.0 - pm)

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        vals = np.empty(m)
        for fi in range(kf):
            f = feats[fi]
            for i in range(m):
                vals[i] = X[idx[s + i], f]
            order = np.argsort(vals, kind="mergesort")
            left_pos = 0
            for i in range(m - 1):
                left_pos += y[idx[s + order[i]]]
                v = vals[order[i]]
                nxt = vals[order[i + 1]]
                nl = i + 1
                nr = m - nl
                if nxt > v and nl >= min_samples_leaf and nr >= min_samples_leaf:
                    pl = left_pos / nl
                    pr = (pos - left_pos) / nr
                    child_imp = (nl * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl))
                                 + nr * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr))) / m
                    gain = parent_imp - child_imp
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_thr = 0.5 * (v + nxt)

        if best_f < 0:
            continue

        nl_count = 0
        for i in range(s, e):
            if X[idx[i], best_f] < best_thr:
                scratch[nl_count] = idx[i]
                nl_count += 1
        nr_start = nl_count
        for i in range(s, e):
            if not (X[idx[i], best_f] < best_thr):
                scratch[nr_start] = idx[i]
                nr_start += 1
        for i in range(m):
            idx[s + i] = scratch[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[nid] = best_f
        threshold[nid] = best_thr
        left[nid] = lid
        right[nid] = rid
        gain_arr[nid] = best_gain

        stack_s[top] = s + nl_count
        stack_e[top] = e
        stack_d[top] = depth + 1
        stack_n[top] = rid
        top += 1
        stack_s[top] = s
        stack_e[top] = s + nl_count
        stack_d[top] = depth + 1
        stack_n[top] = lid
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), gain_arr[:n_nodes].copy())
