"""Numba kernels for CART-style classification trees.

Everything here is deterministic given the per-tree seed: bootstrap draws,
candidate-variable sampling, and split search all consume one splitmix64
stream. Split quality is the count-weighted Gini decrease
delta = S_l/n_l + S_r/n_r - S_p/n_p  with  S = sum of squared class counts,
which equals n_p * Gini(parent) - n_l * Gini(left) - n_r * Gini(right).
Ties are broken toward the earlier candidate (variables are scanned in
ascending schema order, thresholds left to right, category masks in ascending
numeric order), so identical inputs always grow identical trees.

Categorical splits are encoded as uint64 bit masks over category codes (left
child = bit set), which caps support at 64 categories per variable; the
Python wrapper enforces that. Exhaustive subset search is used for up to 10
categories (the last category is pinned to the right child to halve the
enumeration); above that, categories are ordered by their mean outcome index
and only prefixes of that order are scanned.
"""

from __future__ import annotations

import numba as nb
import numpy as np

LEAF = np.int64(-1)
MIN_DELTA = 1e-12
EXHAUSTIVE_MAX_CATS = 10

_SM64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM64_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM64_M2 = np.uint64(0x94D049BB133111EB)


@nb.njit(nb.types.UniTuple(nb.uint64, 2)(nb.uint64), cache=True)
def _splitmix64(state):
    state = state + _SM64_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM64_M1
    z = (z ^ (z >> np.uint64(27))) * _SM64_M2
    return state, z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def _draw_below(state, bound):
    # modulo draw; bias is ~bound/2^64 and irrelevant next to determinism
    state, z = _splitmix64(state)
    return state, np.int64(z % np.uint64(bound))


@nb.njit(cache=True)
def _grow_tree(X, kinds, n_cats, y, n_classes, mtry, min_node_size, max_depth,
               seed, feature, threshold, cat_mask, left, right, counts, inbag,
               importance):
    """Grow one tree in place; returns the number of nodes used."""
    n, p = X.shape
    state = seed

    idx = np.empty(n, np.int64)
    for i in range(n):
        state, r = _draw_below(state, n)
        idx[i] = r
        inbag[r] += 1

    # work buffers sized for the worst case
    tmp = np.empty(n, np.int64)
    var_buf = np.empty(p, np.int64)
    node_counts = np.empty(n_classes, np.int64)
    left_counts = np.empty(n_classes, np.int64)
    right_counts = np.empty(n_classes, np.int64)
    values = np.empty(n, np.float64)
    max_k = 0
    for v in range(p):
        if n_cats[v] > max_k:
            max_k = int(n_cats[v])
    cat_counts = np.empty((max(max_k, 1), n_classes), np.int64)
    cat_order = np.empty(max(max_k, 1), np.int64)
    cat_key = np.empty(max(max_k, 1), np.float64)

    # explicit DFS stack: (node id, start, end, depth)
    stack = np.empty((2 * n + 2, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        nid = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        for c in range(n_classes):
            node_counts[c] = 0
        for i in range(start, end):
            node_counts[y[idx[i]] - 1] += 1
        for c in range(n_classes):
            counts[nid, c] = node_counts[c]

        feature[nid] = LEAF
        biggest = np.int64(0)
        s_parent = 0.0
        for c in range(n_classes):
            if node_counts[c] > biggest:
                biggest = node_counts[c]
            s_parent += float(node_counts[c]) * float(node_counts[c])
        if (biggest == m or m < 2 * min_node_size
                or (max_depth >= 0 and depth >= max_depth)):
            continue
        parent_term = s_parent / m

        # sample mtry distinct candidate variables, then scan them in
        # ascending schema order so ties resolve deterministically
        for v in range(p):
            var_buf[v] = v
        n_take = mtry if mtry < p else p
        for j in range(n_take):
            state, r = _draw_below(state, p - j)
            k = j + r
            swap = var_buf[j]
            var_buf[j] = var_buf[k]
            var_buf[k] = swap
        for j in range(1, n_take):
            key = var_buf[j]
            i = j - 1
            while i >= 0 and var_buf[i] > key:
                var_buf[i + 1] = var_buf[i]
                i -= 1
            var_buf[i + 1] = key

        best_delta = MIN_DELTA
        best_var = np.int64(-1)
        best_thr = 0.0
        best_mask = np.uint64(0)

        for j in range(n_take):
            v = var_buf[j]
            if kinds[v] == 0:
                # continuous: scan midpoints between distinct sorted values
                for i in range(start, end):
                    values[i - start] = X[idx[i], v]
                order = np.argsort(values[:m])
                for c in range(n_classes):
                    left_counts[c] = 0
                    right_counts[c] = node_counts[c]
                s_left = 0.0
                s_right = s_parent
                for i in range(m - 1):
                    c = y[idx[start + order[i]]] - 1
                    s_left += float(2 * left_counts[c] + 1)
                    s_right -= float(2 * right_counts[c] - 1)
                    left_counts[c] += 1
                    right_counts[c] -= 1
                    a = values[order[i]]
                    b = values[order[i + 1]]
                    if b <= a:
                        continue
                    n_l = i + 1
                    n_r = m - n_l
                    if n_l < min_node_size or n_r < min_node_size:
                        continue
                    delta = s_left / n_l + s_right / n_r - parent_term
                    if delta > best_delta:
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_delta = delta
                        best_var = v
                        best_thr = thr
                        best_mask = np.uint64(0)
            else:
                k = np.int64(n_cats[v])
                for cat in range(k):
                    for c in range(n_classes):
                        cat_counts[cat, c] = 0
                for i in range(start, end):
                    cat_counts[np.int64(X[idx[i], v]), y[idx[i]] - 1] += 1
                if k <= EXHAUSTIVE_MAX_CATS:
                    # exhaustive subsets; the last category stays right
                    n_masks = (np.int64(1) << np.int64(k - 1)) - 1
                    for mask_bits in range(1, n_masks + 1):
                        n_l = 0
                        s_left = 0.0
                        for c in range(n_classes):
                            left_counts[c] = 0
                        for cat in range(k - 1):
                            if (mask_bits >> cat) & 1:
                                for c in range(n_classes):
                                    left_counts[c] += cat_counts[cat, c]
                        for c in range(n_classes):
                            n_l += left_counts[c]
                            s_left += float(left_counts[c]) * float(left_counts[c])
                        n_r = m - n_l
                        if n_l < min_node_size or n_r < min_node_size:
                            continue
                        s_right = 0.0
                        for c in range(n_classes):
                            d = node_counts[c] - left_counts[c]
                            s_right += float(d) * float(d)
                        delta = s_left / n_l + s_right / n_r - parent_term
                        if delta > best_delta:
                            best_delta = delta
                            best_var = v
                            best_thr = 0.0
                            best_mask = np.uint64(mask_bits)
                else:
                    # order present categories by mean outcome index, scan prefixes
                    n_present = 0
                    for cat in range(k):
                        total = np.int64(0)
                        weighted = 0.0
                        for c in range(n_classes):
                            total += cat_counts[cat, c]
                            weighted += float((c + 1) * cat_counts[cat, c])
                        if total > 0:
                            cat_order[n_present] = cat
                            cat_key[n_present] = weighted / total
                            n_present += 1
                    for a_i in range(1, n_present):
                        key = cat_key[a_i]
                        code = cat_order[a_i]
                        i = a_i - 1
                        while i >= 0 and (cat_key[i] > key or
                                          (cat_key[i] == key and cat_order[i] > code)):
                            cat_key[i + 1] = cat_key[i]
                            cat_order[i + 1] = cat_order[i]
                            i -= 1
                        cat_key[i + 1] = key
                        cat_order[i + 1] = code
                    for c in range(n_classes):
                        left_counts[c] = 0
                    n_l = 0
                    s_left = 0.0
                    mask_bits = np.uint64(0)
                    for q in range(n_present - 1):
                        cat = cat_order[q]
                        for c in range(n_classes):
                            cnt = cat_counts[cat, c]
                            s_left += float(2 * left_counts[c] * cnt + cnt * cnt)
                            left_counts[c] += cnt
                            n_l += cnt
                        mask_bits = mask_bits | (np.uint64(1) << np.uint64(cat))
                        n_r = m - n_l
                        if n_l < min_node_size or n_r < min_node_size:
                            continue
                        s_right = 0.0
                        for c in range(n_classes):
                            d = node_counts[c] - left_counts[c]
                            s_right += float(d) * float(d)
                        delta = s_left / n_l + s_right / n_r - parent_term
                        if delta > best_delta:
                            best_delta = delta
                            best_var = v
                            best_thr = 0.0
                            best_mask = mask_bits

        if best_var < 0:
            continue

        # stable partition: left rows keep order, then right rows
        n_left = 0
        if kinds[best_var] == 0:
            for i in range(start, end):
                if X[idx[i], best_var] <= best_thr:
                    tmp[n_left] = idx[i]
                    n_left += 1
        else:
            for i in range(start, end):
                code = np.uint64(np.int64(X[idx[i], best_var]))
                if (best_mask >> code) & np.uint64(1):
                    tmp[n_left] = idx[i]
                    n_left += 1
        n_right = 0
        if kinds[best_var] == 0:
            for i in range(start, end):
                if not (X[idx[i], best_var] <= best_thr):
                    tmp[n_left + n_right] = idx[i]
                    n_right += 1
        else:
            for i in range(start, end):
                code = np.uint64(np.int64(X[idx[i], best_var]))
                if not ((best_mask >> code) & np.uint64(1)):
                    tmp[n_left + n_right] = idx[i]
                    n_right += 1
        for i in range(m):
            idx[start + i] = tmp[i]

        feature[nid] = best_var
        threshold[nid] = best_thr
        cat_mask[nid] = best_mask
        left[nid] = n_nodes
        right[nid] = n_nodes + 1
        importance[best_var] += best_delta

        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2

    return n_nodes


@nb.njit(cache=True)
def _tree_votes(X, kinds, feature, threshold, cat_mask, left, right, counts,
                votes):
    """Add one tree's per-row leaf-majority votes into the votes matrix."""
    n = X.shape[0]
    n_classes = votes.shape[1]
    for row in range(n):
        nid = 0
        while feature[nid] != LEAF:
            v = feature[nid]
            if kinds[v] == 0:
                go_left = X[row, v] <= threshold[nid]
            else:
                code = np.uint64(np.int64(X[row, v]))
                go_left = bool((cat_mask[nid] >> code) & np.uint64(1))
            nid = left[nid] if go_left else right[nid]
        best_c = 0
        best_n = counts[nid, 0]
        for c in range(1, n_classes):
            if counts[nid, c] > best_n:
                best_n = counts[nid, c]
                best_c = c
        votes[row, best_c] += 1
