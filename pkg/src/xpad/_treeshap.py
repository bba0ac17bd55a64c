"""Numba kernel for exact per-tree Shapley attribution.

Implements the polynomial-time path recursion for tree ensembles: conditional
expectations are taken over the per-node subsample counts recorded at fit
time, and the path bookkeeping maintains, for every unique feature on the
current path, the proportion of feature subsets that flow down it with the
feature held "on" versus "off". Attributions of each tree's leaf-value
function are exact Shapley values of that conditional-expectation game.

The traversal is an explicit-stack DFS. Path entries live in flat scratch
arrays addressed by per-node offsets; every visited node copies its parent's
entries into a fresh region before extending, so unwinding in one branch
never corrupts the sibling's view of the path.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _extend(pd, pz, po, pw, off, unique_depth, p_zero, p_one, p_findex):
    pd[off + unique_depth] = p_findex
    pz[off + unique_depth] = p_zero
    po[off + unique_depth] = p_one
    pw[off + unique_depth] = 1.0 if unique_depth == 0 else 0.0
    for i in range(unique_depth - 1, -1, -1):
        pw[off + i + 1] += p_one * pw[off + i] * (i + 1.0) / (unique_depth + 1.0)
        pw[off + i] = p_zero * pw[off + i] * (unique_depth - i) / (unique_depth + 1.0)


@njit(cache=True)
def _unwind(pd, pz, po, pw, off, unique_depth, path_index):
    one = po[off + path_index]
    zero = pz[off + path_index]
    next_one = pw[off + unique_depth]
    for i in range(unique_depth - 1, -1, -1):
        if one != 0.0:
            tmp = pw[off + i]
            pw[off + i] = next_one * (unique_depth + 1.0) / ((i + 1.0) * one)
            next_one = tmp - pw[off + i] * zero * (unique_depth - i) / (unique_depth + 1.0)
        else:
            pw[off + i] = pw[off + i] * (unique_depth + 1.0) / (zero * (unique_depth - i))
    for i in range(path_index, unique_depth):
        pd[off + i] = pd[off + i + 1]
        pz[off + i] = pz[off + i + 1]
        po[off + i] = po[off + i + 1]


@njit(cache=True)
def _unwound_sum(pd, pz, po, pw, off, unique_depth, path_index):
    one = po[off + path_index]
    zero = pz[off + path_index]
    next_one = pw[off + unique_depth]
    total = 0.0
    if one != 0.0:
        for i in range(unique_depth - 1, -1, -1):
            tmp = next_one * (unique_depth + 1.0) / ((i + 1.0) * one)
            total += tmp
            next_one = pw[off + i] - tmp * zero * (unique_depth - i) / (unique_depth + 1.0)
    else:
        for i in range(unique_depth - 1, -1, -1):
            total += pw[off + i] * (unique_depth + 1.0) / (zero * (unique_depth - i))
    return total


@njit(cache=True)
def _shap_one(feature, threshold, left, right, cover, leaf_value, x, phi,
              pd, pz, po, pw, s_node, s_ud, s_off, s_findex, s_zero, s_one):
    # DFS seeded with the root; parent region of the root is empty scratch.
    top = 0
    s_node[0] = 0
    s_ud[0] = 0
    s_off[0] = 0
    s_findex[0] = -1
    s_zero[0] = 1.0
    s_one[0] = 1.0
    while top >= 0:
        node = s_node[top]
        unique_depth = s_ud[top]
        off = s_off[top]
        p_findex = s_findex[top]
        p_zero = s_zero[top]
        p_one = s_one[top]
        top -= 1

        coff = off + unique_depth + 1
        for i in range(unique_depth + 1):
            pd[coff + i] = pd[off + i]
            pz[coff + i] = pz[off + i]
            po[coff + i] = po[off + i]
            pw[coff + i] = pw[off + i]
        _extend(pd, pz, po, pw, coff, unique_depth, p_zero, p_one, p_findex)

        f = feature[node]
        if f < 0:
            for i in range(1, unique_depth + 1):
                w = _unwound_sum(pd, pz, po, pw, coff, unique_depth, i)
                phi[pd[coff + i]] += w * (po[coff + i] - pz[coff + i]) * leaf_value[node]
        else:
            if x[f] < threshold[node]:
                hot, cold = left[node], right[node]
            else:
                hot, cold = right[node], left[node]
            hot_zero = cover[hot] / cover[node]
            cold_zero = cover[cold] / cover[node]
            incoming_zero = 1.0
            incoming_one = 1.0
            ud = unique_depth
            path_index = 0
            while path_index <= ud:
                if pd[coff + path_index] == f:
                    break
                path_index += 1
            if path_index != ud + 1:
                incoming_zero = pz[coff + path_index]
                incoming_one = po[coff + path_index]
                _unwind(pd, pz, po, pw, coff, ud, path_index)
                ud -= 1
            # push cold first so the hot branch is processed next (order is
            # irrelevant to the result; offsets keep sibling regions disjoint)
            top += 1
            s_node[top] = cold
            s_ud[top] = ud + 1
            s_off[top] = coff
            s_findex[top] = f
            s_zero[top] = cold_zero * incoming_zero
            s_one[top] = 0.0
            top += 1
            s_node[top] = hot
            s_ud[top] = ud + 1
            s_off[top] = coff
            s_findex[top] = f
            s_zero[top] = hot_zero * incoming_zero
            s_one[top] = incoming_one


@njit(cache=True)
def _tree_shap_batch(feature, threshold, left, right, cover, leaf_value, X, phis,
                     buf_size, stack_size):
    pd = np.empty(buf_size, dtype=np.int64)
    pz = np.empty(buf_size, dtype=np.float64)
    po = np.empty(buf_size, dtype=np.float64)
    pw = np.empty(buf_size, dtype=np.float64)
    s_node = np.empty(stack_size, dtype=np.int64)
    s_ud = np.empty(stack_size, dtype=np.int64)
    s_off = np.empty(stack_size, dtype=np.int64)
    s_findex = np.empty(stack_size, dtype=np.int64)
    s_zero = np.empty(stack_size, dtype=np.float64)
    s_one = np.empty(stack_size, dtype=np.float64)
    for r in range(X.shape[0]):
        _shap_one(feature, threshold, left, right, cover, leaf_value, X[r], phis[r],
                  pd, pz, po, pw, s_node, s_ud, s_off, s_findex, s_zero, s_one)


def tree_shap_batch(feature, threshold, left, right, cover, leaf_value, Z, phis, height_limit):
    """Accumulate one tree's Shapley attributions into phis for every row of Z.

    phi index -1 (the dummy root path entry) is never written: the leaf loop
    starts past it. cover must be float64 so subset proportions divide exactly
    as reals.
    """
    depth = height_limit + 3
    buf_size = (depth + 1) * (depth + 2) // 2 + depth + 2
    stack_size = 2 * depth + 4
    _tree_shap_batch(
        feature,
        threshold,
        left,
        right,
        cover.astype(np.float64),
        leaf_value,
        np.ascontiguousarray(Z),
        phis,
        buf_size,
        stack_size,
    )
