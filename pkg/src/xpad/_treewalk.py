"""Numba kernel for batch tree descent."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _walk(feature, threshold, left, right, leaf_value, Z, out):
    for i in range(Z.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Z[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_value[node]


def walk_leaf_values(feature, threshold, left, right, leaf_value, Z) -> np.ndarray:
    """Leaf value (path length) reached by each row of standardized Z."""
    out = np.empty(Z.shape[0], dtype=np.float64)
    _walk(feature, threshold, left, right, leaf_value, np.ascontiguousarray(Z), out)
    return out
