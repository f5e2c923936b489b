"""Sorted multi-index bookkeeping for exterior algebra bases.

Bases of Lambda^k are indexed by strictly increasing tuples of axis
indices, ordered lexicographically (the order itertools.combinations
produces).  All sign conventions in the package refer to this ordering.
"""

from functools import lru_cache
from itertools import combinations

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(n, k):
    """All strictly increasing k-tuples drawn from range(n), lex order."""
    if k < 0 or k > n:
        return ()
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def index_position(n, k):
    """Map from multi-index tuple to its position in multi_indices(n, k)."""
    return {idx: pos for pos, idx in enumerate(multi_indices(n, k))}


def num_indices(n, k):
    if k < 0 or k > n:
        return 0
    return len(multi_indices(n, k))


def merge_sign(left, right):
    """Sign of sorting the concatenation of two increasing tuples.

    Returns (sign, merged_tuple), or (0, None) when the tuples share an
    element (the wedge vanishes).
    """
    merged = []
    sign = 1
    i = j = 0
    while i < len(left) and j < len(right):
        a, b = left[i], right[j]
        if a == b:
            return 0, None
        if a < b:
            merged.append(a)
            i += 1
        else:
            # b jumps over the remaining entries of `left`
            if (len(left) - i) % 2 == 1:
                sign = -sign
            merged.append(b)
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return sign, tuple(merged)


def insert_sign(axis, idx):
    """Sign and result of wedging e^axis from the left into e^idx."""
    return merge_sign((axis,), idx)


def complement(idx, n):
    return tuple(a for a in range(n) if a not in idx)


@lru_cache(maxsize=None)
def perm_sign(idx_pair):
    """Sign of the permutation taking (idx, complement) to (0, ..., n-1)."""
    seq = list(idx_pair)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def wedge_axis_matrix(n, k, axis):
    """Matrix of e^axis ^ (.) : Lambda^k -> Lambda^(k+1) over range(n)."""
    src = multi_indices(n, k)
    dst_pos = index_position(n, k + 1)
    mat = np.zeros((num_indices(n, k + 1), num_indices(n, k)))
    for col, idx in enumerate(src):
        sign, merged = insert_sign(axis, idx)
        if sign != 0:
            mat[dst_pos[merged], col] = sign
    return mat


@lru_cache(maxsize=None)
def wedge_pair_matrix(n, k, axes):
    """Matrix of (e^a ^ e^b) ^ (.) : Lambda^k -> Lambda^(k+2), axes=(a, b)."""
    src = multi_indices(n, k)
    dst_pos = index_position(n, k + 2)
    mat = np.zeros((num_indices(n, k + 2), num_indices(n, k)))
    for col, idx in enumerate(src):
        sign, merged = merge_sign(axes, idx)
        if sign != 0:
            mat[dst_pos[merged], col] = sign
    return mat


def gram_matrix(metric_on_lines, k):
    """Gram determinant extension of a metric on 1-forms to Lambda^k.

    ``metric_on_lines`` is the matrix of inner products of the basis
    covectors e^a; the Lambda^k inner product of e^I and e^J is
    det(metric_on_lines[I, J]).
    """
    n = metric_on_lines.shape[0]
    idxs = multi_indices(n, k)
    gram = np.empty((len(idxs), len(idxs)))
    for i, I in enumerate(idxs):
        for j, J in enumerate(idxs):
            gram[i, j] = np.linalg.det(metric_on_lines[np.ix_(I, J)]) if k else 1.0
    return gram
