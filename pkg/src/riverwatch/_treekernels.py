"""Numba kernels for the hot loops of tree growth and per-pixel prediction.

Kept free of Python objects so training can thread across trees and
prediction can parallelize across pixels without touching the GIL.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, nogil=True)
def best_split(X, y, idx, candidates, n_classes, min_samples_leaf):
    """Scan candidate features for the best binary split of one node.

    Thresholds are midpoints of consecutive distinct sorted values. The score
    maximized is sum(count_c^2)/n summed over both sides, which orders splits
    identically to weighted Gini impurity. Candidates must arrive sorted
    ascending; ties then resolve to the lower feature index and the lower
    threshold. Returns (-1, 0.0) when no split keeps both sides at or above
    min_samples_leaf.
    """
    n = idx.shape[0]
    total = np.zeros(n_classes, dtype=np.int64)
    for j in range(n):
        total[y[idx[j]]] += 1

    best_score = -np.inf
    best_f = np.int64(-1)
    best_t = 0.0
    col = np.empty(n, dtype=np.float64)
    left = np.empty(n_classes, dtype=np.int64)

    for ci in range(candidates.shape[0]):
        f = candidates[ci]
        for j in range(n):
            col[j] = X[idx[j], f]
        order = np.argsort(col)
        for c in range(n_classes):
            left[c] = 0
        for j in range(n - 1):
            o = order[j]
            left[y[idx[o]]] += 1
            v = col[o]
            w = col[order[j + 1]]
            if v == w:
                continue
            n_left = j + 1
            n_right = n - n_left
            if n_left < min_samples_leaf or n_right < min_samples_leaf:
                continue
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                cl = left[c]
                cr = total[c] - cl
                sl += cl * cl
                sr += cr * cr
            score = sl / n_left + sr / n_right
            if score > best_score:
                best_score = score
                best_f = f
                best_t = 0.5 * (v + w)
    return best_f, best_t


@njit(cache=True, parallel=True)
def predict_batch(feat, thresh, left, right, leaf_class, roots, X, n_classes, out_cls, out_conf):
    """Vote every tree on every row of X.

    Trees live in concatenated flat arrays; ``roots[t]`` is tree t's root
    node index and ``feat[node] < 0`` marks a leaf. Writes the winning class
    (vote ties resolve to the lowest class index) and the winning vote
    fraction per row.
    """
    n = X.shape[0]
    n_trees = roots.shape[0]
    for i in prange(n):
        counts = np.zeros(n_classes, dtype=np.int64)
        for t in range(n_trees):
            node = roots[t]
            f = feat[node]
            while f >= 0:
                if X[i, f] <= thresh[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feat[node]
            counts[leaf_class[node]] += 1
        best = 0
        for c in range(1, n_classes):
            if counts[c] > counts[best]:
                best = c
        out_cls[i] = best
        out_conf[i] = counts[best] / n_trees
