"""Posterior summaries of clusterings.

All functions take allocation samples as an ``(S, n)`` integer array and are
invariant to relabelling within each sample.
"""

from __future__ import annotations

import numpy as np

from ._errors import InvalidInputError

__all__ = ["canonical_labels", "cocluster_matrix", "binder_loss", "binder_estimate", "kn_posterior"]


def _as_samples(samples) -> np.ndarray:
    z = np.asarray(samples)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[0] < 1:
        raise InvalidInputError("samples must be a non-empty (S, n) array")
    return z


def canonical_labels(z) -> np.ndarray:
    """Relabel a partition as 1, 2, ... in order of first occurrence."""
    z = np.asarray(z).reshape(-1)
    _, first, inverse = np.unique(z, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return rank[inverse]


def cocluster_matrix(samples) -> np.ndarray:
    """Posterior probability that each pair of observations shares a cluster.

    Returns
    -------
    ndarray of shape (n, n)
    """
    z = _as_samples(samples)
    n = z.shape[1]
    p = np.zeros((n, n))
    for row in z:
        p += row[:, None] == row[None, :]
    return p / z.shape[0]


def binder_loss(labels, psm) -> float:
    """Expected Binder loss ``sum_{i<j} |1(c_i = c_j) - p_ij|`` with equal costs."""
    c = np.asarray(labels).reshape(-1)
    same = c[:, None] == c[None, :]
    return float(np.sum(np.triu(np.abs(same - psm), k=1)))


def binder_estimate(samples, psm=None) -> np.ndarray:
    """Sampled partition minimising the expected Binder loss.

    Candidates are the distinct sampled partitions.  Ties are broken by the
    number of clusters, then by first occurrence in ``samples``.

    Returns
    -------
    ndarray of shape (n,)
        Labels ``1..K`` in order of first occurrence.
    """
    z = _as_samples(samples)
    if psm is None:
        psm = cocluster_matrix(z)
    canon = np.array([canonical_labels(row) for row in z])
    _, first = np.unique(canon, axis=0, return_index=True)
    best, best_key = None, None
    for idx in np.sort(first):
        key = (binder_loss(canon[idx], psm), int(canon[idx].max()), idx)
        if best_key is None or key < best_key:
            best, best_key = canon[idx], key
    return best


def kn_posterior(samples) -> dict:
    """Empirical distribution of the number of distinct labels per sample."""
    z = _as_samples(samples)
    k = np.array([np.unique(row).size for row in z])
    values, counts = np.unique(k, return_counts=True)
    return {int(v): c / k.size for v, c in zip(values, counts)}
