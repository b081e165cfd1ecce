"""Exact OLSE coreset by Caratheodory reduction of Gram outer products.

Each nonzero row z of Z is embedded as vec(z z^T). Any convex combination of
these points can be rewritten with at most D+1 of them (D = (d+1)^2), so a
weighted subset reproduces Z^T Z exactly and therefore the OLSE objective
for every beta.
"""

import logging
from typing import Tuple

import numpy as np
from scipy.optimize import nnls

from ..panel.dataset import PanelDataset
from ..regression.objectives import WeightedCoreset, coreset_metadata

logger = logging.getLogger(__name__)

# Coefficients below this are dropped after each reduction step
DROP_TOLERANCE = 1e-12


def _eliminate(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Null-space elimination: zero one weight per pass until <= D+1 remain."""
    u = u.copy()
    dim = points.shape[1]
    while True:
        nz = np.flatnonzero(u > 0)
        if len(nz) <= dim + 1:
            return u
        diffs = (points[nz[1:]] - points[nz[0]]).T
        _, _, vt = np.linalg.svd(diffs, full_matrices=True)
        v = vt[-1]
        v = np.insert(v, 0, -v.sum())
        positive = v > 0
        alpha = np.min(u[nz][positive] / v[positive])
        updated = u[nz] - alpha * v
        updated[np.argmin(updated)] = 0.0
        u[nz] = np.maximum(updated, 0.0)


def reduce_convex(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rewrite a convex combination with at most D+1 nonzero coefficients.

    Args:
        points: n x D points
        u: Nonnegative coefficients summing to 1

    Returns:
        Coefficients with the same weighted mean and sum, support <= D+1
    """
    n, dim = points.shape
    if n <= dim + 1:
        return u
    system = np.vstack([points.T, np.ones(n)])
    target = system @ u
    coeff, residual = nnls(system, target)
    coeff[coeff < DROP_TOLERANCE] = 0.0
    if np.count_nonzero(coeff) > dim + 1 or residual > 1e-10 * max(np.linalg.norm(target), 1.0):
        logger.debug(f"[CARATHEODORY] NNLS support {np.count_nonzero(coeff)} residual {residual:.3g}, eliminating")
        coeff = _eliminate(points, u)
        coeff[coeff < DROP_TOLERANCE] = 0.0
    return coeff / coeff.sum()


def fast_caratheodory(points: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Reduce weighted points to <= D+1 with identical weighted sum.

    Points are split into 3D balanced chunks; chunk means are reduced with
    reduce_convex and only the surviving chunks are kept, so each pass keeps
    roughly a third of the points.

    Args:
        points: n x D points
        weights: Positive weights, length n

    Returns:
        (indices into points, new weights)
    """
    n, dim = points.shape
    total = float(weights.sum())
    idx = np.arange(n)
    w = weights / total
    passes = 0
    while len(idx) > dim + 1:
        chunks = np.array_split(np.arange(len(idx)), min(3 * dim, len(idx)))
        masses = np.array([w[c].sum() for c in chunks])
        means = np.vstack([w[c] @ points[idx[c]] / m for c, m in zip(chunks, masses)])
        coeff = reduce_convex(means, masses)
        kept_idx, kept_w = [], []
        for c, m, a in zip(chunks, masses, coeff):
            if a > 0:
                kept_idx.append(idx[c])
                kept_w.append(w[c] * (a / m))
        idx, w = np.concatenate(kept_idx), np.concatenate(kept_w)
        passes += 1
    logger.debug(f"[CARATHEODORY] Reduced {n} points to {len(idx)} in {passes} passes")
    return idx, w * total


def caratheodory_olse_coreset(ds: PanelDataset) -> WeightedCoreset:
    """Accurate OLSE coreset with at most (d+1)^2 + 1 weighted pairs.

    Args:
        ds: Panel dataset

    Returns:
        WeightedCoreset whose weighted Gram equals Z^T Z
    """
    z = ds.stacked()
    dim = (ds.n_features + 1) ** 2
    # Exact for OLSE, i.e. q = 0
    metadata = coreset_metadata("caratheodory", q=0, draws=0)

    if ds.n_pairs <= dim + 1:
        rows, weights = np.arange(ds.n_pairs), np.ones(ds.n_pairs)
    else:
        nonzero = np.flatnonzero(z.any(axis=1))
        embedded = np.einsum("ni,nj->nij", z[nonzero], z[nonzero]).reshape(len(nonzero), dim)
        if len(nonzero) <= dim + 1:
            picked, weights = np.arange(len(nonzero)), np.ones(len(nonzero))
        else:
            picked, weights = fast_caratheodory(embedded, np.ones(len(nonzero)))

            gram = (z.T @ z).ravel()
            basis = embedded[picked].T
            polished, _ = nnls(basis, gram)
            if np.linalg.norm(basis @ polished - gram) < np.linalg.norm(basis @ weights - gram):
                weights = polished
            keep = weights > 0
            picked, weights = picked[keep], weights[keep]
        rows = nonzero[picked]

    individuals, periods = np.divmod(rows, ds.n_periods)
    coreset = WeightedCoreset.from_draws(individuals, periods, weights, metadata)
    logger.info(f"[CARATHEODORY] {coreset.size} pairs (bound {dim + 1}) from {ds.n_pairs}")
    return coreset
