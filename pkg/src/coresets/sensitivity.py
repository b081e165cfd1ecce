"""Sensitivity scores that drive importance sampling.

Pair-level scores (leverage, GLSE) are N x T matrices; individual-level
scores (GLSE_k) are length-N vectors. Results are cached per dataset
fingerprint because the SVD dominates construction time.
"""

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from ..panel.dataset import PanelDataset, gram_extremes
from ..utils.errors import DegenerateDatasetError, ValidationError

logger = logging.getLogger(__name__)

# Singular values below this fraction of the largest are treated as zero
SVD_CUTOFF = 1e-12


class SensitivityKind(Enum):
    LEVERAGE = "leverage"
    GLSE = "glse"
    GLSEK = "glsek"


@dataclass(frozen=True, eq=False)
class SensitivityMap:
    """Scores in [0, 1] per pair (N x T) or per individual (N)."""
    scores: np.ndarray
    kind: SensitivityKind

    @property
    def total(self) -> float:
        """Total sensitivity G = sum of scores."""
        return float(self.scores.sum())

    @property
    def per_individual(self) -> bool:
        return self.scores.ndim == 1


_cache: Dict[Tuple, SensitivityMap] = {}
_cache_lock = threading.Lock()


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def _cached(key: Tuple, build, use_cache: bool) -> SensitivityMap:
    if use_cache:
        with _cache_lock:
            hit = _cache.get(key)
        if hit is not None:
            logger.debug(f"[SENSITIVITY] Cache hit for {key[1]}")
            return hit
    result = build()
    if use_cache:
        with _cache_lock:
            _cache[key] = result
    return result


def _check_params(lam: float, q: int) -> None:
    if not 0.0 < lam < 1.0:
        raise ValidationError(f"lambda must lie in (0, 1), got {lam}")
    if q < 1:
        raise ValidationError(f"q must be >= 1, got {q}")


def olse_leverage(ds: PanelDataset, use_cache: bool = True) -> SensitivityMap:
    """Leverage score of every pair: squared row norm of an orthonormal basis of Z.

    Args:
        ds: Panel dataset
        use_cache: Reuse a previous result for the same dataset

    Returns:
        N x T SensitivityMap whose total equals the numeric rank of Z
    """
    def build() -> SensitivityMap:
        z = ds.stacked()
        u, s, _ = linalg.svd(z, full_matrices=False, lapack_driver="gesdd")
        if s.size == 0 or s[0] == 0.0:
            scores = np.zeros(ds.n_pairs)
        else:
            basis = u[:, s > SVD_CUTOFF * s[0]]
            scores = np.clip(np.sum(basis ** 2, axis=1), 0.0, 1.0)
        scores[~z.any(axis=1)] = 0.0
        logger.info(f"[SENSITIVITY] Leverage on {ds.n_pairs} pairs, rank={int(round(scores.sum()))}")
        return SensitivityMap(scores.reshape(ds.n_individuals, ds.n_periods), SensitivityKind.LEVERAGE)

    return _cached((ds.fingerprint, SensitivityKind.LEVERAGE), build, use_cache)


def window_sensitivity(leverage: np.ndarray, lam: float, q: int) -> np.ndarray:
    """Cap 2/lam times each pair's leverage plus its q predecessors of the same individual at 1.

    Args:
        leverage: N x T leverage scores
        lam: Lower bound margin lambda in (0, 1)
        q: Autoregression order, >= 1

    Returns:
        N x T scores in [0, 1]
    """
    _check_params(lam, q)
    base = np.asarray(leverage, dtype=np.float64)
    window = base.copy()
    for j in range(1, min(q, base.shape[1] - 1) + 1):
        window[:, j:] += base[:, :-j]
    return np.minimum(1.0, (2.0 / lam) * window)


def glse_sensitivity(ds: PanelDataset, lam: float, q: int, use_cache: bool = True) -> SensitivityMap:
    """Pair sensitivities s(i,t) = min(1, 2/lam * (s_O(i,t) + sum_{j<=min(t,q)} s_O(i,t-j))).

    Args:
        ds: Panel dataset
        lam: Lower bound margin lambda in (0, 1)
        q: Autoregression order, >= 1
        use_cache: Reuse a previous result for the same (dataset, lam, q)

    Returns:
        N x T SensitivityMap
    """
    _check_params(lam, q)

    def build() -> SensitivityMap:
        leverage = olse_leverage(ds, use_cache=use_cache).scores
        smap = SensitivityMap(window_sensitivity(leverage, lam, q), SensitivityKind.GLSE)
        logger.info(f"[SENSITIVITY] GLSE lam={lam} q={q}: total={smap.total:.4f}")
        return smap

    return _cached((ds.fingerprint, SensitivityKind.GLSE, float(lam), int(q)), build, use_cache)


def glsek_sensitivity(ds: PanelDataset, lam: float, q: int, use_cache: bool = True) -> SensitivityMap:
    """Individual sensitivities for GLSE_k from Gram eigenvalue extremes.

    s_O(i) = u_i / (u_i + sum_{i' != i} l_i') and
    s(i) = min(1, 2(q+1)/lam * s_O(i)).

    Raises:
        DegenerateDatasetError: Every individual Gram matrix is zero
    """
    _check_params(lam, q)

    def build() -> SensitivityMap:
        grams = gram_extremes(ds)
        upper, lower = grams.upper, grams.lower
        if not np.any(upper > 0.0):
            raise DegenerateDatasetError("every individual has an all-zero Gram matrix")
        denom = upper + (lower.sum() - lower)
        base = np.divide(upper, denom, out=np.zeros_like(upper), where=denom > 0.0)
        scores = np.minimum(1.0, (2.0 * (q + 1) / lam) * base)
        smap = SensitivityMap(scores, SensitivityKind.GLSEK)
        logger.info(f"[SENSITIVITY] GLSE_k lam={lam} q={q}: total={smap.total:.4f}")
        return smap

    return _cached((ds.fingerprint, SensitivityKind.GLSEK, float(lam), int(q)), build, use_cache)


def write_sensitivities(smap: SensitivityMap, ds: PanelDataset, path: Union[str, Path]) -> None:
    """Dump scores as ``i,t,score`` (pairs, t 1-based) or ``i,score`` (individuals)."""
    if smap.per_individual:
        frame = pd.DataFrame({"i": ds.individual_ids, "score": smap.scores})
    else:
        i, t = np.divmod(np.arange(smap.scores.size), smap.scores.shape[1])
        frame = pd.DataFrame({"i": ds.individual_ids[i], "t": t + 1, "score": smap.scores.reshape(-1)})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"[SENSITIVITY] Wrote {len(frame)} {smap.kind.value} scores to {path}")
