"""OLSE, GLSE and GLSE_k objectives on full panels and on weighted coresets.

Time indices inside the library are 0-based: period 0 carries the
(1 - ||rho||^2) stationarity factor, later periods the lagged-residual
recursion. Masked pairs hold (x, y) = (0, 0), so their residual is 0 both as
a term and inside any lag window.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..panel.dataset import PanelDataset
from ..utils.errors import InvalidQueryError, ValidationError

logger = logging.getLogger(__name__)

# Slack on the ||rho||^2 <= 1 - lambda check for boundary queries built in floating point
BALL_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class GlseQuery:
    """Regression parameters zeta = (beta, rho).

    ``lam`` is the lambda the query was drawn for. When given, the query must
    satisfy ||rho||^2 <= 1 - lam; otherwise only ||rho||^2 <= 1 is required.
    An empty ``rho`` (q = 0) is an OLSE query.
    """
    beta: np.ndarray
    rho: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam: Optional[float] = None

    def __post_init__(self):
        beta = np.atleast_1d(np.array(self.beta, dtype=np.float64))
        rho = np.atleast_1d(np.array(self.rho, dtype=np.float64))
        if beta.ndim != 1 or rho.ndim != 1:
            raise InvalidQueryError("beta and rho must be vectors")
        if not (np.isfinite(beta).all() and np.isfinite(rho).all()):
            raise InvalidQueryError("query contains non-finite values")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise InvalidQueryError(f"lambda must lie in (0, 1), got {self.lam}")

        radius = 1.0 if self.lam is None else 1.0 - self.lam
        norm_sq = float(rho @ rho)
        if norm_sq > radius + BALL_TOLERANCE:
            raise InvalidQueryError(f"||rho||^2 = {norm_sq:.6g} exceeds 1 - lambda = {radius:.6g}")

        beta.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rho", rho)

    @property
    def q(self) -> int:
        return len(self.rho)

    @property
    def rho_norm_sq(self) -> float:
        return float(self.rho @ self.rho)

    def check_shape(self, d: int, q: int) -> None:
        if len(self.beta) != d:
            raise InvalidQueryError(f"beta has length {len(self.beta)}, dataset has d={d}")
        if len(self.rho) != q:
            raise InvalidQueryError(f"rho has length {len(self.rho)}, expected q={q}")


@dataclass(frozen=True, eq=False)
class GlseKQuery:
    """k parameter tuples; each individual pays the cheapest one."""
    params: Tuple[GlseQuery, ...]

    def __post_init__(self):
        params = tuple(self.params)
        if len(params) < 1:
            raise InvalidQueryError("GLSE_k query needs k >= 1 parameter tuples")
        object.__setattr__(self, "params", params)

    @property
    def k(self) -> int:
        return len(self.params)

    def check_shape(self, d: int, q: int) -> None:
        for query in self.params:
            query.check_shape(d, q)


# Header keys every coreset file carries, in order
METADATA_KEYS = ("method", "epsilon", "delta", "lam", "q", "k", "seed", "total_sensitivity", "draws")
NOT_APPLICABLE = "n/a"


def coreset_metadata(method: str, **values: Any) -> Dict[str, Any]:
    """Build a coreset header, writing ``n/a`` for keys a construction does not use."""
    return {"method": method, **{key: values.get(key, NOT_APPLICABLE) for key in METADATA_KEYS[1:]}}


@dataclass(eq=False)
class WeightedCoreset:
    """Weighted (individual, period) pairs.

    ``individuals`` are positions 0..N-1 in the dataset and ``periods`` are
    0-based. ``metadata`` records how the coreset was built (method, epsilon,
    delta, lam, q, k, seed, total_sensitivity, draws).
    """
    individuals: np.ndarray
    periods: np.ndarray
    weights: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.individuals = np.asarray(self.individuals, dtype=np.int64).reshape(-1)
        self.periods = np.asarray(self.periods, dtype=np.int64).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)

        if not (len(self.individuals) == len(self.periods) == len(self.weights)):
            raise ValidationError("coreset arrays must have equal length")
        if not np.isfinite(self.weights).all() or np.any(self.weights < 0):
            raise ValidationError("coreset weights must be finite and nonnegative")
        if np.any(self.individuals < 0) or np.any(self.periods < 0):
            raise ValidationError("coreset indices must be nonnegative")
        if self.size and len(np.unique(self._keys())) != self.size:
            raise ValidationError("coreset pairs must be distinct")

    def _keys(self) -> np.ndarray:
        width = int(self.periods.max()) + 1 if self.size else 1
        return self.individuals * width + self.periods

    @classmethod
    def from_draws(
        cls,
        individuals: Sequence[int],
        periods: Sequence[int],
        weights: Sequence[float],
        metadata: Optional[Dict[str, Any]] = None
    ) -> "WeightedCoreset":
        """Merge repeated draws of the same pair by summing their weights.

        Args:
            individuals: Individual position of each draw
            periods: Period of each draw
            weights: Weight of each draw
            metadata: Construction record

        Returns:
            Coreset sorted by (individual, period)
        """
        pairs = np.column_stack([np.asarray(individuals, dtype=np.int64), np.asarray(periods, dtype=np.int64)])
        weights = np.asarray(weights, dtype=np.float64)
        if len(pairs) == 0:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0), dict(metadata or {}))
        unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=weights, minlength=len(unique))
        return cls(unique[:, 0], unique[:, 1], merged, dict(metadata or {}))

    @classmethod
    def full(cls, ds: PanelDataset) -> "WeightedCoreset":
        """Every pair of the dataset with weight 1."""
        i, t = np.divmod(np.arange(ds.n_pairs), ds.n_periods)
        return cls(i, t, np.ones(ds.n_pairs), {"method": "full"})

    @property
    def size(self) -> int:
        return len(self.weights)

    def individual_set(self) -> np.ndarray:
        """I_S: sorted individuals with at least one pair in the coreset."""
        return np.unique(self.individuals)

    def periods_of(self, individual: int) -> np.ndarray:
        """J_{S,i}: sorted periods kept for one individual."""
        return np.sort(self.periods[self.individuals == individual])

    def groups(self) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
        """Map each individual in I_S to its (periods, weights)."""
        out = {}
        for i in self.individual_set():
            sel = self.individuals == i
            out[int(i)] = (self.periods[sel], self.weights[sel])
        return out

    def check_against(self, ds: PanelDataset) -> None:
        if self.size == 0:
            return
        if self.individuals.max() >= ds.n_individuals or self.periods.max() >= ds.n_periods:
            raise ValidationError(
                f"coreset indices out of range for dataset N={ds.n_individuals}, T={ds.n_periods}"
            )


def residuals(ds: PanelDataset, beta: np.ndarray) -> np.ndarray:
    """r_it = y_it - x_it^T beta as an N x T matrix (0 on masked pairs)."""
    return ds.y - ds.x @ np.asarray(beta, dtype=np.float64)


def _checked(ds: PanelDataset, query: GlseQuery, q: int) -> GlseQuery:
    query.check_shape(ds.n_features, q)
    return query


def olse_pair(ds: PanelDataset, i: int, t: int, beta: np.ndarray) -> float:
    """(y_it - x_it^T beta)^2 for one pair (t is 0-based)."""
    r = ds.y[i, t] - ds.x[i, t] @ np.asarray(beta, dtype=np.float64)
    return float(r * r)


def glse_pair(ds: PanelDataset, i: int, t: int, query: GlseQuery, q: int) -> float:
    """GLSE cost of one pair (t is 0-based).

    Period 0 costs (1 - ||rho||^2) r_i0^2; period t >= 1 costs
    (r_it - sum_{j <= min(t, q)} rho_j r_{i,t-j})^2.
    """
    return float(pair_costs(ds, [i], [t], query, q)[0])


def glse_cost_matrix(ds: PanelDataset, query: GlseQuery, q: int) -> np.ndarray:
    """N x T matrix of glse_pair values for the whole dataset."""
    query = _checked(ds, query, q)
    r = residuals(ds, query.beta)
    whitened = r.copy()
    for j in range(1, min(q, ds.n_periods - 1) + 1):
        whitened[:, j:] -= query.rho[j - 1] * r[:, :-j]
    costs = whitened * whitened
    costs[:, 0] = (1.0 - query.rho_norm_sq) * r[:, 0] ** 2
    return costs


def pair_costs(
    ds: PanelDataset,
    individuals: Sequence[int],
    periods: Sequence[int],
    query: GlseQuery,
    q: int
) -> np.ndarray:
    """glse_pair for a list of pairs, touching only those pairs and their lags.

    Args:
        ds: Panel dataset
        individuals: Individual positions
        periods: 0-based periods, same length as individuals
        query: GLSE parameters
        q: Autoregression order

    Returns:
        Cost per requested pair
    """
    query = _checked(ds, query, q)
    i = np.asarray(individuals, dtype=np.int64)
    t = np.asarray(periods, dtype=np.int64)
    beta = query.beta

    r = ds.y[i, t] - ds.x[i, t] @ beta
    whitened = r.copy()
    for j in range(1, q + 1):
        has_lag = t >= j
        if not has_lag.any():
            continue
        li, lt = i[has_lag], t[has_lag] - j
        lagged = ds.y[li, lt] - ds.x[li, lt] @ beta
        whitened[has_lag] -= query.rho[j - 1] * lagged
    costs = whitened * whitened
    first = t == 0
    costs[first] = (1.0 - query.rho_norm_sq) * r[first] ** 2
    return costs


def olse_total(ds: PanelDataset, beta: np.ndarray) -> float:
    r = residuals(ds, beta)
    return float(np.sum(r * r))


def individual_glse_costs(ds: PanelDataset, query: GlseQuery, q: int) -> np.ndarray:
    """psi_i for every individual, length N."""
    return glse_cost_matrix(ds, query, q).sum(axis=1)


def glse_total(ds: PanelDataset, query: GlseQuery, q: int) -> float:
    return float(glse_cost_matrix(ds, query, q).sum())


def individual_glsek_costs(ds: PanelDataset, query: GlseKQuery, q: int) -> np.ndarray:
    """k x N matrix: row l holds psi_i at parameter tuple l."""
    return np.vstack([individual_glse_costs(ds, params, q) for params in query.params])


def glsek_assignment(ds: PanelDataset, query: GlseKQuery, q: int) -> np.ndarray:
    """Cheapest parameter tuple per individual (ties go to the smallest l)."""
    return np.argmin(individual_glsek_costs(ds, query, q), axis=0)


def glsek_total(ds: PanelDataset, query: GlseKQuery, q: int) -> float:
    """sum_i min_l psi_i(beta^(l), rho^(l))."""
    return float(individual_glsek_costs(ds, query, q).min(axis=0).sum())


def coreset_olse_objective(coreset: WeightedCoreset, ds: PanelDataset, beta: np.ndarray) -> float:
    i, t = coreset.individuals, coreset.periods
    r = ds.y[i, t] - ds.x[i, t] @ np.asarray(beta, dtype=np.float64)
    return float(np.sum(coreset.weights * r * r))


def coreset_glse_objective(coreset: WeightedCoreset, ds: PanelDataset, query: GlseQuery, q: int) -> float:
    """Weighted sum of glse_pair over the coreset entries."""
    if coreset.size == 0:
        return 0.0
    costs = pair_costs(ds, coreset.individuals, coreset.periods, query, q)
    return float(np.sum(coreset.weights * costs))


def coreset_glsek_objective(coreset: WeightedCoreset, ds: PanelDataset, query: GlseKQuery, q: int) -> float:
    """sum over I_S of min_l sum_{t in J_{S,i}} w(i,t) psi_it(zeta^(l)).

    The minimum is taken per individual over its weighted time-sum, not per pair.
    """
    if coreset.size == 0:
        return 0.0
    _, group = np.unique(coreset.individuals, return_inverse=True)
    group = group.reshape(-1)
    n_groups = int(group.max()) + 1
    per_tuple: List[np.ndarray] = []
    for params in query.params:
        weighted = coreset.weights * pair_costs(ds, coreset.individuals, coreset.periods, params, q)
        per_tuple.append(np.bincount(group, weights=weighted, minlength=n_groups))
    return float(np.vstack(per_tuple).min(axis=0).sum())


def p_rho_matrix(rho: np.ndarray, n_periods: int) -> np.ndarray:
    """Lower-triangular whitening matrix P_rho with Omega^-1 = P^T P.

    Row 0 is sqrt(1 - ||rho||^2) e_0; row t >= 1 has 1 on the diagonal and
    -rho_j at column t - j for j <= min(t, q).
    """
    rho = np.asarray(rho, dtype=np.float64)
    p = np.eye(n_periods)
    p[0, 0] = np.sqrt(max(1.0 - float(rho @ rho), 0.0))
    for j in range(1, min(len(rho), n_periods - 1) + 1):
        p[np.arange(j, n_periods), np.arange(0, n_periods - j)] = -rho[j - 1]
    return p
