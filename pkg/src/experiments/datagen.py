"""Synthetic panels, random regression queries and the sensitivity lower-bound instance."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..panel.dataset import PanelDataset
from ..regression.objectives import (
    GlseKQuery,
    GlseQuery,
    WeightedCoreset,
    coreset_glsek_objective,
    individual_glsek_costs,
)
from ..utils.errors import OverflowGuardError, ValidationError
from ..utils.rng import make_rng

logger = logging.getLogger(__name__)

# 16^N must stay well inside double precision for exact certificate checks
MAX_LOWER_BOUND_N = 15

RngLike = Union[int, np.random.Generator]


class ErrorDistribution(Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class GenConfig:
    """Synthetic panel parameters. Defaults follow the N = T = 500 setting."""
    n_individuals: int = 500
    n_periods: int = 500
    n_features: int = 10
    q: int = 1
    lam: float = 0.2
    error_dist: ErrorDistribution = ErrorDistribution.GAUSSIAN
    intercept: bool = True
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_individuals, self.n_periods, self.n_features) < 1:
            raise ValidationError("N, T and d must be >= 1")
        if self.intercept and self.n_features < 2:
            raise ValidationError("d must be >= 2 when the intercept coordinate is fixed")
        if self.q < 1:
            raise ValidationError(f"q must be >= 1, got {self.q}")
        if not 0.0 < self.lam < 1.0:
            raise ValidationError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.noise_scale < 0:
            raise ValidationError(f"noise_scale must be >= 0, got {self.noise_scale}")


@dataclass(frozen=True, eq=False)
class LowerBoundInstance:
    """T = 1, d = 2 panel with one certificate query per individual."""
    dataset: PanelDataset
    certificates: List[GlseKQuery] = field(default_factory=list)


def _as_rng(source: RngLike, stream: str) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    return make_rng(int(source), stream)


def _unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


def _draw_rho(rng: np.random.Generator, q: int, lam: float) -> np.ndarray:
    return rng.uniform(0.0, 1.0 - lam) * _unit_vectors(rng, 1, q)[0]


def _innovations(rng: np.random.Generator, shape: Tuple[int, int], dist: ErrorDistribution) -> np.ndarray:
    if dist is ErrorDistribution.CAUCHY:
        # Inverse CDF of Cauchy(0, 2)
        return 2.0 * np.tan(np.pi * (rng.uniform(size=shape) - 0.5))
    return rng.standard_normal(shape)


def ar_errors(innovations: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """e_it = sum_{a <= min(t, q)} rho_a e_{i,t-a} + innovation_it, vectorized over i."""
    errors = innovations.astype(np.float64).copy()
    for t in range(1, errors.shape[1]):
        for a in range(1, min(t, len(rho)) + 1):
            errors[:, t] += rho[a - 1] * errors[:, t - a]
    return errors


def synthetic_panel(cfg: GenConfig) -> Tuple[PanelDataset, np.ndarray, np.ndarray]:
    """Generate a panel with AR(q) errors.

    Each individual gets a mean tau * x' (x' uniform unit vector, tau in
    [0, 5]) and observations drawn from N(mean, ||mean||^2 I). With the
    intercept enabled the last coordinate is fixed to 1. beta ~ N(0, I) and
    rho = tau rho' with tau in [0, 1 - lam].

    Args:
        cfg: Generator settings

    Returns:
        (dataset, true beta, true rho)
    """
    n, t, d = cfg.n_individuals, cfg.n_periods, cfg.n_features
    rng = make_rng(cfg.seed, "synthetic")

    means = rng.uniform(0.0, 5.0, size=(n, 1)) * _unit_vectors(rng, n, d)
    spread = np.linalg.norm(means, axis=1)
    x = means[:, None, :] + spread[:, None, None] * rng.standard_normal((n, t, d))
    if cfg.intercept:
        x[:, :, -1] = 1.0

    beta = rng.standard_normal(d)
    rho = _draw_rho(rng, cfg.q, cfg.lam)
    errors = ar_errors(_innovations(rng, (n, t), cfg.error_dist), rho)
    y = x @ beta + cfg.noise_scale * errors

    logger.info(f"[DATAGEN] Synthetic panel N={n} T={t} d={d} q={cfg.q} errors={cfg.error_dist.value}")
    return PanelDataset.from_arrays(x, y), beta, rho


def random_query(d: int, q: int, lam: float, seed: RngLike) -> GlseQuery:
    """beta ~ N(0, I_d), rho = tau rho' with tau uniform in [0, 1 - lam]."""
    rng = _as_rng(seed, "query")
    beta = rng.standard_normal(d)
    return GlseQuery(beta, _draw_rho(rng, q, lam), lam)


def random_k_query(d: int, q: int, lam: float, k: int, seed: RngLike) -> GlseKQuery:
    rng = _as_rng(seed, "kquery")
    return GlseKQuery(tuple(random_query(d, q, lam, rng) for _ in range(k)))


def orthogonal_panel(n_individuals: int, n_periods: int, n_features: int, seed: int) -> PanelDataset:
    """Panel whose every individual Gram (Z^(i))^T Z^(i) is the identity, so M = 1.

    Raises:
        ValidationError: T < d + 1
    """
    if n_periods < n_features + 1:
        raise ValidationError(f"orthogonal panel needs T >= d + 1, got T={n_periods}, d={n_features}")
    rng = make_rng(seed, "orthogonal")
    z = np.empty((n_individuals, n_periods, n_features + 1))
    for i in range(n_individuals):
        z[i], _ = np.linalg.qr(rng.standard_normal((n_periods, n_features + 1)))
    return PanelDataset.from_arrays(z[:, :, :n_features], z[:, :, n_features])


def lower_bound_instance(n_individuals: int, q: int = 1) -> LowerBoundInstance:
    """Rows x_i = (4^i, 4^-i), y_i = 0 for i = 1..N with certificate queries.

    Certificate i uses beta^(1) = (4^-i, 0), beta^(2) = (0, 4^i) and rho = 0,
    at which individual i costs exactly 1 and individual j costs 16^-|i-j|.

    Raises:
        OverflowGuardError: N outside [1, 15]
    """
    if not 1 <= n_individuals <= MAX_LOWER_BOUND_N:
        raise OverflowGuardError(f"N must lie in [1, {MAX_LOWER_BOUND_N}], got {n_individuals}")
    powers = 4.0 ** np.arange(1, n_individuals + 1)
    x = np.stack([powers, 1.0 / powers], axis=1)[:, None, :]
    ds = PanelDataset.from_arrays(x, np.zeros((n_individuals, 1)))

    rho = np.zeros(q)
    certificates = [
        GlseKQuery((GlseQuery(np.array([1.0 / p, 0.0]), rho), GlseQuery(np.array([0.0, p]), rho)))
        for p in powers
    ]
    return LowerBoundInstance(dataset=ds, certificates=certificates)


def certificate_shares(instance: LowerBoundInstance, q: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Share of individual i and the total objective, both at certificate i.

    Returns:
        (shares, totals), each of length N
    """
    shares, totals = [], []
    for i, query in enumerate(instance.certificates):
        costs = individual_glsek_costs(instance.dataset, query, q).min(axis=0)
        totals.append(costs.sum())
        shares.append(costs[i] / costs.sum())
    return np.array(shares), np.array(totals)


def half_approximation_violations(instance: LowerBoundInstance, coreset: WeightedCoreset, q: int = 1) -> List[int]:
    """Certificates at which the coreset objective is off by more than half.

    Returns:
        Individuals i with |psi_S(zeta^(i)) / psi(zeta^(i)) - 1| > 1/2
    """
    violations = []
    for i, query in enumerate(instance.certificates):
        full = individual_glsek_costs(instance.dataset, query, q).min(axis=0).sum()
        approx = coreset_glsek_objective(coreset, instance.dataset, query, q)
        if abs(approx / full - 1.0) > 0.5:
            violations.append(i)
    return violations


def truth_metadata(cfg: GenConfig, beta: np.ndarray, rho: np.ndarray) -> Dict[str, Any]:
    return {
        "seed": cfg.seed,
        "dist": cfg.error_dist.value,
        "N": cfg.n_individuals,
        "T": cfg.n_periods,
        "d": cfg.n_features,
        "q": cfg.q,
        "lambda": cfg.lam,
        "beta": beta,
        "rho": rho,
    }


def write_truth(path: Union[str, Path], meta: Dict[str, Any]) -> None:
    """Write generator metadata as key=value lines; vectors are comma-joined."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, value in meta.items():
        if isinstance(value, np.ndarray):
            value = ",".join(repr(float(v)) for v in value)
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"[DATAGEN] Wrote generator metadata to {path}")
