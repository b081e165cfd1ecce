"""Sampling-based coreset constructions and coreset persistence.

cglse samples (individual, period) pairs by GLSE sensitivity. cglse_k first
samples individuals by their GLSE_k sensitivity, then runs cglse inside every
selected individual. uniform_coreset is the size-matched baseline.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..panel.dataset import PanelDataset, m_bound, parse_numeric_column
from ..regression.objectives import WeightedCoreset, coreset_metadata
from ..utils.config import config
from ..utils.errors import DegenerateDatasetError, InvalidSizeError, ParseError, ValidationError
from ..utils.rng import make_rng
from .caratheodory import caratheodory_olse_coreset
from .sensitivity import SensitivityMap, glse_sensitivity, glsek_sensitivity

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class CoresetMethod(Enum):
    CGLSE = "cglse"
    CGLSE_K = "cglse-k"
    UNIFORM = "uniform"
    CARATHEODORY = "caratheodory"


@dataclass(frozen=True)
class CoresetConfig:
    """Parameters of one coreset construction.

    ``fl_constant`` scales the sample-size formula (None means the configured
    default). ``size_override`` pins the number of draws (pairs for cglse,
    individuals for cglse_k); ``stage2_size_override`` pins the per-individual
    draws of cglse_k's second stage.
    """
    epsilon: float = 0.2
    delta: float = 0.1
    lam: float = 0.2
    q: int = 1
    k: int = 1
    fl_constant: Optional[float] = None
    size_override: Optional[int] = None
    stage2_size_override: Optional[int] = None
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("epsilon", "delta", "lam"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {value}")
        if self.q < 1:
            raise ValidationError(f"q must be >= 1, got {self.q}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.fl_constant is not None and self.fl_constant <= 0:
            raise ValidationError(f"fl_constant must be positive, got {self.fl_constant}")
        for name in ("size_override", "stage2_size_override"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValidationError(f"{name} must be >= 1, got {value}")
        if self.threads is not None and self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")

    @property
    def constant(self) -> float:
        return config.fl_constant if self.fl_constant is None else self.fl_constant

    @property
    def workers(self) -> int:
        return self.threads or config.threads


def glse_pseudo_dimension(q: int, d: int) -> int:
    return (q + d) * q * d


def glsek_pseudo_dimension(k: int, q: int, d: int) -> int:
    return k * k * q * q * (q + d) * d * d


def fl_sample_size(cfg: CoresetConfig, d: int, total_sensitivity: float, dim: int) -> int:
    """Number of importance-sampling draws.

    ceil(c * eps^-2 * G * (dim * max(log G, 0) + log(1/delta))), at least 1;
    cfg.size_override replaces the formula.

    Args:
        cfg: Construction parameters
        d: Feature count (reported only)
        total_sensitivity: G, must be positive
        dim: Pseudo-dimension of the query space

    Returns:
        Sample size M >= 1
    """
    if cfg.size_override is not None:
        return int(cfg.size_override)
    if total_sensitivity <= 0:
        raise DegenerateDatasetError("total sensitivity is zero")
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    log_g = max(math.log(total_sensitivity), 0.0)
    size = cfg.constant * cfg.epsilon ** -2 * total_sensitivity * (dim * log_g + math.log(1.0 / cfg.delta))
    size = max(int(math.ceil(size)), 1)
    logger.debug(f"[FL] d={d} G={total_sensitivity:.4f} dim={dim} -> M={size}")
    return size


def _sample_pairs(
    ds: PanelDataset,
    smap: SensitivityMap,
    draws: int,
    rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw pairs i.i.d. with probability s/G, weight G/(M s) per draw."""
    scores = smap.scores.reshape(-1)
    total = float(scores.sum())
    picks = rng.choice(scores.size, size=draws, p=scores / total)
    weights = total / (draws * scores[picks])
    individuals, periods = np.divmod(picks, ds.n_periods)
    return individuals, periods, weights


def cglse(ds: PanelDataset, cfg: CoresetConfig, smap: Optional[SensitivityMap] = None) -> WeightedCoreset:
    """Importance-sampling coreset for GLSE.

    Args:
        ds: Panel dataset
        cfg: Construction parameters
        smap: Precomputed glse_sensitivity(ds, cfg.lam, cfg.q), optional

    Returns:
        Merged WeightedCoreset; metadata records draws and total sensitivity

    Raises:
        DegenerateDatasetError: Every sensitivity is zero
    """
    smap = smap or glse_sensitivity(ds, cfg.lam, cfg.q)
    total = smap.total
    if total <= 0:
        raise DegenerateDatasetError("all pair sensitivities are zero")

    draws = fl_sample_size(cfg, ds.n_features, total, glse_pseudo_dimension(cfg.q, ds.n_features))
    individuals, periods, weights = _sample_pairs(ds, smap, draws, make_rng(cfg.seed, "cglse"))
    coreset = WeightedCoreset.from_draws(individuals, periods, weights, _metadata(CoresetMethod.CGLSE, cfg, total, draws))
    logger.info(f"[CGLSE] M={draws} draws, G={total:.4f}, {coreset.size} distinct pairs")
    return coreset


def _stage2(ds: PanelDataset, individual: int, cfg: CoresetConfig) -> Tuple[np.ndarray, np.ndarray]:
    sub = ds.subset([individual])
    smap = glse_sensitivity(sub, cfg.lam, cfg.q, use_cache=False)
    total = smap.total
    if total <= 0:
        # All-zero individual: every query costs it nothing
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    draws = fl_sample_size(cfg, ds.n_features, total, glse_pseudo_dimension(cfg.q, ds.n_features))
    _, periods, weights = _sample_pairs(sub, smap, draws, make_rng(cfg.seed, "stage2", individual))
    merged = WeightedCoreset.from_draws(np.zeros_like(periods), periods, weights)
    return merged.periods, merged.weights


def cglse_k(ds: PanelDataset, cfg: CoresetConfig) -> WeightedCoreset:
    """Two-stage coreset for GLSE_k.

    Stage 1 draws Gamma individuals by GLSE_k sensitivity with weight
    G/(Gamma s(i)) per draw. Stage 2 builds a cglse coreset inside each
    selected individual with error eps/3 and failure probability 1/(20 Gamma).
    The final weight of (i, t) is the product of both stage weights.

    Args:
        ds: Panel dataset
        cfg: Construction parameters (uses k, stage2_size_override, threads)

    Returns:
        WeightedCoreset; metadata records Gamma, G and the measured M
    """
    bound = m_bound(ds)
    if math.isinf(bound):
        logger.warning("[CGLSE_K] Dataset is not M-bounded (M = inf); the size guarantee does not apply")

    smap = glsek_sensitivity(ds, cfg.lam, cfg.q)
    total = smap.total
    gamma = fl_sample_size(cfg, ds.n_features, total, glsek_pseudo_dimension(cfg.k, cfg.q, ds.n_features))

    rng = make_rng(cfg.seed, "stage1")
    picks = rng.choice(ds.n_individuals, size=gamma, p=smap.scores / total)
    counts = np.bincount(picks, minlength=ds.n_individuals)
    selected = np.flatnonzero(counts)
    stage1_weight = counts[selected] * total / (gamma * smap.scores[selected])

    stage2_cfg = replace(
        cfg,
        epsilon=cfg.epsilon / 3.0,
        delta=1.0 / (20.0 * gamma),
        size_override=cfg.stage2_size_override,
        stage2_size_override=None
    )
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(lambda i: _stage2(ds, int(i), stage2_cfg), selected))

    individuals, periods, weights = [], [], []
    for i, w1, (t, w2) in zip(selected, stage1_weight, results):
        individuals.append(np.full(len(t), i, dtype=np.int64))
        periods.append(t)
        weights.append(w1 * w2)

    metadata = _metadata(CoresetMethod.CGLSE_K, cfg, total, gamma)
    metadata["m_bound"] = bound
    coreset = WeightedCoreset(np.concatenate(individuals), np.concatenate(periods), np.concatenate(weights), metadata)
    logger.info(
        f"[CGLSE_K] Gamma={gamma} draws, {len(selected)} individuals, {coreset.size} pairs, G={total:.4f}, M={bound:.4g}"
    )
    return coreset


def uniform_coreset(ds: PanelDataset, m: int, seed: int) -> WeightedCoreset:
    """m distinct observed pairs drawn uniformly without replacement.

    Each pair gets weight (observed pair count) / m, i.e. NT/m on fully
    observed data.

    Raises:
        InvalidSizeError: m < 1 or m exceeds the observed pair count
    """
    support = np.flatnonzero(~ds.missing_mask.reshape(-1))
    if m < 1 or m > len(support):
        raise InvalidSizeError(f"uniform size must lie in [1, {len(support)}], got {m}")
    picks = np.sort(make_rng(seed, "uniform").choice(support, size=m, replace=False))
    individuals, periods = np.divmod(picks, ds.n_periods)
    metadata = coreset_metadata(CoresetMethod.UNIFORM.value, seed=seed, draws=m)
    coreset = WeightedCoreset(individuals, periods, np.full(m, len(support) / m), metadata)
    logger.info(f"[UNIFORM] {m} pairs of {len(support)}, weight {len(support) / m:.4g}")
    return coreset


def build_coreset(ds: PanelDataset, method: CoresetMethod, cfg: CoresetConfig) -> WeightedCoreset:
    """Dispatch to the requested construction."""
    if method is CoresetMethod.CGLSE:
        return cglse(ds, cfg)
    if method is CoresetMethod.CGLSE_K:
        return cglse_k(ds, cfg)
    if method is CoresetMethod.UNIFORM:
        if cfg.size_override is None:
            raise ValidationError("uniform coreset needs an explicit size")
        return uniform_coreset(ds, cfg.size_override, cfg.seed)
    return caratheodory_olse_coreset(ds)


def _metadata(method: CoresetMethod, cfg: CoresetConfig, total: float, draws: int) -> Dict[str, Any]:
    return coreset_metadata(
        method.value,
        epsilon=cfg.epsilon,
        delta=cfg.delta,
        lam=cfg.lam,
        q=cfg.q,
        k=cfg.k,
        seed=cfg.seed,
        total_sensitivity=total,
        draws=draws,
    )


def _parse_value(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def write_coreset(coreset: WeightedCoreset, ds: PanelDataset, path: PathLike) -> None:
    """Write ``i,t,weight`` CSV (dataset ids, 1-based t) with a ``# key=value`` header.

    Args:
        coreset: Coreset to write
        ds: Dataset the coreset indexes into
        path: Destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "i": ds.individual_ids[coreset.individuals],
        "t": coreset.periods + 1,
        "weight": coreset.weights,
    })
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in coreset.metadata.items():
            f.write(f"# {key}={value}\n")
        frame.to_csv(f, index=False, float_format="%.17g")
    logger.info(f"[CORESET] Wrote {coreset.size} pairs to {path}")


def read_coreset(path: PathLike, ds: PanelDataset) -> WeightedCoreset:
    """Read a coreset written by write_coreset against its dataset.

    Raises:
        ParseError: Malformed header or rows
        ValidationError: Ids or periods not present in the dataset
    """
    metadata: Dict[str, Any] = {}
    header_lines = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            header_lines += 1
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                metadata[key.strip()] = _parse_value(value.strip())

    try:
        frame = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"malformed coreset file ({e})")
    frame.columns = [str(c).strip() for c in frame.columns]
    if list(frame.columns) != ["i", "t", "weight"]:
        raise ParseError(f"coreset header must be i,t,weight, got {','.join(frame.columns)}", line_number=header_lines + 1)

    # Data rows start after the comment block and the column header
    first_line = header_lines + 2
    ids = parse_numeric_column(frame, "i", integer=True, first_line=first_line).astype(np.int64)
    periods = parse_numeric_column(frame, "t", integer=True, first_line=first_line).astype(np.int64) - 1
    parse_numeric_column(frame, "weight", first_line=first_line)
    # Python float parsing keeps %.17g weights bit-exact
    weights = frame["weight"].str.strip().astype(np.float64).to_numpy()
    if not np.isfinite(weights).all():
        row = int(np.flatnonzero(~np.isfinite(weights))[0])
        raise ParseError(f"weight must be finite, got {frame['weight'].iloc[row]!r}", line_number=row + first_line)

    positions = {int(ident): pos for pos, ident in enumerate(ds.individual_ids)}
    unknown = [int(i) for i in ids if int(i) not in positions]
    if unknown:
        raise ValidationError(f"coreset references unknown individual {unknown[0]}")
    individuals = np.array([positions[int(i)] for i in ids], dtype=np.int64)

    coreset = WeightedCoreset(individuals, periods, weights, metadata)
    coreset.check_against(ds)
    return coreset
