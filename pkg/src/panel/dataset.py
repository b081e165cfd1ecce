"""Panel-data container, CSV ingestion and per-individual Gram diagnostics."""

import hashlib
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..utils.errors import DuplicateKeyError, ParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Relative cutoff below which l_i counts as zero when deciding M = inf
RANK_TOLERANCE = 1e-12

_NAN_LITERALS = {"nan", "+nan", "-nan"}


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """N individuals observed over T periods with d features each.

    Missing (i, t) pairs are stored as (x, y) = (0, 0) and flagged in
    ``missing_mask``; they contribute nothing to any objective.
    """
    x: np.ndarray  # N x T x d
    y: np.ndarray  # N x T
    missing_mask: np.ndarray  # N x T, True = missing
    individual_ids: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        mask = np.array(self.missing_mask, dtype=bool)

        if x.ndim != 3:
            raise ValidationError(f"x must be N x T x d, got shape {x.shape}")
        n, t, d = x.shape
        if n < 1 or t < 1 or d < 1:
            raise ValidationError(f"need N, T, d >= 1, got N={n}, T={t}, d={d}")
        if y.shape != (n, t):
            raise ValidationError(f"y must have shape {(n, t)}, got {y.shape}")
        if mask.shape != (n, t):
            raise ValidationError(f"missing_mask must have shape {(n, t)}, got {mask.shape}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValidationError("dataset contains non-finite values")
        if np.any(x[mask] != 0.0) or np.any(y[mask] != 0.0):
            raise ValidationError("masked pairs must be stored as (x, y) = (0, 0)")

        ids = np.arange(n) if self.individual_ids is None else np.array(self.individual_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ValidationError(f"individual_ids must have length {n}")
        if len(np.unique(ids)) != n:
            raise ValidationError("individual_ids must be distinct")

        for arr in (x, y, mask, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "individual_ids", ids)

    @classmethod
    def from_arrays(
        cls,
        x: np.ndarray,
        y: np.ndarray,
        missing_mask: Optional[np.ndarray] = None,
        individual_ids: Optional[Sequence[int]] = None
    ) -> "PanelDataset":
        """Build a dataset, zeroing any masked pairs first.

        Args:
            x: Observations, N x T x d
            y: Outcomes, N x T
            missing_mask: Optional N x T boolean mask (True = missing)
            individual_ids: Optional external ids, one per individual

        Returns:
            Validated PanelDataset
        """
        x = np.array(x, dtype=np.float64)
        y = np.array(y, dtype=np.float64)
        if missing_mask is None:
            mask = np.zeros(y.shape, dtype=bool)
        else:
            mask = np.array(missing_mask, dtype=bool)
            x[mask] = 0.0
            y[mask] = 0.0
        return cls(x=x, y=y, missing_mask=mask, individual_ids=individual_ids)

    @property
    def n_individuals(self) -> int:
        return self.x.shape[0]

    @property
    def n_periods(self) -> int:
        return self.x.shape[1]

    @property
    def n_features(self) -> int:
        return self.x.shape[2]

    @property
    def n_pairs(self) -> int:
        return self.n_individuals * self.n_periods

    @property
    def observed_count(self) -> int:
        return int((~self.missing_mask).sum())

    def individual_matrices(self) -> np.ndarray:
        """Stack Z^(i) for every individual.

        Returns:
            N x T x (d+1) array whose (i, t) row is (x_it, y_it)
        """
        return np.concatenate([self.x, self.y[:, :, None]], axis=2)

    def stacked(self) -> np.ndarray:
        """Z with row i*T + t equal to (x_it, y_it), shape NT x (d+1)."""
        return self.individual_matrices().reshape(self.n_pairs, self.n_features + 1)

    def subset(self, individuals: Sequence[int]) -> "PanelDataset":
        """Dataset restricted to the given individual positions (in order)."""
        idx = np.asarray(individuals, dtype=np.int64)
        return PanelDataset(
            x=self.x[idx],
            y=self.y[idx],
            missing_mask=self.missing_mask[idx],
            individual_ids=self.individual_ids[idx]
        )

    @cached_property
    def fingerprint(self) -> str:
        """Content hash identifying this dataset (used as cache key)."""
        digest = hashlib.sha256()
        digest.update(np.asarray(self.x.shape, dtype=np.int64).tobytes())
        for arr in (self.x, self.y, self.missing_mask, self.individual_ids):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class IndividualGram:
    """Extreme eigenvalues of (Z^(i))^T Z^(i) for each individual."""
    upper: np.ndarray  # u_i, largest eigenvalue
    lower: np.ndarray  # l_i, smallest eigenvalue


def parse_numeric_column(frame: pd.DataFrame, column: str, integer: bool = False, first_line: int = 2) -> np.ndarray:
    """Parse one string column, raising ParseError with the file line of the first bad cell.

    Args:
        frame: Frame read with dtype=str
        column: Column name
        integer: Also require whole numbers
        first_line: File line number of the first data row
    """
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    text = raw.fillna("").astype(str).str.strip().str.lower()
    bad = values.isna() & ~text.isin(_NAN_LITERALS)
    if integer:
        bad |= ~np.isfinite(values.fillna(np.nan)) | (values % 1 != 0)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"column {column!r}: cannot parse {raw.iloc[row]!r}", line_number=row + first_line)
    return values.to_numpy(dtype=np.float64)


def load_csv(path: PathLike) -> PanelDataset:
    """Load a panel dataset from ``individual,time,x_1,...,x_d,y`` CSV.

    Time indices in the file are 1-based. Absent (i, t) rows become masked
    pairs stored as (0, 0); row order is irrelevant.

    Args:
        path: CSV file path

    Returns:
        PanelDataset with N distinct individuals and T = max time index

    Raises:
        ParseError: Malformed header or row (carries the 1-based line number)
        DuplicateKeyError: The same (individual, time) appears twice
        ValidationError: A value is non-finite
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", line_number=1)
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed row ({e})", line_number=_line_from_parser_error(str(e)))

    columns = [c.strip() for c in frame.columns]
    n_features = len(columns) - 3
    expected = ["individual", "time"] + [f"x_{j + 1}" for j in range(max(n_features, 0))] + ["y"]
    if n_features < 1 or columns != expected:
        raise ParseError(f"header must be {','.join(expected if n_features >= 1 else ['individual', 'time', 'x_1', 'y'])}, got {','.join(columns)}", line_number=1)
    frame.columns = columns

    if frame.empty:
        raise ParseError("no data rows", line_number=2)

    individuals = parse_numeric_column(frame, "individual", integer=True).astype(np.int64)
    times = parse_numeric_column(frame, "time", integer=True).astype(np.int64)
    features = np.column_stack([parse_numeric_column(frame, f"x_{j + 1}") for j in range(n_features)])
    outcomes = parse_numeric_column(frame, "y")

    if np.any(times < 1):
        row = int(np.flatnonzero(times < 1)[0])
        raise ParseError(f"time index must be >= 1, got {times[row]}", line_number=row + 2)

    finite = np.isfinite(features).all(axis=1) & np.isfinite(outcomes)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise ValidationError(f"line {row + 2}: non-finite value")

    keys = pd.DataFrame({"individual": individuals, "time": times})
    duplicated = keys.duplicated().to_numpy()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated)[0])
        raise DuplicateKeyError(f"line {row + 2}: duplicate key (individual={individuals[row]}, time={times[row]})")

    ids, positions = np.unique(individuals, return_inverse=True)
    n, t = len(ids), int(times.max())
    x = np.zeros((n, t, n_features))
    y = np.zeros((n, t))
    mask = np.ones((n, t), dtype=bool)
    x[positions, times - 1] = features
    y[positions, times - 1] = outcomes
    mask[positions, times - 1] = False

    ds = PanelDataset(x=x, y=y, missing_mask=mask, individual_ids=ids)
    logger.info(f"[DATASET] Loaded {path}: N={n}, T={t}, d={n_features}, masked={int(mask.sum())}")
    return ds


def _line_from_parser_error(message: str) -> Optional[int]:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else None


def write_csv(ds: PanelDataset, path: PathLike) -> None:
    """Write a dataset in the load_csv schema; masked pairs are omitted.

    Args:
        ds: Dataset to write
        path: Destination CSV path
    """
    observed = np.argwhere(~ds.missing_mask)
    i, t = observed[:, 0], observed[:, 1]
    frame = pd.DataFrame({"individual": ds.individual_ids[i], "time": t + 1})
    for j in range(ds.n_features):
        frame[f"x_{j + 1}"] = ds.x[i, t, j]
    frame["y"] = ds.y[i, t]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"[DATASET] Wrote {len(frame)} rows to {path}")


def gram_extremes(ds: PanelDataset) -> IndividualGram:
    """Largest and smallest eigenvalue of each individual's Gram matrix.

    Computed from the singular values of Z^(i) squared. When T < d+1 the Gram
    matrix is rank deficient and l_i = 0.

    Args:
        ds: Panel dataset

    Returns:
        IndividualGram with u_i >= l_i >= 0
    """
    z = ds.individual_matrices()
    singular = np.linalg.svd(z, compute_uv=False)
    upper = singular[:, 0] ** 2
    if ds.n_periods >= ds.n_features + 1:
        lower = singular[:, -1] ** 2
    else:
        lower = np.zeros(ds.n_individuals)
    lower = np.minimum(np.maximum(lower, 0.0), upper)
    return IndividualGram(upper=upper, lower=lower)


def m_bound(ds: PanelDataset, grams: Optional[IndividualGram] = None) -> float:
    """Smallest M for which the dataset is M-bounded.

    Args:
        ds: Panel dataset
        grams: Precomputed gram_extremes(ds), optional

    Returns:
        max_i u_i / l_i, or infinity if any l_i is (numerically) zero
    """
    grams = grams or gram_extremes(ds)
    upper, lower = grams.upper, grams.lower
    if np.any(lower <= RANK_TOLERANCE * upper) or np.any(upper == 0.0):
        return float("inf")
    return float(np.max(upper / lower))
