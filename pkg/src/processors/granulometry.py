import os
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize, special

from ..utils.errors import DomainError, InsufficientDataError, ParseError, SchemaError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class SieveTable:
    """Cumulative percent passing per sieve size for one pile."""

    sieve_mm: np.ndarray
    passing_pct: np.ndarray
    pile_label: str = ''
    sample_mass_kg: Optional[float] = None

    def __post_init__(self):
        sizes = np.asarray(self.sieve_mm, dtype=float)
        passing = np.asarray(self.passing_pct, dtype=float)
        if sizes.ndim != 1 or sizes.shape != passing.shape or sizes.size == 0:
            raise DomainError(f"Sieve table {self.pile_label}: sizes and passing must be equal-length vectors")
        if np.any(sizes <= 0) or np.any(np.diff(sizes) <= 0):
            raise DomainError(f"Sieve table {self.pile_label}: sieve sizes must be positive and strictly ascending")
        if np.any((passing < 0) | (passing > 100)):
            raise DomainError(f"Sieve table {self.pile_label}: passing_pct must lie in [0, 100]")
        if np.any(np.diff(passing) < 0):
            raise DomainError(f"Sieve table {self.pile_label}: passing_pct must be non-decreasing")
        if self.sample_mass_kg is not None and not self.sample_mass_kg > 0:
            raise DomainError(f"Sieve table {self.pile_label}: sample_mass_kg must be positive")
        object.__setattr__(self, 'sieve_mm', sizes)
        object.__setattr__(self, 'passing_pct', passing)

    @property
    def passing_fraction(self) -> np.ndarray:
        return self.passing_pct / 100.0

    def scaled(self, factor: float) -> 'SieveTable':
        """Same passing curve with every sieve size multiplied by ``factor``."""
        return SieveTable(self.sieve_mm * factor, self.passing_pct, self.pile_label, self.sample_mass_kg)


@dataclass(frozen=True)
class RosinRammlerModel:
    """Two-parameter Rosin-Rammler mass law P(x) = 1 - exp(-(x/x_c)^n)."""

    n: float
    x_c_mm: float

    def __post_init__(self):
        if not self.n > 0 or not self.x_c_mm > 0:
            raise DomainError(f"Rosin-Rammler parameters must be positive, got n={self.n}, x_c={self.x_c_mm}")

    def to_dict(self) -> dict:
        return {'n': self.n, 'x_c_mm': self.x_c_mm, 'x_bar_mm': rr_mean(self)}


def rr_cdf(model: RosinRammlerModel, x_mm: ArrayLike) -> Union[float, np.ndarray]:
    """Cumulative mass fraction finer than x_mm."""
    x = np.asarray(x_mm, dtype=float)
    if np.any(x < 0):
        raise DomainError("Particle size must be non-negative")
    value = -np.expm1(-np.power(x / model.x_c_mm, model.n))
    return float(value) if value.ndim == 0 else value


def rr_quantile(model: RosinRammlerModel, p: ArrayLike) -> Union[float, np.ndarray]:
    """Size below which the mass fraction p lies (inverse of rr_cdf)."""
    q = np.asarray(p, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise DomainError("Quantile level must lie in [0, 1)")
    value = model.x_c_mm * np.power(-np.log1p(-q), 1.0 / model.n)
    return float(value) if value.ndim == 0 else value


def rr_mean(model: RosinRammlerModel) -> float:
    """Mass-weighted mean size x_c * Gamma(1 + 1/n) in mm."""
    return float(model.x_c_mm * special.gamma(1.0 + 1.0 / model.n))


def load_sieve_table(path: str, pile_label: Optional[str] = None,
                     sample_mass_kg: Optional[float] = None) -> SieveTable:
    """Read a ``sieve_mm,passing_pct`` CSV.

    Args:
        path: CSV file with a header row.
        pile_label: Label to attach; defaults to the file name with '_' read as '/'
            (``0_32.csv`` -> ``0/32``).
        sample_mass_kg: Mass of the sieved sample, if known.

    Returns:
        SieveTable
    """
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty, header row is mandatory", path=path, line=1)
    frame.columns = [str(c).strip() for c in frame.columns]
    for column in ('sieve_mm', 'passing_pct'):
        if column not in frame.columns:
            raise SchemaError(f"{path}: column '{column}' is missing")
        values = pd.to_numeric(frame[column], errors='coerce')
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            raise ParseError(f"non-numeric value in column '{column}'", path=path, line=int(bad[0]) + 2)
        frame[column] = values

    if pile_label is None:
        pile_label = os.path.splitext(os.path.basename(path))[0].replace('_', '/')
    return SieveTable(frame['sieve_mm'].to_numpy(), frame['passing_pct'].to_numpy(),
                      pile_label=pile_label, sample_mass_kg=sample_mass_kg)


def select_fit_rows(table: SieveTable, p_lo: float = 0.15,
                    p_hi_range: Tuple[float, float] = (0.90, 0.96)) -> np.ndarray:
    """Indices of the rows used for regression.

    Rows run contiguously from the first one passing at least ``p_lo`` up to
    and including the first one whose passing lies in ``p_hi_range``. When
    no row falls in that range, every row up to the range's upper bound is
    kept. Rows passing 100% are always dropped.

    Returns:
        Integer index array into the table.
    """
    lo_hi, hi_hi = p_hi_range
    if not 0 <= p_lo < lo_hi <= hi_hi <= 1:
        raise DomainError(f"Invalid fit constraints p_lo={p_lo}, p_hi_range={p_hi_range}")
    fractions = table.passing_fraction
    starts = np.flatnonzero(fractions >= p_lo)
    if starts.size == 0:
        return np.array([], dtype=int)
    start = int(starts[0])

    in_range = np.flatnonzero((fractions >= lo_hi) & (fractions <= hi_hi) & (np.arange(fractions.size) >= start))
    if in_range.size:
        stop = int(in_range[0])
    else:
        below = np.flatnonzero(fractions <= hi_hi)
        stop = int(below[-1]) if below.size else start - 1

    rows = np.arange(start, stop + 1)
    return rows[fractions[rows] < 1.0]


def fit_rr(table: SieveTable, p_lo: float = 0.15,
           p_hi_range: Tuple[float, float] = (0.90, 0.96)) -> RosinRammlerModel:
    """Fit a Rosin-Rammler model on the linearized (Weibull-plot) form.

    ln(-ln(1 - P)) = n ln x - n ln x_c is solved by ordinary least squares
    over the rows chosen by select_fit_rows.

    Args:
        table: Sieve data.
        p_lo: Lowest passing fraction used.
        p_hi_range: Passing range that closes the selection.

    Returns:
        Fitted RosinRammlerModel.
    """
    rows = select_fit_rows(table, p_lo, p_hi_range)
    fractions = table.passing_fraction[rows]
    rows = rows[fractions > 0]
    if rows.size < 3:
        raise InsufficientDataError(
            f"Sieve table {table.pile_label}: {rows.size} rows survive the constraints, at least 3 are needed"
        )
    x = np.log(table.sieve_mm[rows])
    y = np.log(-np.log1p(-table.passing_fraction[rows]))
    slope, intercept = np.polyfit(x, y, 1)
    if not slope > 0:
        raise DomainError(f"Sieve table {table.pile_label}: fitted uniformity index {slope:.4f} is not positive")
    model = RosinRammlerModel(n=float(slope), x_c_mm=float(np.exp(-intercept / slope)))
    logger.debug(f"RR fit {table.pile_label}: {rows.size} rows, n={model.n:.4f}, x_c={model.x_c_mm:.3f} mm")
    return model


def refine_rr(table: SieveTable, initial: Optional[RosinRammlerModel] = None, p_lo: float = 0.15,
              p_hi_range: Tuple[float, float] = (0.90, 0.96)) -> RosinRammlerModel:
    """Nonlinear least-squares refinement on cumulative-fraction residuals.

    Parameters are optimized in log space so both stay positive; the
    linearized fit seeds the search when ``initial`` is None.
    """
    initial = initial or fit_rr(table, p_lo, p_hi_range)
    rows = select_fit_rows(table, p_lo, p_hi_range)
    sizes = table.sieve_mm[rows]
    observed = table.passing_fraction[rows]

    def residuals(theta: np.ndarray) -> np.ndarray:
        n, x_c = np.exp(theta)
        return -np.expm1(-np.power(sizes / x_c, n)) - observed

    result = optimize.least_squares(residuals, np.log([initial.n, initial.x_c_mm]), method='lm')
    if not result.success:
        logger.warning(f"RR refinement for {table.pile_label} did not converge: {result.message}")
        return initial
    n, x_c = np.exp(result.x)
    return RosinRammlerModel(n=float(n), x_c_mm=float(x_c))


def fit_residual_ss(table: SieveTable, model: RosinRammlerModel, p_lo: float = 0.15,
                    p_hi_range: Tuple[float, float] = (0.90, 0.96)) -> float:
    """Sum of squared cumulative-fraction residuals over the fit rows."""
    rows = select_fit_rows(table, p_lo, p_hi_range)
    diff = rr_cdf(model, table.sieve_mm[rows]) - table.passing_fraction[rows]
    return float(np.sum(np.square(diff)))


def sieve_mean_size(table: SieveTable, round_mm: bool = True, refine: bool = False) -> float:
    """Mean particle size of a sieved pile, optionally rounded to whole millimetres."""
    model = refine_rr(table) if refine else fit_rr(table)
    x_bar = rr_mean(model)
    return float(np.round(x_bar)) if round_mm else x_bar


class MassCDF:
    """Right-continuous step function of cumulative mass fraction over size."""

    def __init__(self, sizes_mm: np.ndarray, cumulative: np.ndarray):
        self.sizes_mm = sizes_mm
        self.cumulative = cumulative

    def __call__(self, x_mm: ArrayLike) -> Union[float, np.ndarray]:
        idx = np.searchsorted(self.sizes_mm, np.asarray(x_mm, dtype=float), side='right')
        value = np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)
        return float(value) if value.ndim == 0 else value

    def sup_distance(self, model: RosinRammlerModel, d_max_mm: Optional[float] = None) -> float:
        """Kolmogorov distance to a Rosin-Rammler law, optionally truncated at d_max_mm."""
        reference = rr_cdf(model, self.sizes_mm)
        if d_max_mm is not None:
            reference = np.minimum(reference / rr_cdf(model, d_max_mm), 1.0)
        before = np.concatenate(([0.0], self.cumulative[:-1]))
        return float(max(np.max(np.abs(self.cumulative - reference)), np.max(np.abs(before - reference))))


def empirical_mass_cdf(particles: Iterable[Tuple[float, float]]) -> MassCDF:
    """Cumulative mass fraction of a set of (diameter_mm, mass_kg) particles.

    Args:
        particles: Pairs of size and mass; a pair may stand for a whole size class.

    Returns:
        MassCDF equal to 1 at the largest size.
    """
    data = np.asarray(list(particles) if not isinstance(particles, np.ndarray) else particles, dtype=float)
    if data.size == 0:
        raise DomainError("Mass CDF of an empty particle set")
    data = data.reshape(-1, 2)
    if np.any(data[:, 1] <= 0):
        raise DomainError("Particle masses must be positive")

    sizes, inverse = np.unique(data[:, 0], return_inverse=True)
    mass = np.bincount(inverse, weights=data[:, 1])
    cumulative = np.cumsum(mass) / mass.sum()
    cumulative[-1] = 1.0
    return MassCDF(sizes, cumulative)
