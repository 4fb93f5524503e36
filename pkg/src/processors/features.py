import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .cwt import Scalogram
from .telemetry import TrialRecord, derivative
from ..utils.errors import (
    ContractViolation,
    DomainError,
    NoExcavationError,
    RangeError,
)

logger = logging.getLogger(__name__)

END_REASONS = ('bucket_extension', 'time_cap', 'end_of_data')
FEATURE_KINDS = ('beta', 'zeta')

# Detector source -> (channel prefix, default axis, default jerk threshold m/s^3)
DETECTOR_SOURCES = {
    'bucket_imu': ('bucket', 'z', 750.0),
    'boom_imu': ('boom', 'x', 500.0),
}


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds that open and close the excavation window."""

    source: str = 'bucket_imu'
    jerk_threshold: float = 750.0
    end_extension_mm: float = 420.0
    time_cap_s: float = 11.0
    axis: Optional[str] = None

    def __post_init__(self):
        if self.source not in DETECTOR_SOURCES:
            raise DomainError(f"Unknown detector source '{self.source}'")
        for name in ('jerk_threshold', 'end_extension_mm', 'time_cap_s'):
            if not getattr(self, name) > 0:
                raise DomainError(f"DetectorConfig.{name} must be positive")
        if self.axis is not None and self.axis not in ('x', 'y', 'z'):
            raise DomainError(f"DetectorConfig.axis must be x, y or z, got {self.axis}")

    @classmethod
    def for_source(cls, source: str, **overrides) -> 'DetectorConfig':
        """Detector with the default threshold of a sensor."""
        if source not in DETECTOR_SOURCES:
            raise DomainError(f"Unknown detector source '{source}'")
        params = {'source': source, 'jerk_threshold': DETECTOR_SOURCES[source][2]}
        params.update(overrides)
        return cls(**params)

    @property
    def channel_name(self) -> str:
        prefix, default_axis, _ = DETECTOR_SOURCES[self.source]
        return f"{prefix}_acc_{self.axis or default_axis}"


@dataclass(frozen=True)
class ExcavationWindow:
    """Interval from first bucket-pile contact to the end of filling."""

    alpha1_s: float
    alpha2_s: float
    end_reason: str

    def __post_init__(self):
        if not self.alpha2_s > self.alpha1_s:
            raise DomainError(f"Window end {self.alpha2_s} must follow start {self.alpha1_s}")
        if self.end_reason not in END_REASONS:
            raise DomainError(f"Unknown end_reason '{self.end_reason}'")

    @property
    def duration_s(self) -> float:
        return self.alpha2_s - self.alpha1_s

    def as_tuple(self) -> Tuple[float, float]:
        return (self.alpha1_s, self.alpha2_s)


@dataclass(frozen=True)
class WaveletFeature:
    """One beta or zeta value with the context it was computed in."""

    kind: str
    value: float
    source: str
    window: ExcavationWindow
    f_band: Tuple[float, float]
    trial_id: str = ''
    pile_label: str = ''
    operator: str = ''

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise DomainError(f"Unknown feature kind '{self.kind}'")
        if not self.value >= 0:
            raise DomainError(f"Feature value must be non-negative, got {self.value}")

    @property
    def epoch(self) -> str:
        return self.source.split(':', 1)[1] if ':' in self.source else ''

    def to_row(self) -> dict:
        """Flat report row."""
        return {
            'trial_id': self.trial_id,
            'pile_label': self.pile_label,
            'operator': self.operator,
            'source': self.source,
            'epoch': self.epoch,
            'kind': self.kind,
            'value': self.value,
            'alpha1_s': self.window.alpha1_s,
            'alpha2_s': self.window.alpha2_s,
            'end_reason': self.window.end_reason,
            'f_min': self.f_band[0],
            'f_max': self.f_band[1],
        }

    @classmethod
    def from_row(cls, row: dict) -> 'WaveletFeature':
        return cls(
            kind=str(row['kind']),
            value=float(row['value']),
            source=str(row['source']),
            window=ExcavationWindow(float(row['alpha1_s']), float(row['alpha2_s']), str(row['end_reason'])),
            f_band=(float(row['f_min']), float(row['f_max'])),
            trial_id=str(row.get('trial_id', '')),
            pile_label=str(row.get('pile_label', '')),
            operator=str(row.get('operator', '')),
        )


def sensor_epoch(source: str, day: int) -> str:
    """Sensor epoch label: the bucket IMU was replaced after the first day."""
    if source == 'bucket':
        return 'imu1' if day <= 1 else 'imu2'
    if source == 'boom':
        return 'imu'
    return 'pressure'


def detect_window(trial: TrialRecord, cfg: DetectorConfig) -> ExcavationWindow:
    """Find the excavation window of a trial.

    The window opens at the first sample whose absolute jerk on the raw
    acceleration exceeds the threshold and closes at the earliest of bucket
    extension, the time cap and the end of data.

    Args:
        trial: Trial with the detector's acceleration channel and d_bucket.
        cfg: Detector settings.

    Returns:
        ExcavationWindow with end_reason set.
    """
    accel = trial.channel(cfg.channel_name)
    extension = trial.channel('d_bucket')

    jerk = np.abs(derivative(accel).samples)
    above = np.flatnonzero(jerk > cfg.jerk_threshold)
    if above.size == 0:
        raise NoExcavationError(
            f"Trial {trial.trial_id}: |jerk| on {cfg.channel_name} never exceeds "
            f"{cfg.jerk_threshold} m/s^3 (max {jerk.max():.1f})"
        )
    alpha1 = float(accel.times[above[0]])

    ext_times = extension.times
    reached = np.flatnonzero((ext_times >= alpha1) & (extension.samples >= cfg.end_extension_mm))
    t_extension = float(ext_times[reached[0]]) if reached.size else np.inf
    t_cap = alpha1 + cfg.time_cap_s
    t_data = accel.end_s

    if t_extension <= t_cap and t_extension <= t_data:
        alpha2, reason = t_extension, 'bucket_extension'
    elif t_cap <= t_data:
        alpha2, reason = t_cap, 'time_cap'
    else:
        alpha2, reason = t_data, 'end_of_data'

    if not alpha2 > alpha1:
        raise NoExcavationError(f"Trial {trial.trial_id}: onset at {alpha1:.3f} s leaves no window")
    logger.debug(f"Trial {trial.trial_id}: window [{alpha1:.3f}, {alpha2:.3f}] s ({reason})")
    return ExcavationWindow(alpha1, alpha2, reason)


def _values_at(coeffs: np.ndarray, times: np.ndarray, t: float) -> np.ndarray:
    """Linearly interpolate every row of ``coeffs`` at time t."""
    k = int(np.clip(np.searchsorted(times, t, side='right') - 1, 0, times.size - 2))
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - w) * coeffs[:, k] + w * coeffs[:, k + 1]


def per_scale_response(scalogram: Scalogram, window: ExcavationWindow, mass_kg: float) -> np.ndarray:
    """Mass- and duration-normalized time integral of every scalogram row.

    The integral is trapezoidal over the row's piecewise-linear interpolant
    on [alpha1, alpha2].

    Args:
        scalogram: Transform covering the window.
        window: Excavation window.
        mass_kg: Particle mass M (use 1 when unknown).

    Returns:
        One value per scalogram row.
    """
    if not mass_kg > 0:
        raise DomainError(f"mass_kg must be positive, got {mass_kg}")
    times = scalogram.times_s
    if times.size < 2:
        raise RangeError("Scalogram has fewer than two time samples")
    # windows need not fall on the sample grid; allow one sample of slack
    tol = float(times[1] - times[0]) + 1e-9
    a1, a2 = window.alpha1_s, window.alpha2_s
    if a1 < times[0] - tol or a2 > times[-1] + tol:
        raise RangeError(
            f"Window [{a1:.4f}, {a2:.4f}] s outside scalogram extent [{times[0]:.4f}, {times[-1]:.4f}] s"
        )
    a1 = max(a1, times[0])
    a2 = min(a2, times[-1])
    if not a2 > a1:
        raise RangeError("Window and scalogram do not overlap")

    inner = (times > a1) & (times < a2)
    nodes = np.concatenate(([a1], times[inner], [a2]))
    values = np.hstack((
        _values_at(scalogram.coeffs_mag, times, a1)[:, None],
        scalogram.coeffs_mag[:, inner],
        _values_at(scalogram.coeffs_mag, times, a2)[:, None],
    ))
    return trapezoid(values, nodes, axis=1) / (mass_kg * (a2 - a1))


def _band_mask(freqs: np.ndarray, f_band: Tuple[float, float]) -> np.ndarray:
    tol = 1e-9 * max(1.0, f_band[1])
    return (freqs >= f_band[0] - tol) & (freqs <= f_band[1] + tol)


def beta(scalogram: Scalogram, window: ExcavationWindow, mass_kg: float,
         f_band: Optional[Tuple[float, float]] = None, source: str = '') -> WaveletFeature:
    """Peak over scales of the normalized per-scale response.

    Args:
        scalogram: Transform covering the window.
        window: Excavation window.
        mass_kg: Particle mass M.
        f_band: Restrict the search to rows inside this band; all rows if None.
        source: Source identifier stored on the feature.

    Returns:
        WaveletFeature of kind 'beta'.
    """
    response = per_scale_response(scalogram, window, mass_kg)
    freqs = scalogram.freqs_hz
    if f_band is None:
        f_band = (float(freqs.min()), float(freqs.max()))
    rows = _band_mask(freqs, f_band)
    if not rows.any():
        raise DomainError(f"No scalogram rows inside band {f_band}")
    return WaveletFeature(kind='beta', value=float(response[rows].max()), source=source,
                          window=window, f_band=(float(f_band[0]), float(f_band[1])))


def zeta(scalogram: Scalogram, window: ExcavationWindow, mass_kg: float,
         f_band: Optional[Tuple[float, float]] = None, cutoff_hz: Optional[float] = None,
         source: str = '') -> WaveletFeature:
    """Frequency integral of the normalized per-scale response over a band.

    Integration is trapezoidal in linear frequency over the grid nodes inside
    the band plus the band edges, where the response is linearly interpolated.

    Args:
        scalogram: Transform covering the window.
        window: Excavation window.
        mass_kg: Particle mass M.
        f_band: (f_min, f_max); defaults to [cutoff or lowest row, top row].
        cutoff_hz: High-pass cutoff the channel was filtered with; f_min may not undercut it.
        source: Source identifier stored on the feature.

    Returns:
        WaveletFeature of kind 'zeta'.
    """
    freqs = scalogram.freqs_hz
    bottom, top = float(freqs.min()), float(freqs.max())
    if f_band is None:
        f_band = (cutoff_hz if cutoff_hz is not None else bottom, top)
    f_min, f_max = float(f_band[0]), float(f_band[1])
    tol = 1e-9 * max(1.0, top)

    if cutoff_hz is not None and f_min < cutoff_hz - tol:
        raise ContractViolation(f"f_min {f_min} Hz lies below the high-pass cutoff {cutoff_hz} Hz")
    if not f_max > f_min:
        raise DomainError(f"Empty band [{f_min}, {f_max}] Hz")
    if f_min < bottom - tol or f_max > top + tol:
        raise DomainError(f"Band [{f_min}, {f_max}] Hz outside scalogram range [{bottom:.4f}, {top:.4f}] Hz")
    f_min, f_max = max(f_min, bottom), min(f_max, top)

    response = per_scale_response(scalogram, window, mass_kg)
    order = np.argsort(freqs)
    f_sorted, r_sorted = freqs[order], response[order]
    inner = (f_sorted > f_min) & (f_sorted < f_max)
    nodes = np.concatenate(([f_min], f_sorted[inner], [f_max]))
    values = np.concatenate((
        [np.interp(f_min, f_sorted, r_sorted)],
        r_sorted[inner],
        [np.interp(f_max, f_sorted, r_sorted)],
    ))
    return WaveletFeature(kind='zeta', value=float(trapezoid(values, nodes)), source=source,
                          window=window, f_band=(f_min, f_max))
