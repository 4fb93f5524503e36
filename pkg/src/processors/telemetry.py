import os
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import signal

from ..utils.errors import (
    AlignmentError,
    DomainError,
    ParseError,
    RangeError,
    SchemaError,
)

logger = logging.getLogger(__name__)

# Channel name -> wire units.
CHANNEL_REGISTRY = {
    'bucket_acc_x': 'm/s^2',
    'bucket_acc_y': 'm/s^2',
    'bucket_acc_z': 'm/s^2',
    'boom_acc_x': 'm/s^2',
    'boom_acc_y': 'm/s^2',
    'boom_acc_z': 'm/s^2',
    'p_base': 'bar',
    'p_rod': 'bar',
    'd_bucket': 'mm',
    'd_lift': 'mm',
    'speed': 'm/s',
}

BAR_TO_PA = 1e5


@dataclass(frozen=True, eq=False)
class Channel:
    """Uniformly sampled time series; sample k sits at t0_s + k / rate_hz."""

    name: str
    rate_hz: float
    samples: np.ndarray
    t0_s: float = 0.0
    units: str = ''

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise DomainError(f"Channel {self.name}: rate_hz must be positive, got {self.rate_hz}")
        data = np.array(self.samples, dtype=float)
        if data.ndim != 1:
            raise DomainError(f"Channel {self.name}: samples must be one-dimensional")
        data.setflags(write=False)
        object.__setattr__(self, 'samples', data)
        object.__setattr__(self, 'rate_hz', float(self.rate_hz))
        object.__setattr__(self, 't0_s', float(self.t0_s))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.samples.size) / self.rate_hz

    @property
    def end_s(self) -> float:
        """Timestamp of the last sample."""
        return self.t0_s + (self.samples.size - 1) / self.rate_hz

    def with_samples(self, samples: np.ndarray, units: Optional[str] = None,
                     name: Optional[str] = None) -> 'Channel':
        return Channel(name=name or self.name, rate_hz=self.rate_hz, samples=samples,
                       t0_s=self.t0_s, units=self.units if units is None else units)


@dataclass(frozen=True)
class CylinderGeometry:
    """Hydraulic lift cylinder cross sections."""

    area_base_m2: float = 0.031415
    area_rod_m2: float = 0.019175

    def __post_init__(self):
        if not self.area_base_m2 > self.area_rod_m2 > 0:
            raise DomainError(
                f"Cylinder areas must satisfy base > rod > 0, got "
                f"{self.area_base_m2} and {self.area_rod_m2}"
            )


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """One excavation pass: channels plus the metadata the analysis groups by."""

    trial_id: str
    pile_label: str
    operator: str
    day: int
    channels: Dict[str, Channel] = field(default_factory=dict)
    payload_mass_kg: Optional[float] = None

    def __post_init__(self):
        unknown = sorted(set(self.channels) - set(CHANNEL_REGISTRY))
        if unknown:
            raise SchemaError(f"Trial {self.trial_id}: unknown channel(s) {', '.join(unknown)}")
        if self.payload_mass_kg is not None and not self.payload_mass_kg > 0:
            raise DomainError(f"Trial {self.trial_id}: payload_mass_kg must be positive")

    def channel(self, name: str) -> Channel:
        """Return a channel or raise SchemaError naming the missing one."""
        if name not in self.channels:
            raise SchemaError(f"Trial {self.trial_id}: channel '{name}' is missing")
        return self.channels[name]


def _read_numeric_csv(path: str) -> pd.DataFrame:
    """Read a headed CSV, converting every cell to float and reporting the first bad line."""
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty, header row is mandatory", path=path, line=1)
    except pd.errors.ParserError as e:
        raise ParseError(f"unreadable CSV ({e})", path=path)

    raw.columns = [str(c).strip() for c in raw.columns]
    if 't_s' not in raw.columns:
        raise ParseError("header must contain a 't_s' column", path=path, line=1)

    numeric = {}
    bad_rows = []
    for column in raw.columns:
        values = pd.to_numeric(raw[column].str.strip(), errors='coerce')
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            bad_rows.append((int(bad[0]), column))
        numeric[column] = values.to_numpy(dtype=float)
    if bad_rows:
        row, column = min(bad_rows)
        # +2: one for the header, one for 1-based numbering
        raise ParseError(
            f"non-numeric value {raw[column].iloc[row]!r} in column '{column}'",
            path=path, line=row + 2,
        )
    return pd.DataFrame(numeric)


def load_manifest(manifest_path: str) -> dict:
    """Load and validate a trial manifest JSON file.

    Args:
        manifest_path: Path to the manifest.

    Returns:
        Manifest dictionary.
    """
    with open(manifest_path, 'r', encoding='utf-8') as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON ({e.msg})", path=manifest_path, line=e.lineno)

    for key in ('trial_id', 'pile_label', 'operator', 'day', 'channels'):
        if key not in manifest:
            raise SchemaError(f"{manifest_path}: manifest field '{key}' is missing")
    for entry in manifest['channels']:
        for key in ('name', 'file', 'rate_hz'):
            if key not in entry:
                raise SchemaError(f"{manifest_path}: channel entry lacks '{key}'")
    return manifest


def _payload_mass(manifest: dict) -> Optional[float]:
    value = manifest.get('payload_mass_kg')
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value) or value <= 0:
        raise SchemaError(
            f"Trial {manifest['trial_id']}: payload_mass_kg must be a positive number, got {value!r}"
        )
    return float(value)


def load_trial(path: str, manifest: dict) -> TrialRecord:
    """Load one trial from CSV files described by a manifest.

    Channel files hold either ``t_s,value`` or ``t_s`` plus one column per
    channel name (wide layout). Rates come from the manifest.

    Args:
        path: Directory the manifest's file entries are relative to.
        manifest: Parsed manifest dictionary.

    Returns:
        TrialRecord with every declared channel.
    """
    payload_mass_kg = _payload_mass(manifest)
    frames: Dict[str, pd.DataFrame] = {}
    channels: Dict[str, Channel] = {}

    for entry in manifest['channels']:
        name = entry['name']
        if name not in CHANNEL_REGISTRY:
            raise SchemaError(f"Trial {manifest['trial_id']}: unknown channel '{name}'")
        file_path = os.path.join(path, entry['file'])
        if not os.path.exists(file_path):
            raise SchemaError(f"Trial {manifest['trial_id']}: channel '{name}' file not found: {file_path}")
        if file_path not in frames:
            frames[file_path] = _read_numeric_csv(file_path)
        frame = frames[file_path]

        if 'value' in frame.columns and len(frame.columns) == 2:
            column = 'value'
        elif name in frame.columns:
            column = name
        else:
            raise SchemaError(f"Trial {manifest['trial_id']}: channel '{name}' not present in {file_path}")

        rate_hz = float(entry['rate_hz'])
        times = frame['t_s'].to_numpy()
        if times.size == 0:
            raise SchemaError(f"Trial {manifest['trial_id']}: channel '{name}' has no samples")
        expected = times[0] + np.arange(times.size) / rate_hz
        if np.max(np.abs(times - expected)) > 0.5 / rate_hz:
            raise SchemaError(
                f"Trial {manifest['trial_id']}: channel '{name}' timestamps do not match rate {rate_hz} Hz"
            )
        channels[name] = Channel(
            name=name,
            rate_hz=rate_hz,
            samples=frame[column].to_numpy(),
            t0_s=float(times[0]),
            units=entry.get('units', CHANNEL_REGISTRY[name]),
        )

    logger.debug(f"Loaded trial {manifest['trial_id']} with {len(channels)} channels")
    return TrialRecord(
        trial_id=str(manifest['trial_id']),
        pile_label=str(manifest['pile_label']),
        operator=str(manifest['operator']),
        day=int(manifest['day']),
        channels=channels,
        payload_mass_kg=payload_mass_kg,
    )


def discover_manifests(directory: str) -> List[str]:
    """Sorted paths of the trial manifests in a directory.

    JSON files without a 'channels' list (reports, ground truth) are skipped.
    """
    if not os.path.isdir(directory):
        raise SchemaError(f"Manifest directory not found: {directory}")
    manifests = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith('.json'):
            continue
        path = os.path.join(directory, name)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                content = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON ({e.msg})", path=path, line=e.lineno)
        if isinstance(content, dict) and isinstance(content.get('channels'), list):
            manifests.append(path)
        else:
            logger.debug(f"Skipping non-manifest JSON {path}")
    return manifests


def load_trial_from_manifest(manifest_path: str) -> TrialRecord:
    """Convenience wrapper: read a manifest and the files next to it."""
    manifest = load_manifest(manifest_path)
    return load_trial(os.path.dirname(os.path.abspath(manifest_path)), manifest)


def write_trial(trial: TrialRecord, out_dir: str) -> str:
    """Write a trial as one ``t_s,value`` CSV per channel plus a manifest.

    Args:
        trial: Trial to write.
        out_dir: Target directory (created if needed).

    Returns:
        Path of the written manifest.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries: List[dict] = []
    for name in sorted(trial.channels):
        ch = trial.channels[name]
        file_name = f"{trial.trial_id}_{name}.csv"
        pd.DataFrame({'t_s': ch.times, 'value': ch.samples}).to_csv(
            os.path.join(out_dir, file_name), index=False, float_format='%.10g'
        )
        entries.append({'name': name, 'file': file_name, 'rate_hz': ch.rate_hz, 'units': ch.units})

    manifest = {
        'trial_id': trial.trial_id,
        'pile_label': trial.pile_label,
        'operator': trial.operator,
        'day': trial.day,
        'channels': entries,
    }
    if trial.payload_mass_kg is not None:
        manifest['payload_mass_kg'] = trial.payload_mass_kg

    manifest_path = os.path.join(out_dir, f"{trial.trial_id}.json")
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return manifest_path


def segment(ch: Channel, t_start_s: float, t_end_s: float) -> Channel:
    """Return the samples whose timestamps lie in [t_start_s, t_end_s]."""
    tol = 1e-9 + 0.5 / ch.rate_hz
    if t_start_s < ch.t0_s - tol or t_end_s > ch.end_s + tol or t_end_s <= t_start_s:
        raise RangeError(
            f"Window [{t_start_s:.4f}, {t_end_s:.4f}] s outside channel {ch.name} "
            f"extent [{ch.t0_s:.4f}, {ch.end_s:.4f}] s"
        )
    first = max(0, int(np.ceil((t_start_s - ch.t0_s) * ch.rate_hz - 1e-9)))
    last = min(len(ch) - 1, int(np.floor((t_end_s - ch.t0_s) * ch.rate_hz + 1e-9)))
    return Channel(name=ch.name, rate_hz=ch.rate_hz, samples=ch.samples[first:last + 1],
                   t0_s=ch.t0_s + first / ch.rate_hz, units=ch.units)


def highpass(ch: Channel, cutoff_hz: float, order: int = 4) -> Channel:
    """Zero-phase Butterworth high-pass filter.

    The filter runs forward and backward over an odd reflection of the
    signal, so DC passes through the padding unchanged and is removed
    without edge steps.

    Args:
        ch: Input channel.
        cutoff_hz: -3 dB corner of a single pass.
        order: Butterworth order of a single pass.

    Returns:
        Filtered channel with the same rate, start time and length.
    """
    nyquist = ch.rate_hz / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise DomainError(f"Cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz for channel {ch.name}")
    if len(ch) < 3:
        raise DomainError(f"Channel {ch.name} too short to filter ({len(ch)} samples)")

    sos = signal.butter(order, cutoff_hz, btype='highpass', fs=ch.rate_hz, output='sos')
    padlen = min(len(ch) - 1, int(np.ceil(3.0 * ch.rate_hz / cutoff_hz)))
    filtered = signal.sosfiltfilt(sos, ch.samples, padtype='odd', padlen=padlen)
    return ch.with_samples(filtered)


def derivative(ch: Channel) -> Channel:
    """Central-difference time derivative; one-sided second-order at the ends."""
    if len(ch) < 3:
        raise DomainError(f"Derivative needs at least 3 samples, channel {ch.name} has {len(ch)}")
    rate = np.gradient(ch.samples, 1.0 / ch.rate_hz, edge_order=2)
    units = f"{ch.units}/s" if ch.units else '1/s'
    return ch.with_samples(rate, units=units)


def lift_force(p_base: Channel, p_rod: Channel, geom: Optional[CylinderGeometry] = None) -> Channel:
    """Force of the two lift cylinders from base and rod pressures in bar.

    Args:
        p_base: Base-side pressure (bar).
        p_rod: Rod-side pressure (bar).
        geom: Cylinder cross sections; defaults to the LHD's cylinders.

    Returns:
        Force channel in newtons; negative values pull the boom down.
    """
    geom = geom or CylinderGeometry()
    if not np.isclose(p_base.rate_hz, p_rod.rate_hz) or len(p_base) != len(p_rod):
        raise AlignmentError(
            f"Pressure channels differ: {p_base.rate_hz} Hz x {len(p_base)} vs "
            f"{p_rod.rate_hz} Hz x {len(p_rod)}"
        )
    force = 2.0 * (geom.area_base_m2 * p_base.samples - geom.area_rod_m2 * p_rod.samples) * BAR_TO_PA
    return Channel(name='lift_force', rate_hz=p_base.rate_hz, samples=force,
                   t0_s=p_base.t0_s, units='N')


def resample(ch: Channel, target_hz: float) -> Channel:
    """Change a channel's sample rate.

    Downsampling uses a polyphase anti-alias filter; upsampling uses linear
    interpolation so slow channels can be laid over fast ones.

    Args:
        ch: Input channel.
        target_hz: Output rate.

    Returns:
        Channel at ``target_hz`` starting at the same time.
    """
    if not target_hz > 0:
        raise DomainError(f"Target rate must be positive, got {target_hz}")
    if np.isclose(target_hz, ch.rate_hz, rtol=1e-12, atol=0.0):
        return ch.with_samples(ch.samples.copy())

    if target_hz < ch.rate_hz:
        ratio = Fraction(target_hz / ch.rate_hz).limit_denominator(1000)
        up, down = ratio.numerator, ratio.denominator
        if not np.isclose(ch.rate_hz * up / down, target_hz, rtol=1e-9, atol=0.0):
            raise DomainError(
                f"Target rate {target_hz} Hz is not a ratio p/q (q <= 1000) of {ch.rate_hz} Hz; "
                f"nearest is {ch.rate_hz * up / down:.6g} Hz"
            )
        out = signal.resample_poly(ch.samples, up, down, padtype='line')
        return Channel(name=ch.name, rate_hz=ch.rate_hz * up / down, samples=out,
                       t0_s=ch.t0_s, units=ch.units)

    n_out = int(np.floor((len(ch) - 1) * target_hz / ch.rate_hz + 1e-9)) + 1
    new_times = ch.t0_s + np.arange(n_out) / target_hz
    out = np.interp(new_times, ch.times, ch.samples)
    return Channel(name=ch.name, rate_hz=target_hz, samples=out, t0_s=ch.t0_s, units=ch.units)
