import logging
import os
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np
import pandas as pd

from .features import DetectorConfig, detect_window
from .telemetry import Channel, TrialRecord
from ..utils.errors import Dig2SizeError, InsufficientDataError

logger = logging.getLogger(__name__)

# Speed is averaged over this stretch before first contact
ENTRY_LOOKBACK_S = 0.25

SUMMARY_COLUMNS = ('dig_time_s', 'entry_speed_m_s', 'd_bucket_at_entry_mm', 'd_lift_at_entry_mm')


@dataclass(frozen=True)
class DigStatistics:
    """How one excavation was driven: window, entry speed and cylinder positions at first contact."""

    trial_id: str
    pile_label: str
    operator: str
    day: int
    alpha1_s: float
    alpha2_s: float
    end_reason: str
    entry_speed_m_s: float
    d_bucket_at_entry_mm: float
    d_lift_at_entry_mm: float

    @property
    def dig_time_s(self) -> float:
        return self.alpha2_s - self.alpha1_s

    def to_row(self) -> dict:
        row = asdict(self)
        row['dig_time_s'] = self.dig_time_s
        return row


def value_at(ch: Channel, t_s: float) -> float:
    """Linearly interpolated channel value at t_s, held at the ends."""
    return float(np.interp(t_s, ch.times, ch.samples))


def entry_value(ch: Channel, alpha1_s: float, lookback_s: float = ENTRY_LOOKBACK_S) -> float:
    """Mean of the samples in [alpha1 - lookback, alpha1].

    Falls back to the interpolated value at alpha1 when the channel is too
    slow to have a sample in that stretch.
    """
    times = ch.times
    inside = (times >= alpha1_s - lookback_s) & (times <= alpha1_s)
    if not np.any(inside):
        return value_at(ch, alpha1_s)
    return float(ch.samples[inside].mean())


def dig_statistics(trial: TrialRecord, detector: DetectorConfig) -> DigStatistics:
    """Window and entry conditions of one trial.

    Raises:
        SchemaError: A channel the statistics need is missing.
        NoExcavationError: The detector finds no first contact.
    """
    window = detect_window(trial, detector)
    return DigStatistics(
        trial_id=trial.trial_id,
        pile_label=trial.pile_label,
        operator=trial.operator,
        day=trial.day,
        alpha1_s=window.alpha1_s,
        alpha2_s=window.alpha2_s,
        end_reason=window.end_reason,
        entry_speed_m_s=entry_value(trial.channel('speed'), window.alpha1_s),
        d_bucket_at_entry_mm=value_at(trial.channel('d_bucket'), window.alpha1_s),
        d_lift_at_entry_mm=value_at(trial.channel('d_lift'), window.alpha1_s),
    )


def collect_dig_statistics(trials: Iterable[TrialRecord],
                           detector: DetectorConfig) -> Tuple[List[DigStatistics], List[Dict[str, str]]]:
    """Statistics of every trial; failing trials are reported, not raised."""
    stats: List[DigStatistics] = []
    errors: List[Dict[str, str]] = []
    for trial in trials:
        try:
            stats.append(dig_statistics(trial, detector))
        except Dig2SizeError as e:
            logger.error(f"Error on trial {trial.trial_id}: {str(e)}")
            errors.append({'trial_id': trial.trial_id, 'error': str(e)})
    stats.sort(key=lambda s: s.trial_id)
    return stats, errors


def summarize_dig_statistics(stats: List[DigStatistics]) -> List[dict]:
    """One row per (operator, day): counts, means and unbiased stds, time-capped digs."""
    if not stats:
        raise InsufficientDataError("No dig statistics to summarize")
    frame = pd.DataFrame([s.to_row() for s in stats])
    rows = []
    for (operator, day), group in frame.groupby(['operator', 'day'], sort=True):
        row = {'operator': operator, 'day': int(day), 'n': int(len(group))}
        for column in SUMMARY_COLUMNS:
            values = group[column].to_numpy(dtype=float)
            row[f"{column}_mean"] = float(values.mean())
            row[f"{column}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        row['time_capped'] = int((group['end_reason'] == 'time_cap').sum())
        rows.append(row)
    return rows


def write_dig_statistics(stats: List[DigStatistics], summary: List[dict], out_dir: str) -> Tuple[str, str]:
    """Write dig_stats.csv (one row per trial) and dig_stats_summary.csv."""
    os.makedirs(out_dir, exist_ok=True)
    trials_path = os.path.join(out_dir, 'dig_stats.csv')
    summary_path = os.path.join(out_dir, 'dig_stats_summary.csv')
    pd.DataFrame([s.to_row() for s in stats]).to_csv(trials_path, index=False, float_format='%.10g')
    pd.DataFrame(summary).to_csv(summary_path, index=False, float_format='%.10g')
    logger.info(f"Wrote dig statistics of {len(stats)} trials to {out_dir}")
    return trials_path, summary_path
