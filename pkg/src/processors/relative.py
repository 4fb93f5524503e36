import os
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .features import WaveletFeature
from ..utils.errors import (
    DegenerateReferenceError,
    DomainError,
    InsufficientDataError,
    ScopeError,
)

logger = logging.getLogger(__name__)

# Two-sided probability bound -> z threshold
Z_THRESHOLDS = {
    0.90: 1.645,
    0.95: 1.960,
    0.99: 2.576,
}

CLASSES = ('smaller', 'indistinguishable', 'larger')


@dataclass(frozen=True)
class ReferenceCalibration:
    """Distribution of zeta on the reference pile for one source."""

    source: str
    pile_label: str
    mu_ref: float
    sigma_ref: float
    n_trials: int
    xbar_ref_mm: Optional[float] = None
    operator: Optional[str] = None

    def __post_init__(self):
        if not self.mu_ref > 0:
            raise DegenerateReferenceError(f"Reference mean must be positive, got {self.mu_ref}")
        if self.sigma_ref < 0:
            raise DomainError("Reference standard deviation must be non-negative")
        if self.n_trials < 2:
            raise InsufficientDataError(f"Reference needs at least 2 trials, got {self.n_trials}")

    def to_dict(self) -> dict:
        out = {
            'pile': self.pile_label,
            'source': self.source,
            'mu': self.mu_ref,
            'sigma': self.sigma_ref,
            'n': self.n_trials,
        }
        if self.xbar_ref_mm is not None:
            out['xbar_mm'] = self.xbar_ref_mm
        if self.operator is not None:
            out['operator'] = self.operator
        return out

    @classmethod
    def from_dict(cls, data: dict) -> 'ReferenceCalibration':
        return cls(
            source=str(data['source']),
            pile_label=str(data['pile']),
            mu_ref=float(data['mu']),
            sigma_ref=float(data['sigma']),
            n_trials=int(data['n']),
            xbar_ref_mm=data.get('xbar_mm'),
            operator=data.get('operator'),
        )


@dataclass(frozen=True)
class RelativeEstimate:
    """Mean-size ratio of a set of trials to the reference pile."""

    ratio: float
    ratio_std: float
    xbar_est_mm: Optional[float] = None
    pile_label: str = ''
    source: str = ''
    operator: str = ''
    n: int = 1
    z_score: Optional[float] = None
    cross_operator: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.ratio) and self.ratio >= 0):
            raise DomainError(f"Ratio must be finite and non-negative, got {self.ratio}")


def _source_matches(source: str, scope: str) -> bool:
    if ':' in scope:
        return source == scope
    return source.split(':', 1)[0] == scope


def _zeta_only(features: Sequence[WaveletFeature]) -> List[WaveletFeature]:
    return [f for f in features if f.kind == 'zeta']


def calibrate(features: Sequence[WaveletFeature], scope: str, pile: str,
              operator: Optional[str] = None, xbar_ref_mm: Optional[float] = None) -> ReferenceCalibration:
    """Estimate the reference distribution of zeta.

    Args:
        features: Extracted features; non-zeta kinds are ignored.
        scope: Source identifier, either ``bucket`` or ``bucket:imu2``.
        pile: Reference pile label.
        operator: Restrict to one operator's trials.
        xbar_ref_mm: Known mean size of the reference pile.

    Returns:
        ReferenceCalibration with sample mean and unbiased standard deviation.
    """
    selected = [
        f for f in _zeta_only(features)
        if f.pile_label == pile and _source_matches(f.source, scope)
        and (operator is None or f.operator == operator)
    ]
    sources = sorted({f.source for f in selected})
    if len(sources) > 1:
        raise ScopeError(f"Reference {pile} mixes sensor epochs {', '.join(sources)}; name one in the scope")
    if len(selected) < 2:
        raise InsufficientDataError(
            f"Reference {pile} on {scope} has {len(selected)} zeta value(s), at least 2 are needed"
        )
    values = np.array([f.value for f in selected])
    ref = ReferenceCalibration(
        source=sources[0],
        pile_label=pile,
        mu_ref=float(np.mean(values)),
        sigma_ref=float(np.std(values, ddof=1)),
        n_trials=values.size,
        xbar_ref_mm=xbar_ref_mm,
        operator=operator,
    )
    logger.info(f"Reference {pile} on {ref.source}: mu={ref.mu_ref:.6g}, sigma={ref.sigma_ref:.6g}, n={ref.n_trials}")
    return ref


def relative_size(zeta_i: Sequence[WaveletFeature], ref: ReferenceCalibration) -> RelativeEstimate:
    """Ratio of mean zeta to the reference mean.

    The standard deviation of the ratio is propagated to first order from
    both sample standard errors, treating the two samples as independent.
    """
    values = _zeta_only(zeta_i)
    if not values:
        raise InsufficientDataError("No zeta features to compare with the reference")
    mismatched = sorted({f.source for f in values if f.source != ref.source})
    if mismatched:
        raise ScopeError(f"Features from {', '.join(mismatched)} cannot use the {ref.source} reference")
    piles = sorted({f.pile_label for f in values})
    if len(piles) > 1:
        raise ScopeError(f"Ratio over several piles: {', '.join(piles)}")
    operators = sorted({f.operator for f in values})

    x = np.array([f.value for f in values])
    mean = float(np.mean(x))
    if mean == 0:
        logger.warning(f"Pile {piles[0]}: every zeta on {ref.source} is zero, ratio is 0")
    var_mean = float(np.var(x, ddof=1)) / x.size if x.size > 1 else 0.0
    mu = ref.mu_ref
    ratio = mean / mu
    ratio_std = float(np.sqrt(var_mean / mu ** 2 + (mean ** 2 / mu ** 4) * ref.sigma_ref ** 2 / ref.n_trials))

    cross = ref.operator is not None and any(op != ref.operator for op in operators)
    if cross:
        logger.warning(
            f"Pile {piles[0]}: operator(s) {', '.join(operators)} measured against a reference "
            f"calibrated for operator {ref.operator}"
        )
    return RelativeEstimate(
        ratio=ratio,
        ratio_std=ratio_std,
        xbar_est_mm=ratio * ref.xbar_ref_mm if ref.xbar_ref_mm is not None else None,
        pile_label=piles[0],
        source=ref.source,
        operator=','.join(operators),
        n=x.size,
        z_score=(mean - mu) / ref.sigma_ref if ref.sigma_ref > 0 else None,
        cross_operator=cross,
    )


def classify_z(z: float, p: float) -> str:
    """Class of a z-score at probability bound p; boundary points are indistinguishable."""
    if p not in Z_THRESHOLDS:
        raise DomainError(f"Probability bound must be one of {sorted(Z_THRESHOLDS)}, got {p}")
    z_p = Z_THRESHOLDS[p]
    if z < -z_p:
        return 'smaller'
    if z > z_p:
        return 'larger'
    return 'indistinguishable'


def classify(zeta_i: WaveletFeature, ref: ReferenceCalibration, p: float = 0.90) -> str:
    """Label one bucket smaller, indistinguishable or larger than the reference pile."""
    if zeta_i.source != ref.source:
        raise ScopeError(f"Feature from {zeta_i.source} cannot use the {ref.source} reference")
    if not ref.sigma_ref > 0:
        raise DegenerateReferenceError(f"Reference {ref.pile_label} has zero spread; z-scores are undefined")
    return classify_z((zeta_i.value - ref.mu_ref) / ref.sigma_ref, p)


def per_trial_estimates(features: Sequence[WaveletFeature], ref: ReferenceCalibration) -> List[RelativeEstimate]:
    """One RelativeEstimate per zeta feature in the reference's scope, ordered by trial id."""
    selected = sorted((f for f in _zeta_only(features) if f.source == ref.source), key=lambda f: f.trial_id)
    return [relative_size([f], ref) for f in selected]


def summarize(estimates: Union[Sequence[RelativeEstimate], Mapping[Tuple[str, str, str], Sequence[RelativeEstimate]]],
              levels: Sequence[float] = (0.90, 0.95, 0.99)) -> List[dict]:
    """Group per-trial ratios into mean +- standard deviation rows.

    Args:
        estimates: Per-trial estimates, or a mapping (pile, source, operator) -> estimates.
        levels: Probability bounds for the class counts.

    Returns:
        Report rows ordered by pile, source and operator.
    """
    if isinstance(estimates, Mapping):
        groups = {key: list(items) for key, items in estimates.items()}
    else:
        groups = {}
        for est in estimates:
            groups.setdefault((est.pile_label, est.source, est.operator), []).append(est)

    rows = []
    for key in sorted(groups):
        items = groups[key]
        if not items:
            logger.warning(f"Empty group {key} omitted from the summary")
            continue
        pile, source, operator = key
        ratios = np.array([e.ratio for e in items])
        row = OrderedDict(
            pile=pile,
            operator=operator,
            source=source,
            ratio_mean=float(np.mean(ratios)),
            ratio_std=float(np.std(ratios, ddof=1)) if ratios.size > 1 else 0.0,
            n=int(ratios.size),
        )
        xbar = [e.xbar_est_mm for e in items if e.xbar_est_mm is not None]
        if xbar:
            row['xbar_est_mm'] = float(np.mean(xbar))
        z_scores = [e.z_score for e in items if e.z_score is not None]
        if z_scores:
            row['class_counts'] = {
                f"{p:.2f}": {c: sum(1 for z in z_scores if classify_z(z, p) == c) for c in CLASSES}
                for p in levels
            }
        row['cross_operator'] = any(e.cross_operator for e in items)
        rows.append(dict(row))
    return rows


def expected_classes(pile_means_mm: Mapping[str, float], reference_pile: str,
                     tolerance: float = 0.05) -> Dict[str, str]:
    """Known smaller/larger relation of each pile from ground-truth mean sizes."""
    if reference_pile not in pile_means_mm:
        raise DomainError(f"Ground truth lacks the reference pile {reference_pile}")
    base = pile_means_mm[reference_pile]
    expected = {}
    for pile, mean in pile_means_mm.items():
        if mean > base * (1.0 + tolerance):
            expected[pile] = 'larger'
        elif mean < base * (1.0 - tolerance):
            expected[pile] = 'smaller'
        else:
            expected[pile] = 'indistinguishable'
    return expected


def classification_accuracy(features: Sequence[WaveletFeature], ref: ReferenceCalibration,
                            truth: Mapping[str, str], p: float = 0.90) -> Dict[str, float]:
    """Percentage of buckets per pile whose class matches the known relation.

    Args:
        features: Zeta features in the reference's scope.
        ref: Reference calibration.
        truth: Pile label -> expected class.
        p: Probability bound.

    Returns:
        Pile label -> percent correct.
    """
    hits: Dict[str, List[bool]] = {}
    for f in _zeta_only(features):
        if f.source != ref.source or f.pile_label not in truth:
            continue
        hits.setdefault(f.pile_label, []).append(classify(f, ref, p) == truth[f.pile_label])
    return {pile: 100.0 * sum(v) / len(v) for pile, v in sorted(hits.items())}


def sieve_ratios(mean_sizes_mm: Mapping[str, float], reference: str) -> Dict[str, float]:
    """Mean-size ratios of sieved piles to the reference pile."""
    if reference not in mean_sizes_mm:
        raise DomainError(f"Reference pile {reference} has no sieve mean size")
    base = mean_sizes_mm[reference]
    return {pile: float(mean / base) for pile, mean in sorted(mean_sizes_mm.items())}


def build_report(ref: ReferenceCalibration, rows: List[dict], provenance: dict,
                 accuracy: Optional[Dict[str, Dict[str, float]]] = None) -> dict:
    """Assemble the estimate report document."""
    report = {
        'schema_version': 1,
        'reference': ref.to_dict(),
        'rows': rows,
        'provenance': provenance,
    }
    if accuracy is not None:
        report['classification_accuracy'] = accuracy
    return report


def write_plot_data(rows: List[dict], features: Sequence[WaveletFeature], out_dir: str) -> List[str]:
    """Write ratio_vs_pile.csv and zeta_by_trial.csv for external plotting.

    Returns:
        Paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    columns = ['pile', 'source', 'operator', 'ratio_mean', 'ratio_std', 'n']
    ratio_path = os.path.join(out_dir, 'ratio_vs_pile.csv')
    pd.DataFrame([{c: r[c] for c in columns} for r in rows], columns=columns).to_csv(
        ratio_path, index=False, float_format='%.10g'
    )

    zeta_rows = sorted(
        ({'trial_id': f.trial_id, 'pile': f.pile_label, 'operator': f.operator,
          'source': f.source, 'zeta': f.value} for f in _zeta_only(features)),
        key=lambda r: (r['trial_id'], r['source']),
    )
    zeta_path = os.path.join(out_dir, 'zeta_by_trial.csv')
    pd.DataFrame(zeta_rows, columns=['trial_id', 'pile', 'operator', 'source', 'zeta']).to_csv(
        zeta_path, index=False, float_format='%.10g'
    )
    logger.info(f"Wrote plot data: {ratio_path}, {zeta_path}")
    return [ratio_path, zeta_path]
