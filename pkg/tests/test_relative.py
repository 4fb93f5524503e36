import numpy as np
import pandas as pd
import pytest

from src.processors.features import ExcavationWindow, WaveletFeature
from src.processors.relative import (
    ReferenceCalibration,
    RelativeEstimate,
    build_report,
    calibrate,
    classification_accuracy,
    classify,
    classify_z,
    expected_classes,
    per_trial_estimates,
    relative_size,
    sieve_ratios,
    summarize,
    write_plot_data,
)
from src.utils.errors import (
    DegenerateReferenceError,
    DomainError,
    InsufficientDataError,
    ScopeError,
)

WINDOW = ExcavationWindow(2.0, 9.5, 'bucket_extension')


def zf(value, pile='0/90', source='bucket:imu1', operator='A', trial_id=None, kind='zeta'):
    return WaveletFeature(kind, value, source, WINDOW, (4.0, 500.0),
                          trial_id=trial_id or f"{pile}-{value}", pile_label=pile, operator=operator)


@pytest.fixture
def reference_features():
    return [zf(v, trial_id=f"r{i}") for i, v in enumerate([9.0, 10.0, 11.0, 10.0])]


def test_calibrate_mean_and_unbiased_std(reference_features):
    ref = calibrate(reference_features + [zf(50.0, kind='beta')], 'bucket', '0/90', xbar_ref_mm=33.0)
    assert ref.mu_ref == pytest.approx(10.0)
    assert ref.sigma_ref == pytest.approx(np.std([9.0, 10.0, 11.0, 10.0], ddof=1))
    assert ref.n_trials == 4
    assert ref.source == 'bucket:imu1'
    assert ref.xbar_ref_mm == 33.0


def test_calibrate_rejects_mixed_epochs(reference_features):
    features = reference_features + [zf(10.0, source='bucket:imu2'), zf(10.5, source='bucket:imu2')]
    with pytest.raises(ScopeError):
        calibrate(features, 'bucket', '0/90')
    ref = calibrate(features, 'bucket:imu2', '0/90')
    assert ref.n_trials == 2


def test_calibrate_needs_two_trials():
    with pytest.raises(InsufficientDataError):
        calibrate([zf(10.0)], 'bucket', '0/90')


def test_calibrate_per_operator(reference_features):
    features = reference_features + [zf(30.0, operator='B', trial_id='b1'), zf(32.0, operator='B', trial_id='b2')]
    ref = calibrate(features, 'bucket', '0/90', operator='B')
    assert ref.mu_ref == pytest.approx(31.0)
    assert ref.operator == 'B'


def test_reference_must_be_positive():
    with pytest.raises(DegenerateReferenceError):
        ReferenceCalibration('bucket:imu1', '0/90', 0.0, 1.0, 5)


def test_relative_size_ratio_and_delta_std():
    ref = ReferenceCalibration('bucket:imu1', '0/90', 10.0, 1.0, 4, xbar_ref_mm=33.0)
    values = [18.0, 20.0, 22.0]
    est = relative_size([zf(v, pile='0/150', trial_id=str(v)) for v in values], ref)
    assert est.ratio == pytest.approx(2.0)
    var_mean = np.var(values, ddof=1) / 3
    expected_std = np.sqrt(var_mean / 100.0 + (400.0 / 10.0 ** 4) * 1.0 / 4)
    assert est.ratio_std == pytest.approx(expected_std)
    assert est.xbar_est_mm == pytest.approx(66.0)
    assert est.z_score == pytest.approx(10.0)
    assert est.n == 3
    assert not est.cross_operator


def test_relative_size_rejects_other_source():
    ref = ReferenceCalibration('bucket:imu1', '0/90', 10.0, 1.0, 4)
    with pytest.raises(ScopeError):
        relative_size([zf(5.0, source='boom:imu')], ref)
    with pytest.raises(InsufficientDataError):
        relative_size([], ref)


def test_relative_size_flags_cross_operator():
    ref = ReferenceCalibration('bucket:imu1', '0/90', 10.0, 1.0, 4, operator='A')
    est = relative_size([zf(12.0, operator='B')], ref)
    assert est.cross_operator


@pytest.mark.parametrize('z,p,expected', [
    (-1.7, 0.90, 'smaller'),
    (-1.645, 0.90, 'indistinguishable'),
    (0.0, 0.99, 'indistinguishable'),
    (1.645, 0.90, 'indistinguishable'),
    (1.7, 0.90, 'larger'),
    (1.7, 0.95, 'indistinguishable'),
    (2.6, 0.99, 'larger'),
])
def test_classify_z(z, p, expected):
    assert classify_z(z, p) == expected


def test_classify_z_unknown_level():
    with pytest.raises(DomainError):
        classify_z(0.0, 0.8)


def test_classify_against_reference():
    ref = ReferenceCalibration('bucket:imu1', '0/90', 10.0, 1.0, 4)
    assert classify(zf(7.0), ref) == 'smaller'
    assert classify(zf(10.5), ref) == 'indistinguishable'
    assert classify(zf(13.0), ref, 0.99) == 'larger'
    with pytest.raises(ScopeError):
        classify(zf(13.0, source='lift:pressure'), ref)
    flat = ReferenceCalibration('bucket:imu1', '0/90', 10.0, 0.0, 4)
    with pytest.raises(DegenerateReferenceError):
        classify(zf(13.0), flat)


def test_summarize_groups_per_pile(reference_features):
    ref = calibrate(reference_features, 'bucket', '0/90')
    coarse = [zf(v, pile='0/150', trial_id=f"c{i}") for i, v in enumerate([24.0, 26.0])]
    rows = summarize(per_trial_estimates(reference_features + coarse, ref))
    assert [r['pile'] for r in rows] == ['0/150', '0/90']
    coarse_row = rows[0]
    assert coarse_row['ratio_mean'] == pytest.approx(2.5)
    assert coarse_row['ratio_std'] == pytest.approx(np.std([2.4, 2.6], ddof=1))
    assert coarse_row['n'] == 2
    assert coarse_row['class_counts']['0.90']['larger'] == 2
    assert rows[1]['ratio_mean'] == pytest.approx(1.0)
    assert sum(rows[1]['class_counts']['0.99'].values()) == 4


def test_zero_zeta_trial_counts_as_smaller():
    reference = [zf(9.0, trial_id='r0'), zf(11.0, trial_id='r1')]
    silent = zf(0.0, pile='0/32', trial_id='s0')
    ref = calibrate(reference, 'bucket', '0/90')
    estimates = per_trial_estimates(reference + [silent], ref)
    assert [e.ratio for e in estimates] == pytest.approx([0.9, 1.1, 0.0])
    rows = summarize(estimates)
    assert rows[0]['pile'] == '0/32'
    assert rows[0]['ratio_mean'] == 0.0
    assert rows[0]['class_counts']['0.90']['smaller'] == 1
    assert classify(silent, ref) == 'smaller'


def test_ratio_must_be_finite_and_non_negative():
    with pytest.raises(DomainError):
        RelativeEstimate(ratio=-0.5, ratio_std=0.0)
    with pytest.raises(DomainError):
        RelativeEstimate(ratio=float('nan'), ratio_std=0.0)


def test_expected_classes_and_accuracy(reference_features):
    truth = expected_classes({'0/32': 13.0, '0/90': 33.0, '0/150': 84.0, '0/91': 33.5}, '0/90')
    assert truth == {'0/32': 'smaller', '0/90': 'indistinguishable', '0/150': 'larger', '0/91': 'indistinguishable'}
    ref = calibrate(reference_features, 'bucket', '0/90')
    features = reference_features + [zf(30.0, pile='0/150', trial_id='c1'), zf(10.0, pile='0/150', trial_id='c2')]
    accuracy = classification_accuracy(features, ref, truth)
    assert accuracy['0/150'] == 50.0
    assert accuracy['0/90'] == 100.0


def test_sieve_ratios_requires_reference():
    assert sieve_ratios({'0/32': 13.0, '0/90': 33.0}, '0/90')['0/32'] == pytest.approx(13.0 / 33.0)
    with pytest.raises(DomainError):
        sieve_ratios({'0/32': 13.0}, '0/90')


def test_report_and_plot_data(reference_features, tmp_path):
    ref = calibrate(reference_features, 'bucket', '0/90')
    rows = summarize(per_trial_estimates(reference_features, ref))
    report = build_report(ref, rows, {'tool': 'dig2size'}, accuracy={'0.90': {'0/90': 100.0}})
    assert report['schema_version'] == 1
    assert report['reference']['mu'] == pytest.approx(10.0)
    assert report['classification_accuracy']['0.90']['0/90'] == 100.0

    ratio_path, zeta_path = write_plot_data(rows, reference_features, str(tmp_path))
    ratios = pd.read_csv(ratio_path)
    assert list(ratios.columns) == ['pile', 'source', 'operator', 'ratio_mean', 'ratio_std', 'n']
    assert ratios['ratio_mean'].iloc[0] == pytest.approx(1.0)
    zetas = pd.read_csv(zeta_path)
    assert list(zetas['trial_id']) == ['r0', 'r1', 'r2', 'r3']
