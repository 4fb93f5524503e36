import os
from decimal import Decimal, getcontext

import numpy as np
import pytest

from conftest import SIEVE_DIR
from src.processors.granulometry import (
    RosinRammlerModel,
    SieveTable,
    empirical_mass_cdf,
    fit_residual_ss,
    fit_rr,
    load_sieve_table,
    refine_rr,
    rr_cdf,
    rr_mean,
    rr_quantile,
    select_fit_rows,
    sieve_mean_size,
)
from src.processors.relative import sieve_ratios
from src.utils.errors import DomainError, InsufficientDataError, ParseError, SchemaError

SIEVE_FITS = {
    # pile: (n, x_c_mm, x_bar_mm)
    '0/32': (0.8322, 12.000, 13.233),
    '0/63': (0.7506, 15.627, 18.594),
    '0/90': (0.5664, 19.993, 32.573),
    '0/150': (0.8519, 77.629, 84.337),
}


def decimal_cdf(n, x_c, x):
    getcontext().prec = 40
    z = (Decimal(repr(n)) * (Decimal(repr(x)) / Decimal(repr(x_c))).ln()).exp()
    return float(1 - (-z).exp())


@pytest.mark.parametrize('x', [0.063, 1.0, 12.0, 45.0, 300.0])
def test_rr_cdf_matches_high_precision(x):
    model = RosinRammlerModel(n=0.8322, x_c_mm=12.0)
    assert rr_cdf(model, x) == pytest.approx(decimal_cdf(0.8322, 12.0, x), rel=1e-12)


def test_rr_cdf_at_characteristic_size():
    model = RosinRammlerModel(n=1.7, x_c_mm=40.0)
    assert rr_cdf(model, 40.0) == pytest.approx(1.0 - np.exp(-1.0))
    assert rr_cdf(model, 0.0) == 0.0
    with pytest.raises(DomainError):
        rr_cdf(model, -1.0)


def test_rr_quantile_inverts_cdf():
    model = RosinRammlerModel(n=0.75, x_c_mm=16.0)
    p = np.array([0.01, 0.2, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(rr_cdf(model, rr_quantile(model, p)), p, rtol=1e-12)
    with pytest.raises(DomainError):
        rr_quantile(model, 1.0)


def test_rr_mean_exponential_case():
    # n = 1 is the exponential law, whose mean is x_c
    assert rr_mean(RosinRammlerModel(n=1.0, x_c_mm=25.0)) == pytest.approx(25.0)
    assert rr_mean(RosinRammlerModel(n=0.5, x_c_mm=10.0)) == pytest.approx(20.0)


def test_model_parameters_positive():
    with pytest.raises(DomainError):
        RosinRammlerModel(n=0.0, x_c_mm=10.0)


def test_fit_recovers_exact_law():
    model = RosinRammlerModel(n=1.3, x_c_mm=30.0)
    sizes = np.array([2.0, 4.0, 8.0, 16.0, 31.5, 45.0, 63.0, 90.0])
    table = SieveTable(sizes, 100.0 * rr_cdf(model, sizes), pile_label='exact')
    fitted = fit_rr(table, p_lo=0.0, p_hi_range=(0.95, 0.999))
    assert fitted.n == pytest.approx(1.3, rel=1e-9)
    assert fitted.x_c_mm == pytest.approx(30.0, rel=1e-9)


@pytest.mark.parametrize('pile', sorted(SIEVE_FITS))
def test_bundled_sieve_fits(pile):
    table = load_sieve_table(os.path.join(SIEVE_DIR, pile.replace('/', '_') + '.csv'))
    assert table.pile_label == pile
    n, x_c, x_bar = SIEVE_FITS[pile]
    model = fit_rr(table)
    assert model.n == pytest.approx(n, abs=5e-4)
    assert model.x_c_mm == pytest.approx(x_c, rel=1e-3)
    assert rr_mean(model) == pytest.approx(x_bar, rel=1e-3)


def test_published_parameters_reproduce_mean_sizes():
    # rounded characteristic sizes used by the presets
    published = {'0/32': (0.8322, 12.0), '0/63': (0.7506, 16.0), '0/90': (0.5664, 20.0)}
    for pile, (n, x_c) in published.items():
        assert rr_mean(RosinRammlerModel(n, x_c)) == pytest.approx(round(SIEVE_FITS[pile][2]), abs=0.5)
    # 0/150 only agrees with its unrounded characteristic size
    n, x_c, _ = SIEVE_FITS['0/150']
    assert rr_mean(RosinRammlerModel(n, x_c)) == pytest.approx(84.0, abs=0.5)
    assert rr_mean(RosinRammlerModel(n, 78.0)) > 84.5


def test_sieve_mean_sizes_and_ratios():
    means = {}
    for name in sorted(os.listdir(SIEVE_DIR)):
        table = load_sieve_table(os.path.join(SIEVE_DIR, name))
        means[table.pile_label] = sieve_mean_size(table)
    assert means == {'0/32': 13.0, '0/63': 19.0, '0/90': 33.0, '0/150': 84.0}
    ratios = sieve_ratios(means, '0/90')
    assert ratios['0/90'] == 1.0
    assert ratios['0/32'] == pytest.approx(13.0 / 33.0)
    assert ratios['0/150'] == pytest.approx(84.0 / 33.0)
    assert {p: round(r, 2) for p, r in ratios.items()} == {'0/32': 0.39, '0/63': 0.58, '0/90': 1.0, '0/150': 2.55}
    coarse = sieve_ratios(means, '0/150')
    assert {p: round(r, 2) for p, r in coarse.items()} == {'0/32': 0.15, '0/63': 0.23, '0/90': 0.39, '0/150': 1.0}


def test_select_fit_rows_for_0_90():
    table = load_sieve_table(os.path.join(SIEVE_DIR, '0_90.csv'))
    rows = select_fit_rows(table)
    # 1 mm (19%) through 63 mm (95%)
    assert table.sieve_mm[rows[0]] == 1.0
    assert table.sieve_mm[rows[-1]] == 63.0
    assert rows.size == 11


def test_select_fit_rows_without_closing_row():
    table = SieveTable([1.0, 2.0, 4.0, 8.0, 16.0], [10.0, 30.0, 60.0, 85.0, 100.0])
    rows = select_fit_rows(table)
    np.testing.assert_array_equal(table.sieve_mm[rows], [2.0, 4.0, 8.0])


def test_fit_needs_three_rows():
    table = SieveTable([1.0, 2.0, 4.0], [10.0, 50.0, 100.0])
    with pytest.raises(InsufficientDataError):
        fit_rr(table)


def test_refine_does_not_worsen_residual():
    table = load_sieve_table(os.path.join(SIEVE_DIR, '0_150.csv'))
    linear = fit_rr(table)
    refined = refine_rr(table, linear)
    assert fit_residual_ss(table, refined) <= fit_residual_ss(table, linear) + 1e-12
    assert refined.n == pytest.approx(linear.n, rel=0.25)


def test_sieve_table_validation():
    with pytest.raises(DomainError):
        SieveTable([1.0, 0.5], [10.0, 20.0])
    with pytest.raises(DomainError):
        SieveTable([1.0, 2.0], [30.0, 20.0])
    with pytest.raises(DomainError):
        SieveTable([1.0, 2.0], [30.0, 120.0])


def test_scaled_table_scales_mean_size():
    table = load_sieve_table(os.path.join(SIEVE_DIR, '0_63.csv'))
    assert sieve_mean_size(table.scaled(2.0), round_mm=False) == pytest.approx(
        2.0 * sieve_mean_size(table, round_mm=False), rel=1e-9)


def test_load_sieve_table_errors(tmp_path):
    missing = tmp_path / 'a.csv'
    missing.write_text("size,passing_pct\n1,10\n")
    with pytest.raises(SchemaError):
        load_sieve_table(str(missing))
    bad = tmp_path / 'b.csv'
    bad.write_text("sieve_mm,passing_pct\n1,10\n2,x\n")
    with pytest.raises(ParseError) as info:
        load_sieve_table(str(bad))
    assert info.value.line == 3


def test_empirical_mass_cdf_steps():
    cdf = empirical_mass_cdf([(1.0, 1.0), (2.0, 3.0), (1.0, 1.0), (4.0, 5.0)])
    np.testing.assert_allclose(cdf.sizes_mm, [1.0, 2.0, 4.0])
    np.testing.assert_allclose(cdf.cumulative, [0.2, 0.5, 1.0])
    assert cdf(0.5) == 0.0
    assert cdf(2.0) == pytest.approx(0.5)
    assert cdf(3.9) == pytest.approx(0.5)
    assert cdf(100.0) == 1.0
    with pytest.raises(DomainError):
        empirical_mass_cdf([])


def test_sup_distance_of_dense_sample_is_small():
    model = RosinRammlerModel(n=0.85, x_c_mm=20.0)
    levels = (np.arange(20000) + 0.5) / 20000
    sizes = rr_quantile(model, levels)
    # equal-mass particles at the law's quantiles
    cdf = empirical_mass_cdf(np.column_stack((sizes, np.ones_like(sizes))))
    assert cdf.sup_distance(model) < 1e-3
