import os

import numpy as np
import pytest

from src.processors.features import DetectorConfig, detect_window
from src.processors.granulometry import RosinRammlerModel, empirical_mass_cdf, rr_mean
from src.processors.simulate import (
    ParticlePopulation,
    RockPileSpec,
    TrialSynthesisConfig,
    generate_campaign,
    impact_amplitude,
    particle_mass_kg,
    population_stats,
    sample_population,
    simulate_pile,
    synthesize_trial,
    write_campaign,
)
from src.processors.telemetry import CHANNEL_REGISTRY, discover_manifests
from src.utils.errors import ConfigError, DomainError


def test_particle_mass():
    # 100 mm cube-law particle at 2.63 t/m^3
    assert particle_mass_kg(100.0, 2.63) == pytest.approx(2.63)


def test_population_reaches_target_mass(base_pile):
    pop = sample_population(base_pile, 500.0, seed=3)
    assert pop.total_mass_kg >= 500.0
    assert pop.total_mass_kg < 500.0 + 2.0 * particle_mass_kg(base_pile.d_max_mm, 2.63)
    assert pop.diameters_mm.min() >= base_pile.d_min_mm
    assert pop.diameters_mm.max() <= base_pile.d_max_mm


def test_population_follows_pile_law(base_pile):
    pop = sample_population(base_pile, 2000.0, seed=5)
    cdf = empirical_mass_cdf(pop.mass_pairs())
    assert cdf.sup_distance(base_pile.model, base_pile.d_max_mm) < 0.05
    stats = population_stats(pop)
    assert stats['x_bar_mm'] == pytest.approx(base_pile.truncated_mean_mm(), rel=0.05)
    assert stats['M_kg'] == pytest.approx(pop.total_mass_kg)
    assert stats['N'] == pop.n_particles
    assert stats['d_bar_mm'] < stats['x_bar_mm']


def test_population_is_reproducible(base_pile):
    a = sample_population(base_pile, 300.0, seed=9)
    b = sample_population(base_pile, 300.0, seed=9)
    np.testing.assert_array_equal(a.diameters_mm, b.diameters_mm)
    np.testing.assert_array_equal(a.counts, b.counts)


def test_population_rejects_pile_truncated_below_its_law():
    spec = RockPileSpec(RosinRammlerModel(0.85, 20.0), d_max_mm=0.05, d_min_mm=0.01, label='dust')
    with pytest.raises(DomainError):
        sample_population(spec, 10.0, seed=1)


def test_truncated_mean_approaches_law_mean():
    spec = RockPileSpec(RosinRammlerModel(1.2, 10.0), d_max_mm=500.0, d_min_mm=1e-4)
    assert spec.truncated_mean_mm() == pytest.approx(rr_mean(spec.model), rel=1e-4)
    narrow = RockPileSpec(RosinRammlerModel(1.2, 10.0), d_max_mm=15.0)
    assert narrow.truncated_mean_mm() < 15.0


def test_scaled_pile(base_pile):
    double = base_pile.scaled(2.0)
    assert double.model.x_c_mm == 40.0
    assert double.d_max_mm == 240.0
    assert double.label == 'basex2'
    assert rr_mean(double.model) == pytest.approx(2.0 * rr_mean(base_pile.model))


def test_population_from_diameters():
    pop = ParticlePopulation.from_diameters([10.0, 5.0, 10.0, 20.0])
    np.testing.assert_array_equal(pop.diameters_mm, [5.0, 10.0, 20.0])
    np.testing.assert_array_equal(pop.counts, [1, 2, 1])
    assert pop.n_particles == 4
    assert pop.size_at_mass_fraction(np.array([0.0, 1.0])).tolist() == [5.0, 20.0]


def test_synthesis_config_validation():
    with pytest.raises(ConfigError):
        TrialSynthesisConfig(onset_s=5.0, dig_s=8.0, duration_s=11.5)
    with pytest.raises(ConfigError):
        # highest carrier above the IMU Nyquist frequency
        TrialSynthesisConfig(imu_rate_hz=500.0)
    with pytest.raises(ConfigError):
        TrialSynthesisConfig(noise_std=-1.0)


def test_synthesize_trial_channels(base_pile):
    cfg = TrialSynthesisConfig(seed=21)
    pop = sample_population(base_pile, 1000.0, seed=21)
    trial = synthesize_trial(pop, cfg, trial_id='s-1', operator='B', day=2)
    assert set(trial.channels) == set(CHANNEL_REGISTRY)
    assert trial.payload_mass_kg == pytest.approx(pop.total_mass_kg)
    assert trial.pile_label == 'base'
    assert trial.day == 2
    imu = trial.channel('bucket_acc_z')
    assert imu.rate_hz == 1000.0
    assert imu.end_s == pytest.approx(cfg.duration_s)
    assert np.mean(imu.samples[:1000]) == pytest.approx(9.81, abs=0.01)
    assert trial.channel('p_base').samples.max() <= 400.0
    assert trial.channel('d_bucket').samples.max() >= 420.0


def test_synthesis_is_deterministic(base_pile):
    pop = sample_population(base_pile, 800.0, seed=2)
    a = synthesize_trial(pop, TrialSynthesisConfig(seed=4))
    b = synthesize_trial(pop, TrialSynthesisConfig(seed=4))
    c = synthesize_trial(pop, TrialSynthesisConfig(seed=5))
    np.testing.assert_array_equal(a.channel('boom_acc_x').samples, b.channel('boom_acc_x').samples)
    assert not np.array_equal(a.channel('boom_acc_x').samples, c.channel('boom_acc_x').samples)


def test_simulated_window_starts_at_onset(base_pile):
    cfg = TrialSynthesisConfig()
    trial = simulate_pile(base_pile, 1, cfg, seed=8)[0].trial
    window = detect_window(trial, DetectorConfig.for_source('bucket_imu'))
    assert window.alpha1_s == pytest.approx(cfg.onset_s, abs=0.01)
    assert window.end_reason == 'bucket_extension'
    assert 6.5 < window.duration_s < cfg.dig_s
    boom = detect_window(trial, DetectorConfig.for_source('boom_imu'))
    assert boom.alpha1_s == pytest.approx(cfg.onset_s, abs=0.01)


def test_generate_campaign_truth(base_pile, tmp_path):
    piles = [base_pile, base_pile.scaled(2.0, label='double')]
    trials, truth = generate_campaign(piles, 3, TrialSynthesisConfig(), seed=1, target_mass_kg=400.0,
                                      operators=('A', 'B'))
    ids = [s.trial.trial_id for s in trials]
    assert ids == sorted(ids)
    assert len(ids) == 6
    assert set(truth['piles']) == {'base', 'double'}
    assert truth['piles']['double']['x_bar_mm'] == pytest.approx(2.0 * truth['piles']['base']['x_bar_mm'])
    assert [truth['trials'][i]['operator'] for i in ids if truth['trials'][i]['pile_label'] == 'base'] == ['A', 'B', 'A']
    assert all(truth['trials'][i]['M_kg'] >= 400.0 for i in ids)

    path = write_campaign(trials, truth, str(tmp_path))
    assert os.path.basename(path) == 'ground_truth.json'
    assert len(discover_manifests(str(tmp_path))) == 6


def test_campaign_needs_trials(base_pile):
    with pytest.raises(ConfigError):
        generate_campaign([base_pile], 0, TrialSynthesisConfig(), seed=1)


def test_impact_amplitude_follows_size_power():
    cfg = TrialSynthesisConfig()
    amplitudes = impact_amplitude([25.0, 50.0, 100.0], 80.0, cfg)
    np.testing.assert_allclose(amplitudes, [2.0, 4.0, 8.0])
    cubic = impact_amplitude([25.0, 50.0], 80.0, TrialSynthesisConfig(amplitude_exponent=3.0))
    assert cubic[1] / cubic[0] == pytest.approx(8.0)
    with pytest.raises(DomainError):
        impact_amplitude([0.0], 80.0, cfg)
