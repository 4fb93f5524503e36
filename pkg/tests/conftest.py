import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.processors.feature_extractor import FeatureExtractor  # noqa: E402
from src.processors.granulometry import RosinRammlerModel  # noqa: E402
from src.processors.simulate import RockPileSpec, TrialSynthesisConfig, generate_campaign  # noqa: E402
from src.processors.telemetry import CHANNEL_REGISTRY, Channel, TrialRecord  # noqa: E402
from src.utils.config import PipelineConfig  # noqa: E402

SIEVE_DIR = os.path.join(ROOT, 'data', 'sieve')


def make_trial(trial_id='t-0001', pile_label='0/90', operator='A', day=1, rate_hz=1000.0,
               duration_s=6.0, onset_s=1.0, extension_end_s=4.0, bucket_z=None, payload_mass_kg=None):
    """Hand-built trial: a sharp step on bucket_acc_z at onset, extension ramping to 440 mm."""
    t = np.arange(int(duration_s * rate_hz) + 1) / rate_hz
    if bucket_z is None:
        bucket_z = 9.81 + 5.0 * (t >= onset_s)
    channels = {}
    for name in CHANNEL_REGISTRY:
        if name.endswith(('_acc_x', '_acc_y', '_acc_z')):
            samples = bucket_z if name == 'bucket_acc_z' else np.zeros_like(t)
            channels[name] = Channel(name, rate_hz, samples, units='m/s^2')
    t_slow = np.arange(int(duration_s * 250) + 1) / 250.0
    ramp = np.clip((t_slow - onset_s) / (extension_end_s - onset_s), 0.0, 1.0)
    channels['d_bucket'] = Channel('d_bucket', 250.0, 440.0 * ramp, units='mm')
    channels['d_lift'] = Channel('d_lift', 250.0, 300.0 * ramp, units='mm')
    channels['p_base'] = Channel('p_base', 250.0, 30.0 + 150.0 * ramp, units='bar')
    channels['p_rod'] = Channel('p_rod', 250.0, 20.0 + 10.0 * ramp, units='bar')
    t_speed = np.arange(int(duration_s * 20) + 1) / 20.0
    channels['speed'] = Channel('speed', 20.0, np.full(t_speed.size, 0.5), units='m/s')
    return TrialRecord(trial_id=trial_id, pile_label=pile_label, operator=operator, day=day,
                       channels=channels, payload_mass_kg=payload_mass_kg)


@pytest.fixture
def trial():
    return make_trial()


@pytest.fixture(scope='session')
def base_pile():
    return RockPileSpec(model=RosinRammlerModel(n=0.85, x_c_mm=20.0), d_max_mm=120.0, label='base')


@pytest.fixture(scope='session')
def scaled_campaign(base_pile):
    """Base pile plus its x0.5, x2 and x4 copies, 20 trials each."""
    piles = [
        base_pile,
        base_pile.scaled(0.5, label='half'),
        base_pile.scaled(2.0, label='double'),
        base_pile.scaled(4.0, label='quadruple'),
    ]
    trials, truth = generate_campaign(piles, 20, TrialSynthesisConfig(), seed=11, operators=('A', 'B'))
    return trials, truth


@pytest.fixture(scope='session')
def scaled_features(scaled_campaign):
    trials, _ = scaled_campaign
    extractor = FeatureExtractor(PipelineConfig.defaults())
    result = extractor.extract_all([s.trial for s in trials], sources=('bucket', 'boom', 'lift'), threads=4)
    assert not result.errors
    return result.features
