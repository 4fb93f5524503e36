# Dig2Size - relative rock-pile mean size from excavation telemetry

from .wavelets.wavelet_interface import WaveletInterface
from .wavelets.morse_wavelet import MorseWavelet
from .wavelets.morlet_wavelet import MorletWavelet
from .wavelets.wavelet_factory import create_wavelet, get_available_families, get_default_parameters

from .processors.telemetry import Channel, TrialRecord, load_trial, load_trial_from_manifest, write_trial
from .processors.cwt import WaveletSpec, Scalogram, transform
from .processors.features import DetectorConfig, ExcavationWindow, WaveletFeature, detect_window, beta, zeta
from .processors.granulometry import SieveTable, RosinRammlerModel, fit_rr, rr_cdf, rr_mean
from .processors.relative import ReferenceCalibration, RelativeEstimate, calibrate, relative_size, classify, summarize
from .processors.simulate import (
    RockPileSpec,
    ParticlePopulation,
    TrialSynthesisConfig,
    sample_population,
    population_stats,
    synthesize_trial,
)
from .processors.feature_extractor import FeatureExtractor

from .utils.config import PipelineConfig, load_config
from .utils.pile_presets import PilePresets

__version__ = "1.0.0"

__all__ = [
    # Wavelets
    'WaveletInterface',
    'MorseWavelet',
    'MorletWavelet',
    'create_wavelet',
    'get_available_families',
    'get_default_parameters',

    # Processing
    'Channel',
    'TrialRecord',
    'load_trial',
    'load_trial_from_manifest',
    'write_trial',
    'WaveletSpec',
    'Scalogram',
    'transform',
    'DetectorConfig',
    'ExcavationWindow',
    'WaveletFeature',
    'detect_window',
    'beta',
    'zeta',
    'SieveTable',
    'RosinRammlerModel',
    'fit_rr',
    'rr_cdf',
    'rr_mean',
    'ReferenceCalibration',
    'RelativeEstimate',
    'calibrate',
    'relative_size',
    'classify',
    'summarize',
    'RockPileSpec',
    'ParticlePopulation',
    'TrialSynthesisConfig',
    'sample_population',
    'population_stats',
    'synthesize_trial',
    'FeatureExtractor',

    # Utilities
    'PipelineConfig',
    'load_config',
    'PilePresets',
]
