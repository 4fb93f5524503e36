# Dig2Size - relative rock-pile mean size from excavation telemetry
# Re-exports the public API from the src package

from src.processors.telemetry import Channel, TrialRecord, load_trial_from_manifest, write_trial
from src.processors.cwt import WaveletSpec, transform
from src.processors.features import DetectorConfig, detect_window, beta, zeta
from src.processors.granulometry import RosinRammlerModel, SieveTable, fit_rr, rr_mean
from src.processors.relative import calibrate, relative_size, classify, summarize
from src.processors.simulate import RockPileSpec, TrialSynthesisConfig, sample_population, synthesize_trial
from src.processors.feature_extractor import FeatureExtractor
from src.utils.config import PipelineConfig, load_config
from src.utils.pile_presets import PilePresets

__all__ = [
    'Channel',
    'TrialRecord',
    'load_trial_from_manifest',
    'write_trial',
    'WaveletSpec',
    'transform',
    'DetectorConfig',
    'detect_window',
    'beta',
    'zeta',
    'RosinRammlerModel',
    'SieveTable',
    'fit_rr',
    'rr_mean',
    'calibrate',
    'relative_size',
    'classify',
    'summarize',
    'RockPileSpec',
    'TrialSynthesisConfig',
    'sample_population',
    'synthesize_trial',
    'FeatureExtractor',
    'PipelineConfig',
    'load_config',
    'PilePresets',
]
