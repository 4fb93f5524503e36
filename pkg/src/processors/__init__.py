"""Processing modules for the Dig2Size estimation pipeline."""

from .telemetry import Channel, TrialRecord, CylinderGeometry
from .cwt import WaveletSpec, Scalogram
from .features import DetectorConfig, ExcavationWindow, WaveletFeature
from .granulometry import SieveTable, RosinRammlerModel
from .relative import ReferenceCalibration, RelativeEstimate
from .simulate import RockPileSpec, ParticlePopulation, TrialSynthesisConfig
from .feature_extractor import FeatureExtractor
from .dig_stats import DigStatistics

__all__ = [
    'Channel',
    'TrialRecord',
    'CylinderGeometry',
    'WaveletSpec',
    'Scalogram',
    'DetectorConfig',
    'ExcavationWindow',
    'WaveletFeature',
    'SieveTable',
    'RosinRammlerModel',
    'ReferenceCalibration',
    'RelativeEstimate',
    'RockPileSpec',
    'ParticlePopulation',
    'TrialSynthesisConfig',
    'FeatureExtractor',
    'DigStatistics',
]
