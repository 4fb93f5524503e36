"""
Pipeline configuration: built-in defaults, TOML file and command-line overrides.
"""

import os
import sys
import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..processors.cwt import WaveletSpec
from ..processors.features import DetectorConfig
from ..processors.simulate import TrialSynthesisConfig
from .errors import ConfigError, Dig2SizeError

logger = logging.getLogger(__name__)

CONFIG_ENV = 'DIG2SIZE_CONFIG'
THREADS_ENV = 'DIG2SIZE_THREADS'
DEFAULT_THREADS = 6

SOURCES = ('bucket', 'boom', 'lift')

# Feature source -> detector that provides its window
SOURCE_DETECTOR = {
    'bucket': 'bucket',
    'boom': 'boom',
    'lift': 'bucket',
}


@dataclass(frozen=True)
class ReferenceScope:
    """Which pile, source and (optionally) operator calibrate the ratios."""

    pile: str = '0/90'
    source: str = 'bucket'
    operator: Optional[str] = None


@dataclass(frozen=True)
class CampaignSettings:
    """Shape of a simulated campaign."""

    preset: str = 'five-piles'
    trials_per_pile: int = 20
    target_mass_kg: float = 2000.0
    seed: int = 7
    operators: Tuple[str, ...] = ('A', 'B')
    days: Tuple[int, ...] = (1,)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline."""

    detectors: Dict[str, DetectorConfig] = field(default_factory=lambda: {
        'bucket': DetectorConfig.for_source('bucket_imu'),
        'boom': DetectorConfig.for_source('boom_imu'),
    })
    cutoffs: Dict[str, float] = field(default_factory=lambda: {'bucket': 4.0, 'boom': 2.0, 'lift': 2.0})
    wavelet: WaveletSpec = field(default_factory=WaveletSpec)
    f_min_hz: Optional[float] = None
    f_max_hz: Optional[float] = None
    reference: ReferenceScope = field(default_factory=ReferenceScope)
    synthesis: TrialSynthesisConfig = field(default_factory=TrialSynthesisConfig)
    campaign: CampaignSettings = field(default_factory=CampaignSettings)
    output_dir: str = 'output'
    threads: int = DEFAULT_THREADS

    @classmethod
    def defaults(cls) -> 'PipelineConfig':
        return cls()

    def detector_for(self, source: str) -> DetectorConfig:
        if source not in SOURCE_DETECTOR:
            raise ConfigError(f"Unknown source '{source}'. Available: {', '.join(SOURCES)}")
        return self.detectors[SOURCE_DETECTOR[source]]

    def cutoff_for(self, source: str) -> float:
        if source not in self.cutoffs:
            raise ConfigError(f"Unknown source '{source}'. Available: {', '.join(SOURCES)}")
        return self.cutoffs[source]

    def f_band_for(self, source: str) -> Tuple[Optional[float], Optional[float]]:
        """Configured band; None entries fall back to the cutoff and the top grid frequency."""
        return (self.f_min_hz if self.f_min_hz is not None else self.cutoff_for(source), self.f_max_hz)

    def to_dict(self) -> dict:
        """Nested plain dictionary mirroring the TOML layout."""
        def detector(cfg: DetectorConfig) -> dict:
            return {
                'jerk_threshold': cfg.jerk_threshold,
                'axis': cfg.axis or cfg.channel_name[-1],
                'end_extension_mm': cfg.end_extension_mm,
                'time_cap_s': cfg.time_cap_s,
            }

        campaign = asdict(self.campaign)
        campaign['operators'] = list(self.campaign.operators)
        campaign['days'] = list(self.campaign.days)
        return {
            'detector': {name: detector(cfg) for name, cfg in sorted(self.detectors.items())},
            'cutoffs': dict(sorted(self.cutoffs.items())),
            'wavelet': asdict(self.wavelet),
            'band': {'f_min_hz': self.f_min_hz, 'f_max_hz': self.f_max_hz},
            'reference': asdict(self.reference),
            'simulate': self.synthesis.to_dict(),
            'campaign': campaign,
            'output': {'dir': self.output_dir},
            'threads': self.threads,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PipelineConfig':
        """Build a config from a (partial) nested dictionary over the defaults.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        merged = _merge(cls.defaults().to_dict(), data, '')
        try:
            detectors = {}
            for name, source in (('bucket', 'bucket_imu'), ('boom', 'boom_imu')):
                params = dict(merged['detector'][name])
                detectors[name] = DetectorConfig(source=source, **params)
            campaign = dict(merged['campaign'])
            campaign['operators'] = tuple(str(op) for op in campaign['operators'])
            campaign['days'] = tuple(int(d) for d in campaign['days'])
            config = cls(
                detectors=detectors,
                cutoffs={k: float(v) for k, v in merged['cutoffs'].items()},
                wavelet=WaveletSpec(**merged['wavelet']),
                f_min_hz=merged['band']['f_min_hz'],
                f_max_hz=merged['band']['f_max_hz'],
                reference=ReferenceScope(**merged['reference']),
                synthesis=TrialSynthesisConfig(**merged['simulate']),
                campaign=CampaignSettings(**campaign),
                output_dir=str(merged['output']['dir']),
                threads=int(merged['threads']),
            )
        except ConfigError:
            raise
        except (Dig2SizeError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}")
        config.validate()
        return config

    def validate(self):
        for source, cutoff in self.cutoffs.items():
            if source not in SOURCES:
                raise ConfigError(f"Unknown cutoff source '{source}'")
            if not cutoff > 0:
                raise ConfigError(f"cutoffs.{source} must be positive")
        if self.f_min_hz is not None and self.f_max_hz is not None and not self.f_max_hz > self.f_min_hz:
            raise ConfigError("band.f_max_hz must exceed band.f_min_hz")
        if self.reference.source not in SOURCES:
            raise ConfigError(f"reference.source must be one of {', '.join(SOURCES)}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.campaign.trials_per_pile < 1 or not self.campaign.target_mass_kg > 0:
            raise ConfigError("campaign.trials_per_pile and campaign.target_mass_kg must be positive")

    def overrides(self) -> Dict[str, Any]:
        """Dotted keys whose values differ from the built-in defaults."""
        defaults = _flatten(self.defaults().to_dict())
        current = _flatten(self.to_dict())
        return {key: value for key, value in sorted(current.items()) if defaults.get(key) != value}

    def with_overrides(self, overrides: Dict[str, Any]) -> 'PipelineConfig':
        """Apply dotted-key overrides such as ``{'campaign.seed': 3}``."""
        if not overrides:
            return self
        data = self.to_dict()
        for dotted, value in overrides.items():
            node = data
            parts = dotted.split('.')
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(f"Unknown configuration key '{dotted}'")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"Unknown configuration key '{dotted}'")
            node[parts[-1]] = value
        return PipelineConfig.from_dict(data)


def _merge(base: dict, update: dict, prefix: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in out:
            raise ConfigError(f"Unknown configuration key '{dotted}'")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Configuration key '{dotted}' must be a table")
            out[key] = _merge(out[key], value, f"{dotted}.")
        else:
            if isinstance(value, dict):
                raise ConfigError(f"Configuration key '{dotted}' must be a value, not a table")
            out[key] = value
    return out


def _flatten(data: dict, prefix: str = '') -> Dict[str, Any]:
    flat = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def default_threads() -> int:
    value = os.getenv(THREADS_ENV)
    if not value:
        return DEFAULT_THREADS
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}")
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1")
    return threads


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Load the pipeline configuration.

    Args:
        path: TOML file. If None, use the DIG2SIZE_CONFIG environment variable,
            and the built-in defaults when that is unset too.

    Returns:
        PipelineConfig
    """
    path = path or os.getenv(CONFIG_ENV)
    data: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        with open(path, 'rb') as f:
            try:
                data = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"{path}: invalid TOML ({e})")
        logger.info(f"Loaded configuration from {path}")
    if 'threads' not in data and os.getenv(THREADS_ENV):
        data['threads'] = default_threads()
    return PipelineConfig.from_dict(data)
