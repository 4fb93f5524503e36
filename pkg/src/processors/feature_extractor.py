import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .cwt import Scalogram, transform
from .features import ExcavationWindow, WaveletFeature, beta, detect_window, sensor_epoch, zeta
from .telemetry import Channel, TrialRecord, highpass, lift_force
from ..utils.config import PipelineConfig, SOURCES
from ..utils.errors import ConfigError, Dig2SizeError

logger = logging.getLogger(__name__)


@dataclass
class ExtractionResult:
    """Features of a batch plus the trials that failed."""

    features: List[WaveletFeature] = field(default_factory=list)
    errors: List[Dict[str, str]] = field(default_factory=list)


class FeatureExtractor:
    """Turns trials into beta and zeta features for one or more sources."""

    def __init__(self, config: Optional[PipelineConfig] = None):
        """Initialize the FeatureExtractor.

        Args:
            config: Pipeline configuration; defaults to PipelineConfig.defaults().
        """
        self.config = config or PipelineConfig.defaults()

    def source_channel(self, trial: TrialRecord, source: str) -> Channel:
        """Raw signal a source's features are computed on."""
        if source == 'bucket':
            return trial.channel(self.config.detector_for('bucket').channel_name)
        if source == 'boom':
            return trial.channel(self.config.detector_for('boom').channel_name)
        if source == 'lift':
            return lift_force(trial.channel('p_base'), trial.channel('p_rod'))
        raise ConfigError(f"Unknown source '{source}'. Available: {', '.join(SOURCES)}")

    def scalogram(self, trial: TrialRecord, source: str) -> Tuple[Scalogram, ExcavationWindow]:
        """High-pass the source channel and transform it over the excavation window.

        Returns:
            (scalogram, window)
        """
        window = detect_window(trial, self.config.detector_for(source))
        filtered = highpass(self.source_channel(trial, source), self.config.cutoff_for(source))
        scalogram = transform(filtered, window.as_tuple(), self.config.wavelet)
        coi_share = float(scalogram.coi_mask.mean())
        if coi_share > 0.5:
            logger.warning(f"Trial {trial.trial_id} ({source}): {coi_share:.0%} of the scalogram lies in the cone of influence")
        return scalogram, window

    def extract_trial(self, trial: TrialRecord, source: str = 'bucket') -> List[WaveletFeature]:
        """Compute beta and zeta of one trial.

        Args:
            trial: Trial to process.
            source: 'bucket', 'boom' or 'lift'.

        Returns:
            [beta feature, zeta feature]
        """
        scalogram, window = self.scalogram(trial, source)
        mass = trial.payload_mass_kg if trial.payload_mass_kg is not None else 1.0
        source_id = f"{source}:{sensor_epoch(source, trial.day)}"
        f_min, f_max = self.config.f_band_for(source)
        band = (f_min, f_max if f_max is not None else scalogram.top_frequency_hz)

        z = zeta(scalogram, window, mass, f_band=band, cutoff_hz=self.config.cutoff_for(source), source=source_id)
        b = beta(scalogram, window, mass, f_band=z.f_band, source=source_id)
        meta = {'trial_id': trial.trial_id, 'pile_label': trial.pile_label, 'operator': trial.operator}
        logger.debug(f"Trial {trial.trial_id} ({source_id}): beta={b.value:.6g}, zeta={z.value:.6g}")
        return [replace(b, **meta), replace(z, **meta)]

    def _extract_task(self, trial: TrialRecord, sources: Sequence[str]) -> List[WaveletFeature]:
        features = []
        for source in sources:
            features.extend(self.extract_trial(trial, source))
        return features

    def extract_all(self, trials: Sequence[TrialRecord], sources: Sequence[str] = ('bucket',),
                    threads: int = 1) -> ExtractionResult:
        """Extract features of many trials, skipping the ones that fail.

        Args:
            trials: Trials to process.
            sources: Feature sources per trial.
            threads: Number of threads to use (1 for sequential processing).

        Returns:
            ExtractionResult with features sorted by trial id and source.
        """
        result = ExtractionResult()

        if threads <= 1:
            logger.info("Extracting features sequentially...")
            for trial in trials:
                try:
                    result.features.extend(self._extract_task(trial, sources))
                except Dig2SizeError as e:
                    logger.error(f"Error extracting features of trial {trial.trial_id}: {str(e)}")
                    result.errors.append({'trial_id': trial.trial_id, 'error': str(e)})
        else:
            logger.info(f"Extracting features concurrently using {threads} threads...")
            with ThreadPoolExecutor(max_workers=threads) as executor:
                future_to_trial = {
                    executor.submit(self._extract_task, trial, sources): trial
                    for trial in trials
                }
                for future in as_completed(future_to_trial):
                    trial = future_to_trial[future]
                    try:
                        result.features.extend(future.result())
                    except Dig2SizeError as e:
                        logger.error(f"Error extracting features of trial {trial.trial_id}: {str(e)}")
                        result.errors.append({'trial_id': trial.trial_id, 'error': str(e)})

        result.features.sort(key=lambda f: (f.trial_id, f.source, f.kind))
        result.errors.sort(key=lambda e: e['trial_id'])
        logger.info(f"Extracted {len(result.features)} features from {len(trials) - len(result.errors)} trials")
        return result
