import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from scipy import fft

from .telemetry import Channel, segment
from ..wavelets import WaveletInterface, create_wavelet
from ..utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

MIN_WINDOW_SAMPLES = 32


@dataclass(frozen=True)
class WaveletSpec:
    """Mother wavelet family, its shape and the scale-grid density."""

    family: str = 'morse'
    symmetry: float = 3.0
    time_bandwidth: float = 60.0
    center_cycles: float = 1.0
    voices_per_octave: int = 10
    normalization: str = 'L1'

    def __post_init__(self):
        if not 4 <= int(self.voices_per_octave) <= 48:
            raise ConfigError(f"voices_per_octave must lie in [4, 48], got {self.voices_per_octave}")
        if self.normalization != 'L1':
            raise ConfigError(f"Only L1 normalization is supported, got {self.normalization}")
        # validates the family parameters early
        self.make_wavelet()

    def make_wavelet(self) -> WaveletInterface:
        return create_wavelet(
            family=self.family,
            symmetry=self.symmetry,
            time_bandwidth=self.time_bandwidth,
            center_cycles=self.center_cycles,
        )


@dataclass(frozen=True, eq=False)
class Scalogram:
    """CWT modulus of one channel segment; row i corresponds to freqs_hz[i]."""

    freqs_hz: np.ndarray
    times_s: np.ndarray
    coeffs_mag: np.ndarray
    center_freq_hz: float
    scales: np.ndarray
    coi_mask: np.ndarray
    channel: str = ''

    @property
    def top_frequency_hz(self) -> float:
        return float(np.max(self.freqs_hz))

    @property
    def bottom_frequency_hz(self) -> float:
        return float(np.min(self.freqs_hz))

    def time_averaged(self) -> np.ndarray:
        """Mean magnitude of each row over the segment."""
        return self.coeffs_mag.mean(axis=1)


def scale_to_frequency(s: float, f_c: float) -> float:
    """Map a wavelet scale (seconds) to cyclic frequency: f = f_c / s."""
    if not s > 0 or not f_c > 0:
        raise DomainError(f"Scale and center frequency must be positive, got s={s}, f_c={f_c}")
    return f_c / s


def frequency_to_scale(f: float, f_c: float) -> float:
    """Inverse of scale_to_frequency."""
    if not f > 0 or not f_c > 0:
        raise DomainError(f"Frequency and center frequency must be positive, got f={f}, f_c={f_c}")
    return f_c / f


def scale_grid(n_samples: int, rate_hz: float, f_c: float, voices_per_octave: int) -> np.ndarray:
    """Log-spaced scales from a 2-sample period up to the segment length.

    Args:
        n_samples: Segment length in samples.
        rate_hz: Sample rate.
        f_c: Center frequency of the mother wavelet (Hz at unit scale).
        voices_per_octave: Scales per doubling.

    Returns:
        Ascending scales in seconds.
    """
    s_min = frequency_to_scale(rate_hz / 2.0, f_c)
    octaves = np.log2(n_samples / 2.0)
    n_steps = int(np.floor(voices_per_octave * octaves + 1e-9))
    return s_min * 2.0 ** (np.arange(n_steps + 1) / voices_per_octave)


def transform(ch: Channel, window: Tuple[float, float], spec: Optional[WaveletSpec] = None) -> Scalogram:
    """Continuous wavelet transform of a channel segment.

    The segment is reflected on both sides before the FFT convolution; the
    reflected part is discarded afterwards. Coefficients near the segment
    edges are flagged in ``coi_mask`` but kept.

    Args:
        ch: Input channel.
        window: (t_start_s, t_end_s) of the segment to transform.
        spec: Wavelet settings; defaults to WaveletSpec().

    Returns:
        Scalogram with rows ordered by descending frequency.
    """
    spec = spec or WaveletSpec()
    seg = segment(ch, window[0], window[1])
    n = len(seg)
    if n < MIN_WINDOW_SAMPLES:
        raise DomainError(f"Window holds {n} samples of {ch.name}; at least {MIN_WINDOW_SAMPLES} are needed")

    wavelet = spec.make_wavelet()
    f_c = wavelet.center_frequency_hz
    scales = scale_grid(n, seg.rate_hz, f_c, int(spec.voices_per_octave))

    pad = n - 1
    padded = np.pad(seg.samples, pad, mode='reflect')
    n_fft = fft.next_fast_len(padded.size)
    spectrum = fft.fft(padded, n_fft)
    omega = 2.0 * np.pi * fft.fftfreq(n_fft, d=1.0 / seg.rate_hz)

    coeffs = np.empty((scales.size, n), dtype=float)
    for i, s in enumerate(scales):
        row = fft.ifft(spectrum * wavelet.freq_response(s * omega))
        coeffs[i] = np.abs(row[pad:pad + n])

    times = seg.times
    half_width = wavelet.coi_factor * scales
    from_start = times - times[0]
    to_end = times[-1] - times
    coi_mask = (from_start[None, :] < half_width[:, None]) | (to_end[None, :] < half_width[:, None])

    logger.debug(
        f"CWT of {ch.name}: {n} samples, {scales.size} scales, "
        f"{f_c / scales[-1]:.3f}-{f_c / scales[0]:.1f} Hz"
    )
    return Scalogram(
        freqs_hz=f_c / scales,
        times_s=times,
        coeffs_mag=coeffs,
        center_freq_hz=f_c,
        scales=scales,
        coi_mask=coi_mask,
        channel=ch.name,
    )


def export_scalogram_csv(scalogram: Scalogram, path: str) -> str:
    """Write a scalogram as long-format CSV (freq_hz, t_s, magnitude)."""
    n_freqs, n_times = scalogram.coeffs_mag.shape
    frame = pd.DataFrame({
        'freq_hz': np.repeat(scalogram.freqs_hz, n_times),
        't_s': np.tile(scalogram.times_s, n_freqs),
        'magnitude': scalogram.coeffs_mag.ravel(),
    })
    frame.to_csv(path, index=False, float_format='%.10g')
    logger.info(f"Wrote scalogram CSV: {path}")
    return path


def export_scalogram_png(scalogram: Scalogram, path: str) -> str:
    """Write a grayscale heatmap, highest frequency on the top row."""
    mag = scalogram.coeffs_mag
    peak = float(mag.max()) if mag.size else 0.0
    scaled = mag / peak if peak > 0 else np.zeros_like(mag)
    order = np.argsort(scalogram.freqs_hz)[::-1]
    pixels = np.round(255.0 * scaled[order]).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    logger.info(f"Wrote scalogram image: {path}")
    return path
