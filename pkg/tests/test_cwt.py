import numpy as np
import pandas as pd
import pytest
from PIL import Image

from src.processors.cwt import (
    MIN_WINDOW_SAMPLES,
    WaveletSpec,
    export_scalogram_csv,
    export_scalogram_png,
    frequency_to_scale,
    scale_grid,
    scale_to_frequency,
    transform,
)
from src.processors.telemetry import Channel
from src.utils.errors import ConfigError, DomainError
from src.wavelets import MorletWavelet, MorseWavelet, create_wavelet, get_available_families


def tone(freq_hz, rate_hz=1000.0, duration_s=2.0, amplitude=1.0):
    t = np.arange(int(duration_s * rate_hz)) / rate_hz
    return Channel('bucket_acc_z', rate_hz, amplitude * np.sin(2 * np.pi * freq_hz * t))


def test_scale_frequency_inverse():
    f_c = MorseWavelet().center_frequency_hz
    assert scale_to_frequency(frequency_to_scale(37.5, f_c), f_c) == pytest.approx(37.5)
    with pytest.raises(DomainError):
        scale_to_frequency(0.0, f_c)


def test_scale_grid_spans_nyquist_to_segment_length():
    f_c = MorseWavelet().center_frequency_hz
    scales = scale_grid(2000, 1000.0, f_c, 10)
    freqs = f_c / scales
    assert scales.size == 100
    assert freqs[0] == pytest.approx(500.0)
    assert freqs[-1] >= 1000.0 / 2000
    np.testing.assert_allclose(scales[1:] / scales[:-1], 2 ** 0.1)


@pytest.mark.parametrize('family', ['morse', 'morlet'])
def test_transform_peaks_at_tone_frequency(family):
    sc = transform(tone(50.0), (0.0, 1.999), WaveletSpec(family=family))
    inside = ~sc.coi_mask
    profile = np.array([row[mask].mean() if mask.any() else 0.0
                        for row, mask in zip(sc.coeffs_mag, inside)])
    peak = int(np.argmax(profile))
    assert sc.freqs_hz[peak] == pytest.approx(50.0, rel=0.04)
    assert profile[peak] == pytest.approx(1.0, rel=0.1)


@pytest.mark.parametrize('freq', [5.0, 25.0, 100.0])
def test_tone_localized_within_one_voice(freq):
    sc = transform(tone(freq, duration_s=6.0), (0.0, 5.999))
    middle = slice(sc.times_s.size // 3, 2 * sc.times_s.size // 3)
    profile = sc.coeffs_mag[:, middle].mean(axis=1)
    peak = sc.freqs_hz[int(np.argmax(profile))]
    voice = 2.0 ** (1.0 / WaveletSpec().voices_per_octave)
    assert freq / voice <= peak <= freq * voice


def test_transform_scales_linearly_with_amplitude():
    a = transform(tone(80.0, amplitude=1.0), (0.2, 1.8))
    b = transform(tone(80.0, amplitude=3.0), (0.2, 1.8))
    np.testing.assert_allclose(b.coeffs_mag, 3.0 * a.coeffs_mag, rtol=1e-9, atol=1e-12)


def test_transform_rows_descend_in_frequency():
    sc = transform(tone(20.0), (0.0, 1.0))
    assert np.all(np.diff(sc.freqs_hz) < 0)
    assert sc.coeffs_mag.shape == (sc.freqs_hz.size, sc.times_s.size)
    assert sc.coi_mask.shape == sc.coeffs_mag.shape


def test_transform_rejects_short_window():
    ch = tone(50.0)
    with pytest.raises(DomainError):
        transform(ch, (0.0, (MIN_WINDOW_SAMPLES - 2) / ch.rate_hz))


def test_wavelet_spec_validation():
    with pytest.raises(ConfigError):
        WaveletSpec(voices_per_octave=2)
    with pytest.raises(ConfigError):
        WaveletSpec(normalization='L2')
    with pytest.raises(ConfigError):
        WaveletSpec(family='haar')


def test_wavelet_factory():
    assert get_available_families() == ['morse', 'morlet']
    assert isinstance(create_wavelet(), MorseWavelet)
    morlet = create_wavelet('morlet', center_cycles=2.0)
    assert isinstance(morlet, MorletWavelet)
    assert morlet.center_frequency_hz == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        create_wavelet('morse', symmetry=3.0, time_bandwidth=2.0)


def test_morse_response_peaks_at_two():
    w = MorseWavelet()
    omega = np.linspace(0.01, 6.0, 20001)
    response = w.freq_response(omega)
    assert response.max() == pytest.approx(2.0, rel=1e-6)
    assert omega[np.argmax(response)] == pytest.approx(w.peak_radian_frequency, abs=1e-3)
    assert w.freq_response(np.array([-1.0, 0.0])).tolist() == [0.0, 0.0]


def test_export_scalogram(tmp_path):
    sc = transform(tone(50.0, duration_s=0.5), (0.0, 0.499))
    csv_path = export_scalogram_csv(sc, str(tmp_path / 'sc.csv'))
    png_path = export_scalogram_png(sc, str(tmp_path / 'sc.png'))
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ['freq_hz', 't_s', 'magnitude']
    assert len(frame) == sc.coeffs_mag.size
    with Image.open(png_path) as img:
        assert img.size == (sc.times_s.size, sc.freqs_hz.size)
