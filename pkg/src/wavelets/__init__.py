"""Mother wavelets and their factory for Dig2Size."""

from .wavelet_interface import WaveletInterface
from .morse_wavelet import MorseWavelet
from .morlet_wavelet import MorletWavelet
from .wavelet_factory import create_wavelet, get_available_families, get_default_parameters

__all__ = [
    'WaveletInterface',
    'MorseWavelet',
    'MorletWavelet',
    'create_wavelet',
    'get_available_families',
    'get_default_parameters',
]
