import logging
from typing import Dict, List, Optional

from .wavelet_interface import WaveletInterface
from .morse_wavelet import MorseWavelet
from .morlet_wavelet import MorletWavelet
from ..utils.errors import ConfigError

logger = logging.getLogger(__name__)


def create_wavelet(
    family: Optional[str] = None,
    symmetry: Optional[float] = None,
    time_bandwidth: Optional[float] = None,
    center_cycles: Optional[float] = None,
) -> WaveletInterface:
    """Create a mother wavelet by family name.

    Args:
        family: 'morse' or 'morlet'. If None, use 'morse'.
        symmetry: Morse gamma. If None, use the family default.
        time_bandwidth: Morse P^2. If None, use the family default.
        center_cycles: Morlet carrier cycles per unit scale. If None, use the family default.

    Returns:
        WaveletInterface instance.

    Raises:
        ConfigError: If the family is unknown or its parameters are invalid.
    """
    family = (family or 'morse').lower()
    defaults = get_default_parameters().get(family)
    if defaults is None:
        raise ConfigError(f"Unknown wavelet family: {family}")

    if family == 'morse':
        return MorseWavelet(
            symmetry=defaults['symmetry'] if symmetry is None else symmetry,
            time_bandwidth=defaults['time_bandwidth'] if time_bandwidth is None else time_bandwidth,
        )
    return MorletWavelet(
        center_cycles=defaults['center_cycles'] if center_cycles is None else center_cycles,
    )


def get_available_families() -> List[str]:
    """Get list of available wavelet families.

    Returns:
        List of family names.
    """
    return ['morse', 'morlet']


def get_default_parameters() -> Dict[str, Dict[str, float]]:
    """Get default shape parameters for each family.

    Returns:
        Dictionary mapping family names to parameter dictionaries.
    """
    return {
        'morse': {'symmetry': 3.0, 'time_bandwidth': 60.0},
        'morlet': {'center_cycles': 1.0},
    }
