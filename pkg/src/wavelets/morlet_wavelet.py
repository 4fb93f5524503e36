import numpy as np

from .wavelet_interface import WaveletInterface
from ..utils.errors import ConfigError


class MorletWavelet(WaveletInterface):
    """Analytic Morlet wavelet: a Gaussian bump on positive frequencies only."""

    def __init__(self, center_cycles: float = 1.0):
        """Initialize the MorletWavelet.

        Args:
            center_cycles: Carrier cycles per unit scale; omega0 = 2*pi*center_cycles.
        """
        if not center_cycles > 0:
            raise ConfigError(f"Morlet center_cycles must be positive, got {center_cycles}")
        self.center_cycles = float(center_cycles)
        self.omega0 = 2.0 * np.pi * self.center_cycles

    @property
    def peak_radian_frequency(self) -> float:
        return self.omega0

    @property
    def family(self) -> str:
        return 'morlet'

    @property
    def coi_factor(self) -> float:
        return np.sqrt(2.0)

    def freq_response(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        return np.where(omega > 0, 2.0 * np.exp(-0.5 * (omega - self.omega0) ** 2), 0.0)
