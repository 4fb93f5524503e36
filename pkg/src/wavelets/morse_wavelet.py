import logging

import numpy as np

from .wavelet_interface import WaveletInterface
from ..utils.errors import ConfigError

logger = logging.getLogger(__name__)


class MorseWavelet(WaveletInterface):
    """Generalized analytic Morse wavelet, first order, L1-normalized."""

    def __init__(self, symmetry: float = 3.0, time_bandwidth: float = 60.0):
        """Initialize the MorseWavelet.

        Args:
            symmetry: Symmetry parameter gamma (3 gives the most symmetric envelope).
            time_bandwidth: Time-bandwidth product P^2 = beta * gamma.
        """
        if not symmetry > 0:
            raise ConfigError(f"Morse symmetry must be positive, got {symmetry}")
        if not time_bandwidth > symmetry:
            raise ConfigError(
                f"Morse time_bandwidth ({time_bandwidth}) must exceed symmetry ({symmetry})"
            )
        self.gamma = float(symmetry)
        self.time_bandwidth = float(time_bandwidth)
        self.beta = self.time_bandwidth / self.gamma
        self._wc = (self.beta / self.gamma) ** (1.0 / self.gamma)
        logger.debug(f"Morse wavelet gamma={self.gamma}, beta={self.beta:.4f}, wc={self._wc:.6f}")

    @property
    def peak_radian_frequency(self) -> float:
        return self._wc

    @property
    def family(self) -> str:
        return 'morse'

    @property
    def coi_factor(self) -> float:
        return np.sqrt(2.0) * np.sqrt(self.time_bandwidth) / self._wc

    def freq_response(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        response = np.zeros_like(omega)
        positive = omega > 0
        w = omega[positive]
        # log form keeps w**beta from overflowing at large scales
        log_psi = (self.beta * (np.log(w) - np.log(self._wc))
                   - w ** self.gamma + self._wc ** self.gamma)
        response[positive] = 2.0 * np.exp(log_psi)
        return response
