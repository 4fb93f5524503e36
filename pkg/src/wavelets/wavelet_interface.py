from abc import ABC, abstractmethod

import numpy as np


class WaveletInterface(ABC):
    """Abstract base class for analytic mother wavelets defined in the frequency domain.

    Implementations use the L1 (bandpass) normalization: the Fourier
    transform peaks at 2 at ``peak_radian_frequency`` and is zero for
    non-positive frequencies, so a unit sinusoid at the matched scale yields
    a coefficient of modulus 1.
    """

    @abstractmethod
    def freq_response(self, omega: np.ndarray) -> np.ndarray:
        """Evaluate the mother wavelet's Fourier transform.

        Args:
            omega: Radian frequencies (dimensionless, per unit scale).

        Returns:
            Real, non-negative response with the same shape as ``omega``.
        """
        pass

    @property
    @abstractmethod
    def peak_radian_frequency(self) -> float:
        """Return the radian frequency maximizing the Fourier transform's modulus."""
        pass

    @property
    @abstractmethod
    def family(self) -> str:
        """Return the family name (e.g., 'morse', 'morlet')."""
        pass

    @property
    @abstractmethod
    def coi_factor(self) -> float:
        """Return the e-folding time of the wavelet envelope per unit scale."""
        pass

    @property
    def center_frequency_hz(self) -> float:
        """Cyclic peak frequency of the mother wavelet at unit scale (1 s)."""
        return self.peak_radian_frequency / (2.0 * np.pi)
