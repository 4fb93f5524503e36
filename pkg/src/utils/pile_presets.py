"""
Pile presets for simulation campaigns.
Rosin-Rammler parameters of the crushed piles come from their sieve fits;
0/1500 is a synthetic blasted pile about four times coarser than 0/150.
"""

from typing import List

from ..processors.granulometry import RosinRammlerModel
from ..processors.simulate import RockPileSpec
from .errors import ConfigError

AVAILABLE_PILES = {
    '0/32': {
        'n': 0.8322,
        'x_c_mm': 12.0,
        'd_max_mm': 45.0,
        'sieve_file': '0_32.csv',
        'sample_mass_kg': 25.0,
    },
    '0/63': {
        'n': 0.7506,
        'x_c_mm': 16.0,
        'd_max_mm': 63.0,
        'sieve_file': '0_63.csv',
        'sample_mass_kg': 70.0,
    },
    '0/90': {
        'n': 0.5664,
        'x_c_mm': 20.0,
        'd_max_mm': 90.0,
        'sieve_file': '0_90.csv',
        'sample_mass_kg': 90.0,
    },
    '0/150': {
        'n': 0.8519,
        'x_c_mm': 78.0,
        'd_max_mm': 250.0,
        'sieve_file': '0_150.csv',
        'sample_mass_kg': 225.0,
    },
    '0/1500': {
        'n': 0.85,
        'x_c_mm': 310.0,
        'd_max_mm': 1500.0,
        'sieve_file': None,
        'sample_mass_kg': None,
    },
}

# Campaign name -> pile labels, finest first
CAMPAIGNS = {
    'five-piles': ['0/32', '0/63', '0/90', '0/150', '0/1500'],
    'crushed': ['0/32', '0/63', '0/90', '0/150'],
}


class PilePresets:
    """Lookup of bundled pile definitions."""

    @staticmethod
    def get_pile_config(label: str) -> dict:
        """Get the raw parameters of a pile.

        Args:
            label: Pile label such as '0/32'

        Returns:
            Dictionary of pile parameters
        """
        if label not in AVAILABLE_PILES:
            raise ConfigError(f"Unknown pile preset '{label}'. Available: {', '.join(AVAILABLE_PILES)}")
        return dict(AVAILABLE_PILES[label])

    @staticmethod
    def get_pile(label: str) -> RockPileSpec:
        """Build the RockPileSpec of a preset."""
        config = PilePresets.get_pile_config(label)
        return RockPileSpec(
            model=RosinRammlerModel(n=config['n'], x_c_mm=config['x_c_mm']),
            d_max_mm=config['d_max_mm'],
            label=label,
        )

    @staticmethod
    def get_campaign(name: str) -> List[RockPileSpec]:
        """Pile specs of a named campaign, or of a single pile label."""
        if name in CAMPAIGNS:
            return [PilePresets.get_pile(label) for label in CAMPAIGNS[name]]
        if name in AVAILABLE_PILES:
            return [PilePresets.get_pile(name)]
        raise ConfigError(f"Unknown campaign '{name}'. Available: {', '.join(list(CAMPAIGNS) + list(AVAILABLE_PILES))}")

    @staticmethod
    def list_piles() -> list:
        return list(AVAILABLE_PILES.keys())

    @staticmethod
    def list_campaigns() -> list:
        return list(CAMPAIGNS.keys())

    @staticmethod
    def is_valid_pile(label: str) -> bool:
        return label in AVAILABLE_PILES
