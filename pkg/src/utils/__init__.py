"""Utility modules for Dig2Size."""

from .errors import Dig2SizeError, ConfigError, DataError

__all__ = [
    'Dig2SizeError',
    'ConfigError',
    'DataError',
]
