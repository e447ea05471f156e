"""Dislocation-wall pile-ups: discrete energies, minimizers and continuum limits."""
from .discrete import Regime, RegimeTag, energy, gradient
from .potential import v, v_eff

__all__ = ["Regime", "RegimeTag", "energy", "gradient", "v", "v_eff"]
__version__ = "0.1.0"
