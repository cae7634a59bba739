"""Gradient-flow model of a cell whose membrane radius and solute density evolve together."""

from .geometry import Dimension, Variant
from .profile import QuantileProfile, RadialDensity, uniform_profile, uniform_density
from .state import MetricConfig, RadialState, rho_dist
from .energy import ZLOGZ, SQUARE, get_integrand, total_energy, equilibrium_radius

__all__ = [
    "Dimension",
    "Variant",
    "QuantileProfile",
    "RadialDensity",
    "uniform_profile",
    "uniform_density",
    "MetricConfig",
    "RadialState",
    "rho_dist",
    "ZLOGZ",
    "SQUARE",
    "get_integrand",
    "total_energy",
    "equilibrium_radius",
]
