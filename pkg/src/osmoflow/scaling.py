"""Nondimensionalization of the physical problem.

Physical model (entropy z log z):

    u_t = kappa * Laplace u,     r' = -sigma (n-1)/r + beta u(r),     int u = theta.

With the length factor a = (sigma / (beta theta))^(1/(n-1)) and

    xi = a x,   rho = a r,   tau = a^2 sigma t,   w = u / (a^n theta),

the rescaled pair has unit mass, unit surface tension and unit osmotic
coefficient, and diffusion coefficient kappa / sigma.  States store the
quantiles of the normalized mass distribution, so only radii and quantiles
change under the map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import as_dimension
from .profile import QuantileProfile, RadialDensity
from .state import RadialState


@dataclass(frozen=True)
class PhysicalParams:
    kappa: float = 1.0
    sigma: float = 1.0
    beta: float = 1.0
    theta: float = 1.0
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "dim", as_dimension(self.dim).n)
        for name in ("kappa", "sigma", "beta", "theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite")

    @property
    def length_factor(self) -> float:
        return (self.sigma / (self.beta * self.theta)) ** (1.0 / (self.dim - 1))

    @property
    def time_factor(self) -> float:
        return self.length_factor ** 2 * self.sigma

    @property
    def density_factor(self) -> float:
        return 1.0 / (self.length_factor ** self.dim * self.theta)

    @property
    def scaled_kappa(self) -> float:
        return self.kappa / self.sigma


def to_scaled(p: PhysicalParams, state: RadialState, t: float) -> tuple[RadialState, float, float]:
    """Physical (state, time) to scaled (state, time, kappa)."""
    a = p.length_factor
    u = QuantileProfile(a * state.u.q, state.dim)
    return RadialState(a * state.r, u), p.time_factor * t, p.scaled_kappa


def from_scaled(p: PhysicalParams, state: RadialState, tau: float) -> tuple[RadialState, float]:
    a = p.length_factor
    u = QuantileProfile(state.u.q / a, state.dim)
    return RadialState(state.r / a, u), tau / p.time_factor


def density_to_scaled(p: PhysicalParams, u: RadialDensity) -> RadialDensity:
    return RadialDensity(p.length_factor * u.grid, p.density_factor * u.values, u.dim)


def density_from_scaled(p: PhysicalParams, w: RadialDensity) -> RadialDensity:
    return RadialDensity(w.grid / p.length_factor, w.values / p.density_factor, w.dim)
