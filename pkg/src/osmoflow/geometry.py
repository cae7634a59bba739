"""Radially symmetric ball geometry.

A cell is modeled as a ball B_r in R^n.  Radii carry one of two metrics:

* surface tension: d(r0, r1) = int_{r0}^{r1} sqrt(P(rho)) d rho
* permeability:    d(r0, r1) = |vol(B_r1) - vol(B_r0)|

Both are flat after the change of variables ``iota`` so distances and
geodesics are computed in that coordinate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Variant(enum.Enum):
    SURFACE_TENSION = "surface_tension"
    PERMEABILITY = "permeability"

    @classmethod
    def parse(cls, value: "Variant | str") -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for v in cls:
            if v.value == key or v.name.lower() == key:
                return v
        raise ValueError(f"unknown metric variant {value!r}")


@dataclass(frozen=True)
class Dimension:
    """Ambient dimension n >= 2 together with the unit-ball volume."""

    n: int
    omega: float = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        log_omega = 0.5 * self.n * math.log(math.pi) - math.lgamma(0.5 * self.n + 1.0)
        object.__setattr__(self, "omega", math.exp(log_omega))


def as_dimension(dim: "Dimension | int") -> Dimension:
    return dim if isinstance(dim, Dimension) else Dimension(dim)


def unit_ball_volume(n: int) -> float:
    return Dimension(n).omega


def volume(r, dim):
    dim = as_dimension(dim)
    return dim.omega * np.power(r, dim.n)


def perimeter(r, dim):
    """Surface area n*omega*r^(n-1) of the sphere of radius r."""
    dim = as_dimension(dim)
    return dim.n * dim.omega * np.power(r, dim.n - 1)


def perimeter_derivative(r, dim):
    dim = as_dimension(dim)
    n = dim.n
    return n * (n - 1) * dim.omega * np.power(r, n - 2)


def perimeter_second_derivative(r, dim):
    dim = as_dimension(dim)
    n = dim.n
    if n == 2:
        return np.zeros_like(np.asarray(r, dtype=float))
    return n * (n - 1) * (n - 2) * dim.omega * np.power(r, n - 3)


def _iota_coeff(dim: Dimension) -> float:
    return 2.0 * math.sqrt(dim.n * dim.omega) / (dim.n + 1)


def iota(r, dim, variant=Variant.SURFACE_TENSION):
    """Isometry of the radius metric onto an interval of the real line."""
    dim = as_dimension(dim)
    if Variant.parse(variant) is Variant.PERMEABILITY:
        return dim.omega * np.power(r, dim.n)
    return _iota_coeff(dim) * np.power(r, 0.5 * (dim.n + 1))


def iota_inverse(s, dim, variant=Variant.SURFACE_TENSION):
    dim = as_dimension(dim)
    s = np.maximum(s, 0.0)
    if Variant.parse(variant) is Variant.PERMEABILITY:
        return np.power(s / dim.omega, 1.0 / dim.n)
    return np.power(s / _iota_coeff(dim), 2.0 / (dim.n + 1))


def iota_derivative(r, dim, variant=Variant.SURFACE_TENSION):
    """Metric weight: sqrt(P(r)) for surface tension, P(r) for permeability."""
    if Variant.parse(variant) is Variant.PERMEABILITY:
        return perimeter(r, dim)
    return np.sqrt(perimeter(r, dim))


def iota_second_derivative(r, dim, variant=Variant.SURFACE_TENSION):
    if Variant.parse(variant) is Variant.PERMEABILITY:
        return perimeter_derivative(r, dim)
    return 0.5 * perimeter_derivative(r, dim) / np.sqrt(perimeter(r, dim))


def set_dist(r0, r1, dim, variant=Variant.SURFACE_TENSION):
    """Distance between concentric balls of radii r0 and r1."""
    if np.any(np.asarray(r0) < 0) or np.any(np.asarray(r1) < 0):
        raise ValueError("radii must be nonnegative")
    return np.abs(iota(r1, dim, variant) - iota(r0, dim, variant))


def set_dist_permeable(r0, r1, dim):
    return set_dist(r0, r1, dim, Variant.PERMEABILITY)


def ball_geodesic(r0, r1, t, dim, variant=Variant.SURFACE_TENSION):
    """Constant-speed geodesic between radii; linear in the iota coordinate."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("geodesic parameter must lie in [0, 1]")
    s0 = iota(r0, dim, variant)
    s1 = iota(r1, dim, variant)
    return iota_inverse((1.0 - t) * s0 + t * s1, dim, variant)


def perimeter_lambda(r_min: float, r_max: float, dim, variant=Variant.SURFACE_TENSION) -> float:
    """Infimum of the second derivative of P pulled back through iota.

    This is the convexity modulus of the perimeter along radius geodesics
    restricted to radii in [r_min, r_max].
    """
    dim = as_dimension(dim)
    n = dim.n
    if not 0 < r_min <= r_max:
        raise ValueError("need 0 < r_min <= r_max")
    s_lo = float(iota(r_min, dim, variant))
    s_hi = float(iota(r_max, dim, variant))
    if Variant.parse(variant) is Variant.PERMEABILITY:
        # P = theta * s^((n-1)/n), concave in s
        theta = n * dim.omega ** (1.0 / n)
        p = (n - 1) / n
    else:
        # P = theta * s^((2n-2)/(n+1))
        theta = n * dim.omega * ((n + 1) / (2.0 * math.sqrt(n * dim.omega))) ** (2.0 * (n - 1) / (n + 1))
        p = (2.0 * n - 2.0) / (n + 1)
    coeff = theta * p * (p - 1.0)

    def second(s):
        return coeff * s ** (p - 2.0)

    return float(min(second(s_lo), second(s_hi)))
