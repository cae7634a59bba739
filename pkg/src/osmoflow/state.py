"""Coupled cell state (r, u) and the product metric on it.

The squared distance is d(r0, r1)^2 + W2(u0, u1)^2 / kappa.  Both factors
are flat in the coordinates (iota(r), q), so the coupled geodesic moves the
radius along its ball geodesic and the quantiles linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Dimension, Variant, as_dimension, ball_geodesic, iota
from .profile import QuantileProfile, displacement_geodesic, wasserstein2

SUPPORT_SLACK = 1e-12


class SupportError(ValueError):
    """Raised when the profile is not supported inside the ball."""


@dataclass(frozen=True)
class MetricConfig:
    dim: Dimension
    kappa: float = 1.0
    variant: Variant = Variant.SURFACE_TENSION

    def __post_init__(self):
        object.__setattr__(self, "dim", as_dimension(self.dim))
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError("kappa must be positive and finite")


@dataclass(frozen=True, eq=False)
class RadialState:
    r: float
    u: QuantileProfile

    def __post_init__(self):
        r = float(self.r)
        if not (np.isfinite(r) and r > 0):
            raise ValueError(f"radius must be positive, got {self.r!r}")
        object.__setattr__(self, "r", r)
        if self.u.q[-1] > r + SUPPORT_SLACK * max(1.0, r):
            raise SupportError(f"outer quantile {self.u.q[-1]:.17g} exceeds radius {r:.17g}")

    @property
    def dim(self) -> Dimension:
        return self.u.dim

    @property
    def M(self) -> int:
        return self.u.M

    def support_margin(self) -> float:
        return self.r - float(self.u.q[-1])


def _check_pair(a: RadialState, b: RadialState, cfg: MetricConfig):
    if a.dim.n != cfg.dim.n or b.dim.n != cfg.dim.n:
        raise ValueError("state dimension does not match the metric configuration")
    if a.M != b.M:
        raise ValueError(f"profile sizes differ ({a.M} vs {b.M})")


def rho_dist_sq(a: RadialState, b: RadialState, cfg: MetricConfig) -> float:
    _check_pair(a, b, cfg)
    dr = float(iota(b.r, cfg.dim, cfg.variant) - iota(a.r, cfg.dim, cfg.variant))
    return dr * dr + wasserstein2(a.u, b.u) ** 2 / cfg.kappa


def rho_dist(a: RadialState, b: RadialState, cfg: MetricConfig) -> float:
    return float(np.sqrt(rho_dist_sq(a, b, cfg)))


def coupled_geodesic(a: RadialState, b: RadialState, t: float, cfg: MetricConfig) -> RadialState:
    _check_pair(a, b, cfg)
    r = float(ball_geodesic(a.r, b.r, t, cfg.dim, cfg.variant))
    return RadialState(r, displacement_geodesic(a.u, b.u, t))


def flat_coordinates(state: RadialState, cfg: MetricConfig) -> np.ndarray:
    """Coordinates in which rho is the Euclidean distance."""
    s = float(iota(state.r, cfg.dim, cfg.variant))
    return np.concatenate([[s], state.u.q / np.sqrt(cfg.kappa * state.M)])


def metric_derivative(times, states, k: int, cfg: MetricConfig) -> float:
    """Metric speed at node k by a centered difference (one-sided at the ends)."""
    n = len(states)
    if n < 2:
        raise ValueError("need at least two states")
    if not 0 <= k < n:
        raise IndexError(k)
    lo, hi = max(k - 1, 0), min(k + 1, n - 1)
    dt = times[hi] - times[lo]
    if dt <= 0:
        raise ValueError("times must increase")
    return rho_dist(states[lo], states[hi], cfg) / dt
