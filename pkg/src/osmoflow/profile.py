"""Quantile (inverse-CDF) representation of radial probability densities.

A profile stores q_i ~ F^{-1}(sigma_i) at the mass midpoints
sigma_i = (i - 1/2)/M, where F(rho) is the mass inside the ball of radius
rho.  In this coordinate the 2-Wasserstein distance is a weighted l2 norm
and displacement interpolation is linear.

The mass between consecutive quantiles is exactly 1/M; the innermost and
outermost half cells carry 1/(2M) each.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Dimension, as_dimension

ATOM_GAP = 1e-14
MASS_TOL = 1e-6


class AtomError(ValueError):
    """Raised when quantiles coincide, i.e. the measure has an atom."""


class MassError(ValueError):
    """Raised when a density does not carry unit mass."""


def mass_levels(M: int) -> np.ndarray:
    return (np.arange(1, M + 1) - 0.5) / M


def cell_masses(M: int) -> np.ndarray:
    """Masses of the M+1 cells [0,q_1], [q_1,q_2], ..., [q_M, edge]."""
    m = np.full(M + 1, 1.0 / M)
    m[0] = m[-1] = 0.5 / M
    return m


@dataclass(frozen=True, eq=False)
class QuantileProfile:
    q: np.ndarray
    dim: Dimension

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        if q.size < 1:
            raise ValueError("profile needs at least one quantile")
        if not np.all(np.isfinite(q)):
            raise ValueError("quantiles must be finite")
        if q[0] < 0:
            raise ValueError("quantiles must be nonnegative")
        if np.any(np.diff(q) < 0):
            raise ValueError("quantiles must be nondecreasing")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "dim", as_dimension(self.dim))

    @property
    def M(self) -> int:
        return self.q.size

    @property
    def sigma(self) -> np.ndarray:
        return mass_levels(self.M)

    @property
    def volumes(self) -> np.ndarray:
        """Enclosed volume omega*q_i^n at each quantile."""
        return self.dim.omega * self.q ** self.dim.n

    def outer_edge(self) -> float:
        """Support edge by linear extrapolation of enclosed volume to sigma = 1."""
        s = self.volumes
        if self.M == 1:
            return self.q[0] * 2.0 ** (1.0 / self.dim.n)
        s_edge = s[-1] + 0.5 * (s[-1] - s[-2])
        return float((s_edge / self.dim.omega) ** (1.0 / self.dim.n))

    def __repr__(self):
        return f"QuantileProfile(M={self.M}, n={self.dim.n}, q_M={self.q[-1]:.6g})"


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Nodal radial density; values are linear in enclosed volume between nodes.

    The density is zero below grid[0] and beyond grid[-1].
    """

    grid: np.ndarray
    values: np.ndarray
    dim: Dimension

    def __post_init__(self):
        g = np.array(self.grid, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if g.size != v.size or g.size < 2:
            raise ValueError("grid and values must have equal length >= 2")
        if g[0] < 0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be nonnegative and strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dim", as_dimension(self.dim))

    def cumulative(self) -> np.ndarray:
        """Mass inside grid[k] for every node (trapezoid in volume, exact here)."""
        V = self.dim.omega * self.grid ** self.dim.n
        seg = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(V)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def mass(self) -> float:
        return float(self.cumulative()[-1])

    def mass_within(self, radii) -> np.ndarray:
        """Mass inside each of the given radii."""
        radii = np.asarray(radii, dtype=float)
        V = self.dim.omega * self.grid ** self.dim.n
        F = self.cumulative()
        x = self.dim.omega * np.clip(radii, self.grid[0], self.grid[-1]) ** self.dim.n
        k = np.clip(np.searchsorted(V, x, side="right") - 1, 0, V.size - 2)
        dV = V[k + 1] - V[k]
        t = x - V[k]
        u0, u1 = self.values[k], self.values[k + 1]
        return F[k] + u0 * t + 0.5 * (u1 - u0) * t * t / dV


@dataclass(frozen=True, eq=False)
class ShellDensity:
    """Density constant on shells edges[k] < rho < edges[k+1].

    ``trace`` is the density value used at the outer edge.
    """

    edges: np.ndarray
    values: np.ndarray
    trace: float


def uniform_profile(radius: float, M: int, dim) -> QuantileProfile:
    """Quantiles of the uniform probability density on the ball of given radius."""
    dim = as_dimension(dim)
    if radius <= 0 or M < 1:
        raise ValueError("need radius > 0 and M >= 1")
    return QuantileProfile(radius * mass_levels(M) ** (1.0 / dim.n), dim)


def uniform_density(radius: float, dim, mass: float = 1.0) -> RadialDensity:
    dim = as_dimension(dim)
    c = mass / (dim.omega * radius ** dim.n)
    return RadialDensity(np.array([0.0, radius]), np.array([c, c]), dim)


def _check_atoms(q: np.ndarray):
    if q[0] <= ATOM_GAP or np.any(np.diff(q) <= ATOM_GAP):
        raise AtomError("quantiles coincide below resolution; measure has an atom")


def quantiles_from_density(u: RadialDensity, M: int, mass: float = 1.0) -> QuantileProfile:
    """Midpoint quantiles of a nodal density, inverting its exact CDF."""
    if M < 1:
        raise ValueError("M must be >= 1")
    F = u.cumulative()
    total = F[-1]
    if not abs(total - mass) <= MASS_TOL * max(1.0, mass):
        raise MassError(f"density carries mass {total:.12g}, expected {mass:.12g}")
    F = F / total
    dim = u.dim
    V = dim.omega * u.grid ** dim.n
    sig = mass_levels(M)
    k = np.searchsorted(F, sig, side="left") - 1
    k = np.clip(k, 0, u.grid.size - 2)
    dV = V[k + 1] - V[k]
    u0 = u.values[k] / total
    u1 = u.values[k + 1] / total
    a = 0.5 * (u1 - u0) / dV
    c = sig - F[k]
    # root of a x^2 + u0 x - c = 0 in the stable form
    x = 2.0 * c / (u0 + np.sqrt(np.maximum(u0 * u0 + 4.0 * a * c, 0.0)))
    x = np.clip(x, 0.0, dV)
    q = ((V[k] + x) / dim.omega) ** (1.0 / dim.n)
    q = np.maximum.accumulate(q)
    _check_atoms(q)
    return QuantileProfile(q, dim)


def quantiles_from_shells(edges, values, M: int, dim, mass: float = 1.0) -> QuantileProfile:
    """Midpoint quantiles of a density that is constant on each spherical shell."""
    dim = as_dimension(dim)
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    V = dim.omega * edges ** dim.n
    cell = values * np.diff(V)
    F = np.concatenate([[0.0], np.cumsum(cell)])
    total = F[-1]
    if not abs(total - mass) <= MASS_TOL * max(1.0, mass):
        raise MassError(f"shells carry mass {total:.12g}, expected {mass:.12g}")
    F = F / total
    sig = mass_levels(M)
    k = np.clip(np.searchsorted(F, sig, side="left") - 1, 0, values.size - 1)
    frac = (sig - F[k]) / np.where(cell[k] > 0, cell[k] / total, 1.0)
    Vq = V[k] + np.clip(frac, 0.0, 1.0) * (V[k + 1] - V[k])
    q = np.maximum.accumulate((Vq / dim.omega) ** (1.0 / dim.n))
    _check_atoms(q)
    return QuantileProfile(q, dim)


def density_from_quantiles(u: QuantileProfile) -> RadialDensity:
    """Nodal density on [0, q_1, ..., q_M, edge].

    Node values are 1/(dV/dsigma) with dV/dsigma from centered differences of
    enclosed volume (one-sided at the ends), which is exact for uniform
    profiles.  The result is renormalized to unit mass.
    """
    q = u.q
    _check_atoms(q)
    M = u.M
    s = u.volumes
    if M == 1:
        dv = np.array([2.0 * s[0]])
    else:
        dv = np.empty(M)
        dv[1:-1] = (s[2:] - s[:-2]) * (M / 2.0)
        dv[0] = (s[1] - s[0]) * M
        dv[-1] = (s[-1] - s[-2]) * M
    nodal = 1.0 / dv
    grid = np.concatenate([[0.0], q, [u.outer_edge()]])
    values = np.concatenate([[nodal[0]], nodal, [nodal[-1]]])
    rd = RadialDensity(grid, values, u.dim)
    return RadialDensity(grid, values / rd.mass(), u.dim)


def _same_size(u: QuantileProfile, w: QuantileProfile, resample_to_first: bool):
    if u.dim.n != w.dim.n:
        raise ValueError("profiles live in different dimensions")
    if u.M != w.M:
        if not resample_to_first:
            raise ValueError(f"profile sizes differ ({u.M} vs {w.M})")
        w = resample(w, u.M)
    return u, w


def wasserstein2(u: QuantileProfile, w: QuantileProfile, resample_to_first: bool = False) -> float:
    u, w = _same_size(u, w, resample_to_first)
    return float(np.sqrt(np.mean((u.q - w.q) ** 2)))


def optimal_map(u: QuantileProfile, w: QuantileProfile) -> np.ndarray:
    """Monotone transport: the mass of cell i goes to radius w.q[i]."""
    u, w = _same_size(u, w, False)
    return w.q.copy()


def displacement_geodesic(u: QuantileProfile, w: QuantileProfile, t: float) -> QuantileProfile:
    if not 0.0 <= t <= 1.0:
        raise ValueError("geodesic parameter must lie in [0, 1]")
    u, w = _same_size(u, w, False)
    return QuantileProfile((1.0 - t) * u.q + t * w.q, u.dim)


def resample(u: QuantileProfile, M: int) -> QuantileProfile:
    """Linear interpolation of the quantile function in sigma (clamped ends)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if M == u.M:
        return u
    return QuantileProfile(np.interp(mass_levels(M), u.sigma, u.q), u.dim)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_profile_csv(u: QuantileProfile, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["sigma", "quantile"])
        for s, q in zip(u.sigma, u.q):
            wr.writerow([_fmt(s), _fmt(q)])


def read_profile_csv(path, dim) -> QuantileProfile:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"sigma", "quantile"}:
        raise ValueError("profile csv must have columns sigma,quantile")
    sig = np.array([float(r["sigma"]) for r in rows])
    q = np.array([float(r["quantile"]) for r in rows])
    if not np.allclose(sig, mass_levels(q.size), rtol=0, atol=1e-12):
        raise ValueError("sigma column is not the midpoint grid")
    return QuantileProfile(q, dim)


def write_density_csv(u: RadialDensity, path) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["radius", "value"])
        for g, v in zip(u.grid, u.values):
            wr.writerow([_fmt(g), _fmt(v)])


def read_density_csv(path, dim) -> RadialDensity:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"radius", "value"}:
        raise ValueError("density csv must have columns radius,value")
    return RadialDensity([float(r["radius"]) for r in rows], [float(r["value"]) for r in rows], dim)
