"""Free energy: perimeter plus internal (entropy) energy of the solute.

Discretization.  The quantiles q_1 < ... < q_M cut the ball into M+1 shells
[0,q_1], [q_1,q_2], ..., [q_M, r].  The interior shells carry mass 1/M and
the two end shells carry 1/(2M).  The density is taken constant on each
shell, so the internal energy is sum_c V_c f(m_c / V_c).  Closing the last
shell at the membrane radius r gives the osmotic force on the boundary, and
because V f(m/V) blows up as V -> 0 for superlinear f the energy is itself a
barrier for the ordering and support constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .geometry import Dimension, as_dimension, perimeter, perimeter_derivative, perimeter_second_derivative
from .profile import QuantileProfile, ShellDensity, cell_masses
from .state import RadialState


@dataclass(frozen=True)
class EntropyIntegrand:
    """Convex integrand f with f(0) = 0.

    ``hat`` is z f'(z) - f(z), the pressure-like function driving both the
    diffusion and the osmotic boundary force.
    """

    name: str
    f: Callable
    f_prime: Callable
    hat: Callable
    f_second: Optional[Callable] = None

    def hat_prime(self, z):
        if self.f_second is not None:
            return z * self.f_second(z)
        z = np.asarray(z, dtype=float)
        h = 1e-6 * np.maximum(z, 1e-12)
        return (self.hat(z + h) - self.hat(z - h)) / (2 * h)


def _xlogx(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)
    return out


ZLOGZ = EntropyIntegrand(
    name="zlogz",
    f=_xlogx,
    f_prime=lambda z: np.log(z) + 1.0,
    hat=lambda z: np.asarray(z, dtype=float),
    f_second=lambda z: 1.0 / np.asarray(z, dtype=float),
)

SQUARE = EntropyIntegrand(
    name="square",
    f=lambda z: np.asarray(z, dtype=float) ** 2,
    f_prime=lambda z: 2.0 * np.asarray(z, dtype=float),
    hat=lambda z: np.asarray(z, dtype=float) ** 2,
    f_second=lambda z: 2.0 + 0.0 * np.asarray(z, dtype=float),
)

BUILTIN = {"zlogz": ZLOGZ, "square": SQUARE}


def get_integrand(name: str) -> EntropyIntegrand:
    try:
        return BUILTIN[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown integrand {name!r}; choose from {sorted(BUILTIN)}") from None


@dataclass(frozen=True)
class ValidationReport:
    convex: bool
    vanishes_at_zero: bool
    superlinear: bool
    coercive: bool
    hat_monotone: bool
    doubling_constant: float
    mccann: bool

    @property
    def ok(self) -> bool:
        return (
            self.convex
            and self.vanishes_at_zero
            and self.superlinear
            and self.coercive
            and self.hat_monotone
            and math.isfinite(self.doubling_constant)
        )

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ok"] = self.ok
        return d


def validate_integrand(f: EntropyIntegrand, n: int) -> ValidationReport:
    """Sampled checks of the structural hypotheses on f."""
    z = np.logspace(-12, 8, 401)
    fz = np.asarray(f.f(z), dtype=float)
    scale = 1.0 + np.abs(fz)

    mid = np.sqrt(z[1:] * z[:-1])
    w = (z[1:] - mid) / (z[1:] - z[:-1])
    chord = w * fz[:-1] + (1 - w) * fz[1:]
    convex = bool(np.all(np.asarray(f.f(mid)) <= chord + 1e-10 * (scale[1:] + scale[:-1])))

    vanishes = bool(abs(float(f.f(np.array(0.0)))) <= 1e-300 or abs(float(f.f(1e-300))) < 1e-100)

    tail = z >= 1.0
    ratio = fz[tail] / z[tail]
    superlinear = bool(np.all(np.diff(ratio) >= -1e-12 * np.abs(ratio[1:])) and ratio[-1] > ratio[0] + 1.0)

    small = np.logspace(-12, -6, 13)
    c = np.abs(small ** (-1.0 / n) * np.asarray(f.f(small), dtype=float))
    coercive = bool(c[0] < 1e-2 and np.all(np.diff(c) >= -1e-15))

    hz = np.asarray(f.hat(z), dtype=float)
    hat_monotone = bool(np.all(np.diff(hz) >= -1e-12 * (1 + np.abs(hz[1:]))) and np.all(hz >= -1e-12))

    zz = np.logspace(-8, 6, 57)
    Z1, Z2 = np.meshgrid(zz, zz)
    den = 1.0 + f.f(Z1) + f.f(Z2)
    if np.any(den <= 0):
        doubling = math.inf
    else:
        doubling = float(max(1.0, np.max(f.f(Z1 + Z2) / den)))

    y = np.logspace(-3, 3, 301)
    G = y ** n * np.asarray(f.f(y ** (-n)), dtype=float)
    gs = 1e-10 * (1 + np.abs(G))
    mccann = bool(
        np.all(np.diff(G) <= gs[1:])
        and np.all(G[1:-1] <= 0.5 * (G[:-2] + G[2:]) + gs[1:-1] + _log_grid_slack(y, G))
    )
    return ValidationReport(convex, vanishes, superlinear, coercive, hat_monotone, doubling, mccann)


def _log_grid_slack(y, G):
    # On a geometric grid the midpoint is not the arithmetic mean; compare
    # against the chord through the two neighbours instead.
    w = (y[2:] - y[1:-1]) / (y[2:] - y[:-2])
    chord = w * G[:-2] + (1 - w) * G[2:]
    return chord - 0.5 * (G[:-2] + G[2:])


@dataclass(frozen=True)
class EnergyBreakdown:
    perimeter: float
    internal: float

    @property
    def total(self) -> float:
        return self.perimeter + self.internal


def shell_volumes(q: np.ndarray, edge: float, dim: Dimension) -> np.ndarray:
    s = dim.omega * np.concatenate([[0.0], q, [edge]]) ** dim.n
    return np.diff(s)


def shell_densities(q: np.ndarray, edge: float, dim: Dimension) -> np.ndarray:
    V = shell_volumes(q, edge, dim)
    if np.any(V <= 0):
        raise ValueError("degenerate shell: quantiles must be strictly increasing and inside the edge")
    return cell_masses(q.size) / V


def internal_energy(u: QuantileProfile, f: EntropyIntegrand, outer_radius: float | None = None) -> float:
    """sum_c m_c f(u_c)/u_c over shells; the last shell ends at outer_radius.

    Without an outer radius the support edge is extrapolated from the profile.
    Returns +inf for degenerate shells.
    """
    edge = u.outer_edge() if outer_radius is None else float(outer_radius)
    V = shell_volumes(u.q, edge, u.dim)
    if np.any(V <= 0):
        return math.inf
    m = cell_masses(u.M)
    return float(np.sum(V * f.f(m / V)))


def total_energy(state: RadialState, f: EntropyIntegrand) -> EnergyBreakdown:
    return EnergyBreakdown(float(perimeter(state.r, state.dim)), internal_energy(state.u, f, state.r))


def energy_floor(r, f: EntropyIntegrand, dim) -> float:
    """Energy of the uniform profile on B_r, the minimum over profiles in B_r."""
    dim = as_dimension(dim)
    vol = dim.omega * np.power(r, dim.n)
    return perimeter(r, dim) + vol * f.f(1.0 / vol)


def _boundary_force(r, f, dim):
    # E_floor'(r) / P(r)
    dim = as_dimension(dim)
    return (dim.n - 1) / r - f.hat(1.0 / (dim.omega * r ** dim.n))


def equilibrium_radius(f: EntropyIntegrand, dim) -> float:
    """Minimizer of the floor energy, from a bracketed root of its derivative."""
    dim = as_dimension(dim)
    grid = np.logspace(-6, 6, 241)
    g = np.array([_boundary_force(r, f, dim) for r in grid])
    idx = np.nonzero((g[:-1] < 0) & (g[1:] >= 0))[0]
    if idx.size == 0:
        raise ValueError("no equilibrium bracket found; integrand is not coercive")
    i = int(idx[0])
    return float(brentq(lambda r: _boundary_force(r, f, dim), grid[i], grid[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def sublevel_radius_range(level: float, f: EntropyIntegrand, dim) -> tuple[float, float]:
    """Radii r with energy_floor(r) <= level; any state with E <= level has r in it."""
    dim = as_dimension(dim)
    r_star = equilibrium_radius(f, dim)
    e_star = float(energy_floor(r_star, f, dim))
    if level < e_star:
        raise ValueError("level is below the minimum energy")
    if level == e_star:
        return r_star, r_star
    h = lambda r: float(energy_floor(r, f, dim)) - level
    lo = r_star
    while h(lo) <= 0:
        lo *= 0.5
        if lo < 1e-12:
            raise ValueError("sublevel set is not bounded away from zero")
    hi = r_star
    while h(hi) <= 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("sublevel set is unbounded")
    return brentq(h, lo, r_star, xtol=1e-14), brentq(h, r_star, hi, xtol=1e-14)


@dataclass
class DiscreteEnergy:
    """Energy of (q, r) with first derivatives and the tridiagonal Hessian.

    Variables are ordered (q_1, ..., q_M, r) so that the Hessian is
    tridiagonal: ``diag`` has length M+1 and ``off`` length M.
    """

    value: float
    perimeter: float
    internal: float
    grad: np.ndarray
    diag: Optional[np.ndarray]
    off: Optional[np.ndarray]
    densities: np.ndarray


def discrete_energy(q: np.ndarray, r: float, f: EntropyIntegrand, dim: Dimension, hessian: bool = True) -> DiscreteEnergy | None:
    """Returns None when a shell is degenerate (the energy is +inf there)."""
    n, om = dim.n, dim.omega
    M = q.size
    x = np.empty(M + 1)
    x[:M] = q
    x[M] = r
    if q[0] <= 0:
        return None
    s = om * x ** n
    V = np.empty(M + 1)
    V[0] = s[0]
    V[1:] = np.diff(s)
    if np.any(V <= 0):
        return None
    m = cell_masses(M)
    u = m / V
    fu = f.f(u)
    internal = float(np.sum(V * fu))
    per = float(n * om * r ** (n - 1))
    hat = f.hat(u)
    P = n * om * x ** (n - 1)
    # d/dV [V f(m/V)] = -hat(u); dV_c/dx_i = +P_i for the shell left of x_i, -P_i right of it
    grad = np.empty(M + 1)
    grad[:M] = P[:M] * (hat[1:] - hat[:M])
    grad[M] = -P[M] * hat[M] + perimeter_derivative(r, dim)
    diag = off = None
    if hessian:
        g2 = f.hat_prime(u) * u / V  # second derivative of V f(m/V) in V
        dP = n * (n - 1) * om * x ** (n - 2)
        diag = np.empty(M + 1)
        diag[:M] = P[:M] ** 2 * (g2[:M] + g2[1:]) + dP[:M] * (hat[1:] - hat[:M])
        diag[M] = P[M] ** 2 * g2[M] - dP[M] * hat[M] + perimeter_second_derivative(r, dim)
        off = -P[:M] * P[1:] * g2[1:]
    return DiscreteEnergy(per + internal, per, internal, grad, diag, off, u)


def state_shells(state: RadialState) -> ShellDensity:
    """Shell-constant density of a state; the trace is the density of the outer shell."""
    edges = np.concatenate([[0.0], state.u.q, [state.r]])
    values = shell_densities(state.u.q, state.r, state.dim)
    return ShellDensity(edges, values, float(values[-1]))
