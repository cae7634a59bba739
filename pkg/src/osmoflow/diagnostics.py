"""Slope, chain rule, energy dissipation and convexity diagnostics.

All quantities are evaluated on the discrete energy.  The local slope is
the norm of its gradient in the product metric; it splits into a boundary
term ((n-1)/r - hat(u(r)))^2 * weight, where weight is P(r) for surface
tension and 1 for permeability, and an interior term approximating
kappa * int |d_rho hat(u)|^2 / u dx.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .energy import EntropyIntegrand, discrete_energy, total_energy
from .geometry import iota_derivative, perimeter_lambda
from .jko import Trajectory
from .state import MetricConfig, RadialState, coupled_geodesic, metric_derivative, rho_dist, rho_dist_sq


@dataclass(frozen=True)
class SlopeReport:
    boundary_term: float
    interior_term: float

    @property
    def slope(self) -> float:
        return math.sqrt(self.boundary_term + self.interior_term)


def energy_gradient(state: RadialState, f: EntropyIntegrand):
    """(dE/dr, dE/dq) of the discrete energy."""
    de = discrete_energy(state.u.q, state.r, f, state.dim, hessian=False)
    if de is None:
        raise ValueError("state has a degenerate shell (infinite energy)")
    return float(de.grad[-1]), de.grad[:-1], de


def boundary_density(state: RadialState, f: EntropyIntegrand) -> float:
    """Density of the shell touching the membrane."""
    return float(energy_gradient(state, f)[2].densities[-1])


def local_slope(state: RadialState, f: EntropyIntegrand, cfg: MetricConfig) -> SlopeReport:
    gr, gq, _ = energy_gradient(state, f)
    w = float(iota_derivative(state.r, cfg.dim, cfg.variant))
    return SlopeReport((gr / w) ** 2, cfg.kappa * state.M * float(np.dot(gq, gq)))


def _interior_node(traj: Trajectory, t: float) -> int:
    k = traj.node(t)
    if k == 0 or k == len(traj) - 1:
        raise ValueError("time must be an interior node of the trajectory")
    return k


def _energy(traj: Trajectory, k: int) -> float:
    return traj.records[k].energy.total


def energy_rate(traj: Trajectory, t: float) -> float:
    """dE/dt from the chain rule with centered state velocities."""
    k = _interior_node(traj, t)
    dt = traj.times[k + 1] - traj.times[k - 1]
    a, s, b = traj.states[k - 1], traj.states[k], traj.states[k + 1]
    gr, gq, _ = energy_gradient(s, traj.integrand)
    return gr * (b.r - a.r) / dt + float(np.dot(gq, b.u.q - a.u.q)) / dt


def energy_rate_fd(traj: Trajectory, t: float) -> float:
    k = _interior_node(traj, t)
    return (_energy(traj, k + 1) - _energy(traj, k - 1)) / (traj.times[k + 1] - traj.times[k - 1])


def dissipation_residual(traj: Trajectory, t: float) -> tuple[float, float]:
    """dE/dt + |dE|^2/2 + |gamma'|^2/2 and its size relative to |dE/dt|."""
    k = _interior_node(traj, t)
    rate = energy_rate_fd(traj, t)
    slope = local_slope(traj.states[k], traj.integrand, traj.metric).slope
    speed = metric_derivative(traj.times, traj.states, k, traj.metric)
    res = rate + 0.5 * slope * slope + 0.5 * speed * speed
    return res, abs(res) / max(abs(rate), 1e-300)


def evi_residual(traj: Trajectory, t: float, probe: RadialState, lam: float) -> float:
    """(1/2) d/dt rho^2(gamma, probe) + (lam/2) rho^2 + E(gamma) - E(probe); <= 0 for EVI."""
    k = _interior_node(traj, t)
    cfg = traj.metric
    d_prev = rho_dist_sq(traj.states[k - 1], probe, cfg)
    d_next = rho_dist_sq(traj.states[k + 1], probe, cfg)
    d_here = rho_dist_sq(traj.states[k], probe, cfg)
    ddt = 0.5 * (d_next - d_prev) / (traj.times[k + 1] - traj.times[k - 1])
    e_probe = total_energy(probe, traj.integrand).total
    return ddt + 0.5 * lam * d_here + _energy(traj, k) - e_probe


@dataclass(frozen=True)
class ConvexityReport:
    distance_defect: float
    energy_defect: float
    objective_defect: float
    energy_lambda: float
    empirical_lambda: float

    def passed(self, tol: float = 1e-8) -> bool:
        return min(self.distance_defect, self.energy_defect, self.objective_defect) >= -tol


def energy_lambda_between(a: RadialState, b: RadialState, cfg: MetricConfig) -> float:
    """Convexity modulus of E along the coupled geodesic from a to b.

    The internal energy is displacement convex, so only the perimeter can
    contribute a negative modulus; it is bounded using the radius range
    of the endpoints, which contains the whole geodesic.
    """
    lam = perimeter_lambda(min(a.r, b.r), max(a.r, b.r), cfg.dim, cfg.variant)
    return min(lam, 0.0)


def sublevel_lambda(level: float, f: EntropyIntegrand, cfg: MetricConfig) -> float:
    """Modulus certified on the energy sublevel {E <= level}."""
    from .energy import sublevel_radius_range

    lo, hi = sublevel_radius_range(level, f, cfg.dim)
    return min(perimeter_lambda(lo, hi, cfg.dim, cfg.variant), 0.0)


def convexity_probe(
    a: RadialState,
    b: RadialState,
    w: RadialState,
    f: EntropyIntegrand,
    cfg: MetricConfig,
    tau_samples: Sequence[float] = tuple(np.linspace(0.05, 0.95, 19)),
    h: float = 0.1,
    distance_lambda: float = 1.0,
    energy_lambda: Optional[float] = None,
) -> ConvexityReport:
    """Three-point convexity test along the coupled geodesic from a to b.

    Defects are (1-t) phi(a) + t phi(b) - (lam/2) t (1-t) rho(a,b)^2 - phi(t);
    a negative defect is a violation.  Tested functionals: (1/2) rho(w, .)^2
    with modulus ``distance_lambda``, E with ``energy_lambda`` and
    E + rho(w, .)^2 / (2h) with 1/h + energy_lambda.
    """
    if energy_lambda is None:
        energy_lambda = energy_lambda_between(a, b, cfg)
    D = rho_dist_sq(a, b, cfg)
    half = lambda s: 0.5 * rho_dist_sq(w, s, cfg)
    en = lambda s: total_energy(s, f).total
    d0, d1 = half(a), half(b)
    e0, e1 = en(a), en(b)
    dist_def = en_def = obj_def = math.inf
    emp = math.inf
    for t in tau_samples:
        g = coupled_geodesic(a, b, float(t), cfg)
        c = 0.5 * t * (1 - t) * D
        dt_, et_ = half(g), en(g)
        dist_def = min(dist_def, (1 - t) * d0 + t * d1 - distance_lambda * c - dt_)
        en_def = min(en_def, (1 - t) * e0 + t * e1 - energy_lambda * c - et_)
        o0, o1, ot = e0 + d0 / h, e1 + d1 / h, et_ + dt_ / h
        obj_def = min(obj_def, (1 - t) * o0 + t * o1 - (1.0 / h + energy_lambda) * c - ot)
        if c > 0:
            emp = min(emp, ((1 - t) * e0 + t * e1 - et_) / c)
    return ConvexityReport(dist_def, en_def, obj_def, energy_lambda, emp)


@dataclass
class DiagnosticSeries:
    times: np.ndarray
    slope: np.ndarray
    boundary_term: np.ndarray
    interior_term: np.ndarray
    energy_rate: np.ndarray
    dissipation_residual: np.ndarray
    relative_residual: np.ndarray


def trajectory_diagnostics(traj: Trajectory) -> DiagnosticSeries:
    """Per-node diagnostics; rate and residual are NaN at the two end nodes."""
    n = len(traj)
    bt = np.empty(n)
    it = np.empty(n)
    for k, s in enumerate(traj.states):
        rep = local_slope(s, traj.integrand, traj.metric)
        bt[k], it[k] = rep.boundary_term, rep.interior_term
    rate = np.full(n, np.nan)
    res = np.full(n, np.nan)
    rel = np.full(n, np.nan)
    for k in range(1, n - 1):
        t = traj.times[k]
        rate[k] = energy_rate(traj, t)
        res[k], rel[k] = dissipation_residual(traj, t)
    return DiagnosticSeries(np.asarray(traj.times), np.sqrt(bt + it), bt, it, rate, res, rel)
