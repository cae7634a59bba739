"""Independent finite-volume solver for the free-boundary problem.

Solves, for radial u(rho, t) on the ball of radius r(t),

    u_t = kappa * Laplace hat(u)                     in B_r(t)
    -kappa * d_rho hat(u) = u * r'                   at rho = r(t)
    w(r) * r' = -sigma (n-1)/r + beta * hat(u(r))

with w = 1 for surface tension and w = P(r) for permeability.  The ball is
mapped to y = rho / r in [0, 1]; the cell masses are the conserved
variables and faces move with the grid, so the no-flux condition in the
moving frame is exactly the boundary condition above and total mass is
conserved to round-off.  Also provides weak-form residuals of the
diffusion equation and of the boundary law, and the trajectory comparison
against the JKO scheme.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .energy import EnergyBreakdown, EntropyIntegrand, state_shells
from .geometry import Variant, perimeter
from .jko import StepRecord, Trajectory
from .profile import RadialDensity, ShellDensity, quantiles_from_shells, resample
from .state import MetricConfig, RadialState, rho_dist


class StabilityError(RuntimeError):
    pass


class Scheme(enum.Enum):
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"


@dataclass(frozen=True)
class OracleGrid:
    J: int = 400
    dt: float = 1e-4
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    cfl: float = 0.2
    quantile_cells: int = 200

    def __post_init__(self):
        if self.J < 2:
            raise ValueError("need at least two cells")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True)
class BoundaryLaw:
    """Coefficients of the physical boundary law; all ones in scaled variables."""

    sigma: float = 1.0
    beta: float = 1.0
    mass: float = 1.0


class _Solver:
    def __init__(self, f, cfg: MetricConfig, grid: OracleGrid, law: BoundaryLaw):
        self.f = f
        self.cfg = cfg
        self.grid = grid
        self.law = law
        n = cfg.dim.n
        self.n = n
        self.om = cfg.dim.omega
        J = grid.J
        self.yf = np.linspace(0.0, 1.0, J + 1)
        self.dy = 1.0 / J
        self.yfn = self.yf ** n
        self.dyn = np.diff(self.yfn)
        self.Pf = n * self.om * self.yf[1:-1] ** (n - 1)  # face areas at r = 1

    def volumes(self, r):
        return self.om * r ** self.n * self.dyn

    def trace(self, u):
        return max(1.5 * u[-1] - 0.5 * u[-2], 0.0)

    def velocity(self, r, u):
        n, law = self.n, self.law
        v = -law.sigma * (n - 1) / r + law.beta * float(self.f.hat(self.trace(u)))
        if self.cfg.variant is Variant.PERMEABILITY:
            v /= float(perimeter(r, self.cfg.dim))
        return v

    def max_stable_dt(self, r, u):
        hp = float(np.max(self.f.hat_prime(np.maximum(u, 1e-300))))
        return self.grid.cfl * (r * self.dy) ** 2 / (self.cfg.kappa * max(hp, 1e-300))

    def step(self, r, u, dt):
        n = self.n
        v = self.velocity(r, u)
        r_new = r + dt * v
        if not r_new > 0:
            raise StabilityError("radius collapsed")
        m = u * self.volumes(r)
        swept = self.om * self.yfn[1:-1] * (r_new ** n - r ** n)  # volume swept by each inner face
        kap = self.cfg.kappa
        if self.grid.scheme is Scheme.EXPLICIT:
            H = self.f.hat(u)
            Pf = self.Pf * r ** (n - 1)
            flux = -kap * Pf * np.diff(H) / (r * self.dy) * dt - 0.5 * (u[1:] + u[:-1]) * swept
            F = np.concatenate([[0.0], flux, [0.0]])
            m_new = m - np.diff(F)
            u_new = m_new / self.volumes(r_new)
        else:
            h0 = self.f.hat(u)
            h1 = self.f.hat_prime(np.maximum(u, 1e-300))
            c = h0 - h1 * u
            D = dt * kap * self.Pf * r_new ** (n - 1) / (r_new * self.dy)
            a = 0.5 * swept
            J = u.size
            Dp = np.append(D, 0.0)
            Dm = np.insert(D, 0, 0.0)
            ap = np.append(a, 0.0)
            am = np.insert(a, 0, 0.0)
            diag = self.volumes(r_new) + (Dp + Dm) * h1 - ap + am
            upper = -D * h1[1:] - a
            lower = -D * h1[:-1] + a
            rhs = m.copy()
            dc = np.diff(c)
            rhs[:-1] += D * dc
            rhs[1:] -= D * dc
            ab = np.zeros((3, J))
            ab[0, 1:] = upper
            ab[1] = diag
            ab[2, :-1] = lower
            u_new = solve_banded((1, 1), ab, rhs, check_finite=False)
        if not np.all(np.isfinite(u_new)) or np.any(u_new < 0):
            raise StabilityError("density lost positivity; reduce dt")
        return r_new, u_new

    def energy(self, r, u) -> EnergyBreakdown:
        V = self.volumes(r)
        return EnergyBreakdown(self.law.sigma * float(perimeter(r, self.cfg.dim)), self.law.beta * float(np.sum(V * self.f.f(u))))


def initial_cells(density: RadialDensity, r0: float, J: int, mass: float = 1.0) -> np.ndarray:
    """Cell averages of a nodal density on the mapped grid of B_r0."""
    dim = density.dim
    if density.grid[-1] > r0 * (1 + 1e-12) and density.values[-1] > 0:
        raise ValueError("initial density is not supported in the ball")
    total = density.mass()
    if abs(total - mass) > 1e-6 * max(1.0, mass):
        raise ValueError(f"initial density carries mass {total:.12g}, expected {mass:.12g}")
    edges = r0 * np.linspace(0.0, 1.0, J + 1)
    cum = density.mass_within(edges)
    V = dim.omega * np.diff(edges ** dim.n)
    return np.diff(cum) * (mass / total) / V


def solve_strong(
    initial: RadialDensity,
    r0: float,
    horizon: float,
    f: EntropyIntegrand,
    cfg: MetricConfig,
    grid: OracleGrid = OracleGrid(),
    output_times: Optional[Sequence[float]] = None,
    law: BoundaryLaw = BoundaryLaw(),
) -> Trajectory:
    """Integrate the strong form; snapshots are taken exactly at output_times."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if output_times is None:
        output_times = np.linspace(0.0, horizon, 101)
    out = np.asarray(output_times, dtype=float)
    if out[0] != 0.0 or np.any(np.diff(out) <= 0) or out[-1] > horizon * (1 + 1e-12):
        raise ValueError("output times must start at 0, increase and stay within the horizon")
    solver = _Solver(f, cfg, grid, law)
    u = initial_cells(initial, r0, grid.J, law.mass)
    r = float(r0)
    traj = Trajectory(cfg, f, method="oracle", shells=[])
    mass0 = float(np.sum(u * solver.volumes(r)))
    drift = 0.0

    def record(t):
        edges = r * solver.yf
        traj.times.append(float(t))
        q = quantiles_from_shells(edges, u, grid.quantile_cells, cfg.dim, mass=law.mass)
        traj.states.append(RadialState(r, q))
        traj.records.append(StepRecord(solver.energy(r, u)))
        traj.shells.append(ShellDensity(edges, u.copy(), solver.trace(u)))

    record(0.0)
    t = 0.0
    nsteps = 0
    try:
        for t_next in out[1:]:
            while t < t_next - 1e-14 * max(1.0, t_next):
                dt = min(grid.dt, t_next - t)
                if grid.scheme is Scheme.EXPLICIT:
                    dt = min(dt, solver.max_stable_dt(r, u))
                v = solver.velocity(r, u)
                if v != 0:
                    dt = min(dt, 0.5 * r * solver.dy / abs(v))
                r_prev = r
                m_prev = float(np.sum(u * solver.volumes(r)))
                r, u = solver.step(r, u, dt)
                m_now = float(np.sum(u * solver.volumes(r)))
                drift = max(drift, abs(m_now - m_prev) / max(1.0, law.mass))
                t = t_next if t_next - (t + dt) < 1e-14 * max(1.0, t_next) else t + dt
                nsteps += 1
            record(t)
    except StabilityError as exc:
        traj.status = f"failed at t={t:.6g}: {exc}"
    mass_end = float(np.sum(u * solver.volumes(r)))
    traj.checks = {"max_step_mass_drift": drift, "mass_error": abs(mass_end - mass0), "steps": nsteps}
    return traj


@dataclass(frozen=True)
class CompareReport:
    times: np.ndarray
    distances: np.ndarray

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances))


def compare(a: Trajectory, b: Trajectory, cfg: Optional[MetricConfig] = None) -> CompareReport:
    """rho-distance between two trajectories sampled at the same times."""
    cfg = cfg or a.metric
    if a.metric.dim.n != b.metric.dim.n or a.metric.kappa != b.metric.kappa or a.metric.variant != b.metric.variant:
        raise ValueError("trajectories were computed with different metric settings")
    ta, tb = np.asarray(a.times), np.asarray(b.times)
    if ta.shape != tb.shape or np.max(np.abs(ta - tb)) > 1e-9 * max(1.0, ta[-1]):
        raise ValueError("trajectories are not sampled at the same times")
    d = []
    for sa, sb in zip(a.states, b.states):
        if sb.M != sa.M:
            sb = RadialState(sb.r, resample(sb.u, sa.M))
        d.append(rho_dist(sa, sb, cfg))
    return CompareReport(ta, np.array(d))


# Weak formulation ---------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)
_GL40_X, _GL40_W = np.polynomial.legendre.leggauss(40)


@dataclass(frozen=True)
class BumpTest:
    """phi(rho, t) = a(t) b(rho): a smooth compactly supported time bump
    times the radial profile b = exp(-((rho^2 - c^2)/w^2)^2)."""

    t_center: float
    t_half: float
    c: float
    w: float

    def a(self, t):
        s = (np.asarray(t, dtype=float) - self.t_center) / self.t_half
        inside = np.abs(s) < 1
        ss = np.where(inside, s, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - ss * ss)), 0.0)

    def da(self, t):
        s = (np.asarray(t, dtype=float) - self.t_center) / self.t_half
        inside = np.abs(s) < 1
        ss = np.where(inside, s, 0.0)
        val = np.exp(1.0 - 1.0 / (1.0 - ss * ss)) * (-2.0 * ss / (1.0 - ss * ss) ** 2) / self.t_half
        return np.where(inside, val, 0.0)

    def b(self, rho):
        z = (np.asarray(rho, dtype=float) ** 2 - self.c ** 2) / self.w ** 2
        return np.exp(-z * z)

    def db(self, rho):
        rho = np.asarray(rho, dtype=float)
        z = (rho ** 2 - self.c ** 2) / self.w ** 2
        return np.exp(-z * z) * (-2.0 * z) * (2.0 * rho / self.w ** 2)


def default_test_family(horizon: float, radius: float) -> list[BumpTest]:
    """Nine test functions: three time windows times three radial centers."""
    tests = []
    for tc in (0.3, 0.5, 0.7):
        for c in (0.0, 0.5, 1.0):
            tests.append(BumpTest(tc * horizon, 0.25 * horizon, c * radius, 0.5 * radius))
    return tests


def _shells(traj: Trajectory, k: int) -> ShellDensity:
    if traj.shells is not None:
        return traj.shells[k]
    return state_shells(traj.states[k])


def _trapz(y, t):
    y = np.asarray(y)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def _radial_integral(func, lo, hi, dim):
    # int_lo^hi func(rho) P(rho) drho over many intervals with 3-point Gauss rules
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    return np.sum(func(x) * perimeter(x, dim) * _GL_W[None, :], axis=1) * half


def weak_residual_diffusion(traj: Trajectory, tests: Sequence[BumpTest]) -> np.ndarray:
    """Scaled residual of (1/kappa) int int u phi_t = int int grad hat(u) . grad phi.

    Each residual is divided by int int |u phi_t|/kappa + int int |grad hat(u) . grad phi|,
    so it is dimensionless and vanishes for exact solutions.
    """
    dim = traj.metric.dim
    kap = traj.metric.kappa
    hat = traj.integrand.hat
    t = np.asarray(traj.times)
    out = []
    for test in tests:
        U = np.empty(t.size)
        G = np.empty(t.size)
        Gabs = np.empty(t.size)
        for k in range(t.size):
            sh = _shells(traj, k)
            e = sh.edges
            U[k] = float(np.dot(sh.values, _radial_integral(test.b, e[:-1], e[1:], dim)))
            # jumps of hat(u) across inner edges, plus the jump from the last
            # shell to the boundary trace at rho = r
            hv = hat(np.append(sh.values, sh.trace))
            jumps = np.diff(hv) * test.db(e[1:]) * perimeter(e[1:], dim)
            G[k] = float(np.sum(jumps))
            Gabs[k] = float(np.sum(np.abs(jumps)))
        lhs = _trapz(test.da(t) * U, t) / kap
        rhs = _trapz(test.a(t) * G, t)
        scale = _trapz(np.abs(test.da(t)) * U, t) / kap + _trapz(test.a(t) * Gabs, t)
        out.append((lhs - rhs) / scale if scale > 0 else 0.0)
    return np.array(out)


def boundary_weak_lhs(times, radii, test: BumpTest, dim) -> float:
    """int int_{B_r(t)} psi_t dx dt for a radius history."""
    t = np.asarray(times)
    R = np.asarray(radii)
    B = np.array([_ball_integral(test.b, rr, dim) for rr in R])
    return _trapz(test.da(t) * B, t)


def _ball_integral(func, R, dim):
    x = 0.5 * R * (_GL40_X + 1.0)
    return float(np.sum(func(x) * perimeter(x, dim) * _GL40_W) * 0.5 * R)


def weak_residual_boundary(traj: Trajectory, tests: Sequence[BumpTest]) -> np.ndarray:
    """Scaled residual of the weak boundary law

        int int_{B_r} psi_t = int ((n-1)/r - hat(u(r))) psi(r, t) W(r) dt

    with W = P(r) for surface tension and W = 1 for permeability.
    """
    cfg = traj.metric
    dim = cfg.dim
    n = dim.n
    t = np.asarray(traj.times)
    R = np.array([s.r for s in traj.states])
    trace = np.array([_shells(traj, k).trace for k in range(t.size)])
    force = (n - 1) / R - traj.integrand.hat(trace)
    W = perimeter(R, dim) if cfg.variant is Variant.SURFACE_TENSION else np.ones_like(R)
    out = []
    for test in tests:
        B = np.array([_ball_integral(test.b, rr, dim) for rr in R])
        lhs = _trapz(test.da(t) * B, t)
        rhs_integrand = test.a(t) * force * test.b(R) * W
        rhs = _trapz(rhs_integrand, t)
        scale = _trapz(np.abs(test.da(t)) * B, t) + _trapz(np.abs(rhs_integrand), t)
        out.append((lhs - rhs) / scale if scale > 0 else 0.0)
    return np.array(out)
