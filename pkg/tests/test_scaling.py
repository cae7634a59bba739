import math

import numpy as np
import pytest

from osmoflow.energy import ZLOGZ
from osmoflow.pde_oracle import BoundaryLaw, OracleGrid, solve_strong
from osmoflow.profile import QuantileProfile, RadialDensity, uniform_density, uniform_profile
from osmoflow.scaling import (
    PhysicalParams,
    density_from_scaled,
    density_to_scaled,
    from_scaled,
    to_scaled,
)
from osmoflow.state import MetricConfig, RadialState, rho_dist


def test_factors_closed_form():
    p = PhysicalParams(theta=2.0)
    assert p.length_factor == pytest.approx(0.5, rel=1e-15)
    assert p.time_factor == pytest.approx(0.25, rel=1e-15)
    assert p.density_factor == pytest.approx(2.0, rel=1e-15)
    q = PhysicalParams(kappa=2.0, sigma=4.0, beta=2.0, theta=1.0, dim=3)
    assert q.length_factor == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert q.scaled_kappa == 0.5


def test_validation():
    with pytest.raises(ValueError):
        PhysicalParams(sigma=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(theta=math.inf)


def test_boundary_law_maps_to_unit_coefficients():
    # d(rho)/d(tau) = a r' / (a^2 sigma) must equal -1/rho + w
    p = PhysicalParams(kappa=1.0, sigma=3.0, beta=0.5, theta=2.0, dim=2)
    r, u = 0.7, 2.0 / (math.pi * 0.49)
    v_phys = -p.sigma / r + p.beta * u
    a, c = p.length_factor, p.time_factor
    rho, w = a * r, u * p.density_factor
    assert a * v_phys / c == pytest.approx(-1 / rho + w, rel=1e-13)


def test_roundtrips():
    p = PhysicalParams(kappa=0.3, sigma=2.0, beta=0.7, theta=1.5, dim=3)
    s = RadialState(1.2, uniform_profile(1.2, 20, 3))
    sc, tau, kap = to_scaled(p, s, 0.4)
    back, t = from_scaled(p, sc, tau)
    assert back.r == pytest.approx(s.r, rel=1e-15) and t == pytest.approx(0.4, rel=1e-15)
    assert np.allclose(back.u.q, s.u.q, rtol=1e-15)
    d = uniform_density(1.2, 3, mass=1.5)
    ds = density_to_scaled(p, d)
    assert ds.mass() == pytest.approx(1.0, rel=1e-13)
    assert np.allclose(density_from_scaled(p, ds).values, d.values, rtol=1e-15)


def _commutation_gap(p, a, c):
    R, H, dt = 1.0, 0.05, 1e-4
    times = np.linspace(0, H, 11)
    u0 = uniform_density(R, 2, mass=p.theta)
    grid = OracleGrid(J=80, dt=dt, quantile_cells=40)
    phys = solve_strong(
        u0, R, H, ZLOGZ, MetricConfig(2, p.kappa), grid, output_times=times, law=BoundaryLaw(p.sigma, p.beta, p.theta)
    )
    cfg = MetricConfig(2, p.scaled_kappa)
    # stretch by a and renormalize to unit mass; with the true factor this is density_to_scaled
    w0 = RadialDensity(a * u0.grid, u0.values, 2)
    w0 = RadialDensity(w0.grid, w0.values / w0.mass(), 2)
    sc = solve_strong(w0, a * R, c * H, ZLOGZ, cfg, OracleGrid(J=80, dt=c * dt, quantile_cells=40), output_times=c * times)
    gaps = []
    for s, s2 in zip(phys.states, sc.states):
        mapped = RadialState(a * s.r, QuantileProfile(a * s.u.q, 2))
        gaps.append(rho_dist(mapped, s2, cfg))
    return max(gaps)


def test_commutation_and_negative_control():
    p = PhysicalParams(kappa=1.0, sigma=3.0, beta=0.5, theta=2.0, dim=2)
    assert _commutation_gap(p, p.length_factor, p.time_factor) < 1e-10
    # perturbed length factor breaks the commutation
    assert _commutation_gap(p, 1.1 * p.length_factor, 1.21 * p.time_factor) > 1e-2
