import math

import numpy as np
import pytest

from conftest import random_state
from osmoflow.diagnostics import (
    boundary_density,
    convexity_probe,
    dissipation_residual,
    energy_lambda_between,
    energy_rate,
    energy_rate_fd,
    evi_residual,
    local_slope,
    sublevel_lambda,
    trajectory_diagnostics,
)
from osmoflow.energy import SQUARE, ZLOGZ, energy_floor, equilibrium_radius
from osmoflow.geometry import Variant, perimeter
from osmoflow.jko import JkoConfig, run_flow
from osmoflow.profile import uniform_profile
from osmoflow.state import MetricConfig, RadialState

ST2 = MetricConfig(2)


@pytest.mark.parametrize("n,R", [(2, 1.0), (3, 0.6), (4, 2.0)])
def test_slope_of_uniform_state(n, R):
    s = RadialState(R, uniform_profile(R, 40, n))
    rep = local_slope(s, ZLOGZ, MetricConfig(n))
    u = 1.0 / (s.dim.omega * R ** n)
    assert rep.interior_term == pytest.approx(0.0, abs=1e-20)
    assert rep.boundary_term == pytest.approx(((n - 1) / R - u) ** 2 * perimeter(R, n), rel=1e-12)
    assert boundary_density(s, ZLOGZ) == pytest.approx(u, rel=1e-12)


def test_slope_unit_disk_value():
    s = RadialState(1.0, uniform_profile(1.0, 200, 2))
    expected = abs(1 - 1 / math.pi) * math.sqrt(2 * math.pi)
    assert local_slope(s, ZLOGZ, ST2).slope == pytest.approx(expected, rel=1e-12)


def test_interior_term_scales_with_kappa():
    s = random_state(np.random.default_rng(0), 15, 2)
    a = local_slope(s, SQUARE, MetricConfig(2, 1.0))
    b = local_slope(s, SQUARE, MetricConfig(2, 3.0))
    assert b.interior_term == pytest.approx(3 * a.interior_term, rel=1e-14)
    assert b.boundary_term == a.boundary_term


@pytest.fixture(scope="module")
def flow():
    s0 = RadialState(1.0, uniform_profile(1.0, 80, 2))
    return run_flow(s0, ZLOGZ, JkoConfig(2e-3, ST2), 0.2)


def test_chain_rule_matches_energy_differences(flow):
    for t in (0.02, 0.1, 0.18):
        assert energy_rate(flow, t) == pytest.approx(energy_rate_fd(flow, t), rel=1e-3)


def test_dissipation_residual_small(flow):
    res, rel = dissipation_residual(flow, 0.1)
    assert rel < 1e-3
    with pytest.raises(ValueError):
        dissipation_residual(flow, 0.0)


def test_series_shapes(flow):
    d = trajectory_diagnostics(flow)
    assert d.slope.shape == (len(flow),)
    assert np.isnan(d.energy_rate[0]) and np.isnan(d.energy_rate[-1])
    assert np.all(np.isfinite(d.energy_rate[1:-1]))


def test_evi_with_certified_modulus_and_control():
    cfg = MetricConfig(3)
    s0 = RadialState(1.0, uniform_profile(1.0, 40, 3))
    traj = run_flow(s0, ZLOGZ, JkoConfig(1e-3, cfg), 0.05)
    rng = np.random.default_rng(4)
    probes = [random_state(rng, 40, 3, (0.5, 1.5)) for _ in range(10)]
    worst = max(evi_residual(traj, t, p, 0.0) for t in traj.times[1:-1:7] for p in probes)
    assert worst <= 1e-3
    control = max(evi_residual(traj, t, p, 10.0) for t in traj.times[1:-1:7] for p in probes)
    assert control > 0


def test_convexity_probe_two_dimensions():
    rng = np.random.default_rng(9)
    for _ in range(30):
        a, b, w = (random_state(rng, 10, 2) for _ in range(3))
        rep = convexity_probe(a, b, w, ZLOGZ, ST2)
        assert rep.passed(1e-8)
        assert rep.energy_lambda <= 0
        assert rep.empirical_lambda >= rep.energy_lambda - 1e-8


def test_modulus_helpers():
    a = RadialState(0.5, uniform_profile(0.5, 4, 3))
    b = RadialState(1.5, uniform_profile(1.5, 4, 3))
    assert energy_lambda_between(a, b, MetricConfig(3)) == pytest.approx(0.0, abs=1e-14)
    r = equilibrium_radius(ZLOGZ, 2)
    lam = sublevel_lambda(energy_floor(r, ZLOGZ, 2) + 1, ZLOGZ, ST2)
    assert lam < 0
    assert sublevel_lambda(energy_floor(r, ZLOGZ, 2) + 1, ZLOGZ, MetricConfig(2, 1.0, Variant.PERMEABILITY)) < 0
