import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from osmoflow.energy import (
    SQUARE,
    ZLOGZ,
    EntropyIntegrand,
    discrete_energy,
    energy_floor,
    equilibrium_radius,
    get_integrand,
    internal_energy,
    state_shells,
    sublevel_radius_range,
    total_energy,
    validate_integrand,
)
from osmoflow.geometry import Dimension
from osmoflow.profile import QuantileProfile, uniform_profile
from osmoflow.state import MetricConfig, RadialState, coupled_geodesic


def test_uniform_closed_form():
    R = 0.8
    s = RadialState(R, uniform_profile(R, 64, 2))
    e = total_energy(s, ZLOGZ)
    assert e.perimeter == pytest.approx(2 * math.pi * R, rel=1e-15)
    assert e.internal == pytest.approx(-math.log(math.pi * R * R), rel=1e-13)
    assert e.total == pytest.approx(energy_floor(R, ZLOGZ, 2), rel=1e-13)


def test_equilibrium_closed_forms():
    assert equilibrium_radius(ZLOGZ, 2) == pytest.approx(1 / math.pi, rel=1e-14)
    # n=3: 2/r = 3/(4 pi r^3)
    assert equilibrium_radius(ZLOGZ, 3) == pytest.approx(math.sqrt(3 / (8 * math.pi)), rel=1e-14)
    # square, n=2: 1/r = 1/(pi^2 r^4)
    assert equilibrium_radius(SQUARE, 2) == pytest.approx(math.pi ** (-2 / 3), rel=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_jensen_against_perturbations(n):
    rng = np.random.default_rng(n)
    R = 1.1
    floor = energy_floor(R, ZLOGZ, n)
    for _ in range(20):
        q = uniform_profile(R, 30, n).q * (1 + 0.05 * rng.uniform(-1, 1, 30))
        q = np.sort(np.minimum(q, 0.999 * R))
        s = RadialState(R, QuantileProfile(q, n))
        assert total_energy(s, ZLOGZ).total >= floor - 1e-12


def test_integrand_validation():
    for f in (ZLOGZ, SQUARE):
        rep = validate_integrand(f, 2)
        assert rep.ok and rep.mccann
    neg_sqrt = EntropyIntegrand(
        "neg_sqrt",
        f=lambda z: -np.sqrt(np.asarray(z, dtype=float)),
        f_prime=lambda z: -0.5 / np.sqrt(z),
        hat=lambda z: 0.5 * np.sqrt(np.asarray(z, dtype=float)),
    )
    # convex but sublinear: not coercive, no superlinear growth
    rep = validate_integrand(neg_sqrt, 2)
    assert rep.convex and not rep.superlinear and not rep.coercive and not rep.ok
    wavy = EntropyIntegrand(
        "wavy",
        f=lambda z: np.asarray(z, float) ** 2 + np.sin(5 * np.asarray(z, float)),
        f_prime=lambda z: 2 * z + 5 * np.cos(5 * z),
        hat=lambda z: z * (2 * z + 5 * np.cos(5 * z)) - z ** 2 - np.sin(5 * z),
    )
    assert not validate_integrand(wavy, 2).convex
    linear = EntropyIntegrand("linear", f=lambda z: np.asarray(z, float), f_prime=lambda z: 1.0 + 0 * z, hat=lambda z: 0 * z)
    assert not validate_integrand(linear, 2).superlinear
    with pytest.raises(ValueError):
        get_integrand("cubic")


@given(st.integers(0, 2 ** 31), st.integers(2, 4), st.sampled_from([ZLOGZ, SQUARE]))
@settings(max_examples=30)
def test_gradient_and_hessian_match_differences(seed, n, f):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 6, n)
    dim = Dimension(n)
    x = np.append(s.u.q, s.r)
    de = discrete_energy(s.u.q, s.r, f, dim)
    H = np.diag(de.diag) + np.diag(de.off, 1) + np.diag(de.off, -1)
    for i in range(x.size):
        h = 1e-6 * x[i]
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        ep = discrete_energy(xp[:-1], xp[-1], f, dim)
        em = discrete_energy(xm[:-1], xm[-1], f, dim)
        assert (ep.value - em.value) / (2 * h) == pytest.approx(de.grad[i], rel=1e-6, abs=1e-6)
        col = (ep.grad - em.grad) / (2 * h)
        assert np.allclose(col, H[:, i], rtol=1e-5, atol=1e-5 * np.abs(H).max())


def test_degenerate_shells():
    dim = Dimension(2)
    assert discrete_energy(np.array([0.2, 0.2]), 1.0, ZLOGZ, dim) is None
    assert discrete_energy(np.array([0.2, 0.5]), 0.5, ZLOGZ, dim) is None
    assert internal_energy(QuantileProfile([0.2, 0.5], 2), ZLOGZ, 0.5) == math.inf


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30)
def test_internal_energy_displacement_convex(seed):
    rng = np.random.default_rng(seed)
    cfg = MetricConfig(2)
    a, b = random_state(rng, 10, 2), random_state(rng, 10, 2)
    ts = np.linspace(0, 1, 21)
    e = np.array([total_energy(coupled_geodesic(a, b, t, cfg), ZLOGZ).internal for t in ts])
    assert np.all(e[1:-1] <= 0.5 * (e[:-2] + e[2:]) + 1e-10 * (1 + np.abs(e[1:-1])))


def test_sublevel_range():
    r_star = equilibrium_radius(ZLOGZ, 2)
    level = energy_floor(r_star, ZLOGZ, 2) + 1.0
    lo, hi = sublevel_radius_range(level, ZLOGZ, 2)
    assert lo < r_star < hi
    assert energy_floor(lo, ZLOGZ, 2) == pytest.approx(level, rel=1e-10)
    assert energy_floor(hi, ZLOGZ, 2) == pytest.approx(level, rel=1e-10)
    with pytest.raises(ValueError):
        sublevel_radius_range(level - 2.0, ZLOGZ, 2)


def test_state_shells_mass_and_trace():
    s = random_state(np.random.default_rng(5), 12, 3)
    sh = state_shells(s)
    V = np.diff(s.dim.omega * sh.edges ** 3)
    assert np.sum(sh.values * V) == pytest.approx(1.0, rel=1e-14)
    assert sh.trace == sh.values[-1]
