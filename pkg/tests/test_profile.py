import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from osmoflow.profile import (
    AtomError,
    MassError,
    QuantileProfile,
    RadialDensity,
    cell_masses,
    density_from_quantiles,
    displacement_geodesic,
    mass_levels,
    optimal_map,
    quantiles_from_density,
    quantiles_from_shells,
    read_density_csv,
    read_profile_csv,
    resample,
    uniform_density,
    uniform_profile,
    wasserstein2,
    write_density_csv,
    write_profile_csv,
)


def test_mass_levels_and_cells():
    assert np.allclose(mass_levels(4), [0.125, 0.375, 0.625, 0.875])
    m = cell_masses(4)
    assert m.sum() == pytest.approx(1.0, abs=1e-15)
    assert m[0] == m[-1] == 0.125


def test_profile_validation():
    with pytest.raises(ValueError):
        QuantileProfile([0.2, 0.1], 2)
    with pytest.raises(ValueError):
        QuantileProfile([-0.1, 0.1], 2)
    with pytest.raises(ValueError):
        QuantileProfile([0.1, np.nan], 2)
    u = QuantileProfile([0.1, 0.2], 2)
    with pytest.raises(ValueError):
        u.q[0] = 5.0


def test_uniform_profile_closed_form():
    u = uniform_profile(2.0, 4, 3)
    assert np.allclose(u.q, 2.0 * mass_levels(4) ** (1 / 3), rtol=1e-15)
    assert u.outer_edge() == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_uniform_density_roundtrip(n):
    d = uniform_density(1.5, n)
    assert d.mass() == pytest.approx(1.0, rel=1e-14)
    u = quantiles_from_density(d, 50)
    assert np.allclose(u.q, uniform_profile(1.5, 50, n).q, rtol=1e-13)
    back = density_from_quantiles(u)
    assert np.allclose(back.values, d.values[0], rtol=1e-10)


def test_mass_within_matches_quadrature():
    from scipy.integrate import quad

    grid = np.linspace(0, 1, 7)
    vals = 1.0 + grid ** 2
    d = RadialDensity(grid, vals, 2)
    # density is linear in enclosed volume v = pi rho^2 between nodes
    V = math.pi * grid ** 2

    def dens(v):
        return np.interp(v, V, vals)

    for R in (0.1, 0.33, 0.9, 1.0):
        assert d.mass_within(R) == pytest.approx(quad(dens, 0, math.pi * R * R, points=V[1:-1])[0], rel=1e-12)


def test_wasserstein_uniform_balls_exact():
    # W2(B1, B2) in n=2 is sqrt(1/2); the midpoint grid reproduces it exactly
    for M in (1, 10, 1000):
        assert wasserstein2(uniform_profile(1, M, 2), uniform_profile(2, M, 2)) == pytest.approx(math.sqrt(0.5), abs=1e-15)


@given(st.integers(1, 30), st.integers(0, 2 ** 31))
@settings(max_examples=30)
def test_wasserstein_matches_assignment(M, seed):
    rng = np.random.default_rng(seed)
    a = np.sort(rng.uniform(0.01, 2, M))
    b = np.sort(rng.uniform(0.01, 2, M))
    pa, pb = rng.permutation(a), rng.permutation(b)
    cost = (pa[:, None] - pb[None, :]) ** 2
    i, j = linear_sum_assignment(cost)
    assert wasserstein2(QuantileProfile(a, 2), QuantileProfile(b, 2)) == pytest.approx(math.sqrt(cost[i, j].mean()), abs=1e-12)


def test_optimal_map_and_geodesic():
    u = uniform_profile(1, 8, 2)
    w = uniform_profile(3, 8, 2)
    assert np.array_equal(optimal_map(u, w), w.q)
    g = displacement_geodesic(u, w, 0.25)
    assert wasserstein2(u, g) == pytest.approx(0.25 * wasserstein2(u, w), rel=1e-14)
    with pytest.raises(ValueError):
        displacement_geodesic(u, w, 1.2)
    with pytest.raises(ValueError):
        wasserstein2(u, uniform_profile(1, 9, 2))
    assert wasserstein2(u, uniform_profile(1, 16, 2), resample_to_first=True) < 0.05


def test_resample_identity_and_size():
    u = uniform_profile(1, 20, 2)
    assert resample(u, 20) is u
    assert resample(u, 7).M == 7


def test_atom_and_mass_errors():
    grid = np.array([0.0, 1.0])
    with pytest.raises(MassError):
        quantiles_from_density(RadialDensity(grid, [2.0, 2.0], 2), 10)
    with pytest.raises(AtomError):
        density_from_quantiles(QuantileProfile([0.5, 0.5, 0.6], 2))
    # mass confined to an inner shell is not an atom; quantiles stay inside it
    u = quantiles_from_shells([0.0, 0.5, 1.0], [1 / (math.pi * 0.25), 0.0], 10, 2)
    assert u.q[-1] <= 0.5


def test_quantiles_from_shells_uniform():
    edges = np.linspace(0, 1, 11)
    vals = np.full(10, 1 / math.pi)
    u = quantiles_from_shells(edges, vals, 40, 2)
    assert np.allclose(u.q, uniform_profile(1, 40, 2).q, rtol=1e-12)


def test_csv_roundtrip(tmp_path):
    u = QuantileProfile(np.sort(np.random.default_rng(1).uniform(0, 1, 13)), 3)
    write_profile_csv(u, tmp_path / "p.csv")
    assert np.array_equal(read_profile_csv(tmp_path / "p.csv", 3).q, u.q)
    d = uniform_density(0.7, 2)
    write_density_csv(d, tmp_path / "d.csv")
    back = read_density_csv(tmp_path / "d.csv", 2)
    assert np.array_equal(back.grid, d.grid) and np.array_equal(back.values, d.values)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_profile_csv(tmp_path / "bad.csv", 2)
