import numpy as np
import pytest
from hypothesis import given, strategies as st

from potopt.errors import GridMismatch
from potopt.functionals import (EnergyExp, J1, JInvP, Jp, Lambda1Exp, Lambda1InvP, check_admissible_q,
                                exponential_potential)
from potopt.grid import make_interval, make_radial
from potopt.operators import CLAMP, dirichlet_energy


def _state(grid, rng):
    # strictly away from zero on free nodes so every term is smooth
    x = grid.distance_from_center() / max(grid.radius, 1e-300)
    u = (1.2 - x ** 2) * (1.0 + 0.2 * rng.uniform(-1, 1, grid.n))
    return grid.field(np.where(grid.free, u, 0.0))


def _fd_errors(F, u, rng, directions=20):
    errs = []
    g = F.euclidean_gradient(u)
    for _ in range(directions):
        v = np.where(u.grid.free, rng.standard_normal(u.grid.n), 0.0)
        t = 1e-6 * np.max(np.abs(u.values)) / np.max(np.abs(v))
        fd = (F.value(u.with_values(u.values + t * v)) - F.value(u.with_values(u.values - t * v))) / (2 * t)
        an = float(np.dot(g, v))
        errs.append(abs(fd - an) / max(abs(an), 1e-12 * np.linalg.norm(g) * np.linalg.norm(v)))
    return errs


GRIDS = [make_interval(0.0, 1.0, 41), make_radial(2.0, 1, 41), make_radial(2.0, 3, 41)]


def _functionals(grid):
    f = grid.field(lambda x: 1.0 + np.cos(x))
    return {
        "Jp2": Jp(2.0, f), "Jp3.5": Jp(3.5, f), "Jp1.2": Jp(1.2, f),
        "J1": J1(f),
        "JInvP1": JInvP(p=1.0, f=f), "JInvP2eps": JInvP(p=2.0, epsilon=1e-3, f=f, budget=2.0),
        "Lambda1InvP": Lambda1InvP(p=1.5), "Lambda1Exp": Lambda1Exp(alpha=2.0),
        "EnergyExp": EnergyExp(alpha=0.5, f=f),
    }


@pytest.mark.parametrize("grid", GRIDS, ids=["interval", "half-line", "radial3"])
@pytest.mark.parametrize("name", list(_functionals(GRIDS[0])))
def test_gradient_matches_finite_differences(grid, name, rng):
    F = _functionals(grid)[name]
    u = _state(grid, rng)
    errs = _fd_errors(F, u, rng)
    assert len(errs) == 20
    assert max(errs) <= 1e-5, max(errs)


def test_jp_norm_matches_definition(unit, rng):
    u = unit.field(np.where(unit.free, rng.uniform(-1, 1, unit.n), 0.0))
    J = Jp(3.0)
    assert J.norm(u.values, unit) == pytest.approx(np.dot(unit.weights, np.abs(u.values) ** J.q) ** (1 / J.q))


def test_jp_value_explicit(unit, rng):
    u = unit.field(np.where(unit.free, rng.uniform(-1, 1, unit.n), 0.0))
    f = unit.field(2.0)
    J = Jp(2.0, f)
    q = 4.0
    expect = 0.5 * dirichlet_energy(u) + 0.5 * np.dot(unit.weights, u.values ** q) ** (2 / q) \
        - np.dot(unit.weights, 2.0 * u.values)
    assert J.value(u) == pytest.approx(expect, rel=1e-13)


def test_jp_tends_to_j1(unit, rng):
    u = unit.field(np.where(unit.free, rng.uniform(-1, 1, unit.n), 0.0))
    f = unit.field(1.0)
    gaps = [abs(Jp(p, f).value(u) - J1(f).value(u)) for p in (2.0, 1.1, 1.01, 1.001)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-2


def test_exponential_potential_saturates_constraint(unit, rng):
    u = np.where(unit.free, rng.uniform(0.1, 1, unit.n), 0.0)
    V = exponential_potential(u, unit, 2.0)
    fin = V < CLAMP
    assert np.dot(unit.weights[fin], np.exp(-2.0 * V[fin])) == pytest.approx(1.0, rel=1e-12)


def test_admissible_q():
    assert check_admissible_q(2.0, 3, 4.0)
    assert not check_admissible_q(2.0, 3, 5.0)  # above 2p/(p-1)
    assert not check_admissible_q(2.0, 3, 1.1)  # below 2d/(d+2)
    assert not check_admissible_q(1.0, 2, 1.0)
    assert check_admissible_q(0.5, 1, 1.0)


def test_grid_mismatch_detected(unit):
    other = make_interval(0, 1, 11)
    with pytest.raises(GridMismatch):
        Jp(2.0, other.field(1.0)).value(unit.zeros())


def test_parameter_validation():
    with pytest.raises(ValueError):
        Jp(1.0)
    with pytest.raises(ValueError):
        JInvP(p=-1.0)
    with pytest.raises(ValueError):
        Lambda1Exp(alpha=0.0)


# --- properties

coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=21, max_size=21)
ps = st.sampled_from([1.3, 2.0, 4.0])


@given(coeffs, coeffs, ps, st.floats(0, 1))
def test_jp_convex(a, b, p, t):
    g = make_interval(0, 1, 21)
    f = g.field(1.0)
    J = Jp(p, f)
    u = g.field(np.where(g.free, a, 0.0))
    v = g.field(np.where(g.free, b, 0.0))
    mid = u.with_values(t * u.values + (1 - t) * v.values)
    lhs = J.value(mid)
    rhs = t * J.value(u) + (1 - t) * J.value(v)
    assert lhs <= rhs + 1e-12 * (1 + abs(rhs))


@given(coeffs, ps)
def test_jp_sign_flip(a, p):
    g = make_interval(0, 1, 21)
    u = g.field(np.where(g.free, a, 0.0))
    f = g.field(lambda x: np.sin(3 * x))
    lhs = Jp(p, f).value(u.with_values(-u.values))
    rhs = Jp(p, f.with_values(-f.values)).value(u)
    assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


@given(coeffs, st.floats(0.1, 10))
def test_sphere_functionals_two_homogeneous(a, s):
    g = make_interval(0, 1, 21)
    u = g.field(np.where(g.free, np.abs(a) + 0.1, 0.0))
    F = Lambda1InvP(p=1.0)
    assert F.value(u.with_values(s * u.values)) == pytest.approx(s * s * F.value(u), rel=1e-10)
    # the entropy functional is not homogeneous, but its potential is 0-homogeneous
    V1 = exponential_potential(u.values, g, 1.0)
    V2 = exponential_potential(s * u.values, g, 1.0)
    assert np.allclose(V1[g.free], V2[g.free], rtol=1e-9, atol=1e-9)


def test_j1_tent_point_mass():
    g = make_interval(-1, 1, 2001)
    M = 1 / 3
    tent = g.field(M * (1 - np.abs(g.nodes)))
    f = np.zeros(g.n)
    f[1000] = 1 / g.weights[1000]
    assert J1(g.field(f)).value(tent) == pytest.approx(1.5 * M * M - M, abs=1e-12)


def test_jinvp_sine_closed_form():
    g = make_interval(0, 1, 4001)
    u = g.field(np.sin(np.pi * g.nodes))
    expect = np.pi ** 2 / 4 + 0.5 * (2 / np.pi) ** 2
    assert JInvP(p=1.0).value(u) == pytest.approx(expect, rel=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 5.0])
def test_jp_zero_state(unit, p):
    f = unit.field(lambda x: x)
    J = Jp(p, f)
    assert J.value(unit.zeros()) == 0.0
    g = J.gradient(unit.zeros()).values
    assert np.allclose(g[unit.free], -f.values[unit.free])


@given(coeffs)
def test_sign_flip_without_source(a):
    g = make_interval(0, 1, 21)
    u = g.field(np.where(g.free, a, 0.0))
    m = u.with_values(-u.values)
    for F in (Jp(2.0), J1(), JInvP(p=1.0, epsilon=1e-3), Lambda1InvP(p=2.0), Lambda1Exp(alpha=1.0)):
        assert F.value(m) == pytest.approx(F.value(u), rel=1e-13, abs=1e-13)


@given(coeffs, coeffs)
def test_jinvp_convex_for_p_at_least_one(a, b):
    g = make_interval(0, 1, 21)
    f = g.field(1.0)
    J = JInvP(p=1.5, f=f)
    u = g.field(np.where(g.free, a, 0.0))
    v = g.field(np.where(g.free, b, 0.0))
    mid = u.with_values(0.5 * (u.values + v.values))
    assert J.value(mid) <= 0.5 * (J.value(u) + J.value(v)) + 1e-12 * (1 + abs(J.value(u)) + abs(J.value(v)))
