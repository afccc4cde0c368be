import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from potopt.errors import GridMismatch, InvalidDomain, NegativePotential
from potopt.grid import check_same_grid, inner, integrate, make_interval, make_radial
from potopt.operators import (CLAMP, apply_operator, dense_matrix, dirichlet_energy, eigenpairs, energy_of_potential,
                              lambda1, laplacian, quadratic_energy, solve_linear, stiffness_bands, torsion)


# --- grid

@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_radial_weights_sum_to_volume(d):
    g = make_radial(2.5, d, 101)
    assert np.all(g.weights > 0)
    assert math.isclose(g.weights.sum(), g.volume, rel_tol=1e-13)


def test_interval_trapezoid_weights():
    g = make_interval(-1.0, 3.0, 9)
    assert math.isclose(g.weights.sum(), 4.0)
    assert integrate(g.field(lambda x: x)) == pytest.approx(4.0, abs=1e-14)


def test_refined_grid_keeps_nodes():
    g = make_interval(0.0, 1.0, 11)
    assert np.allclose(g.refined().nodes[::2], g.nodes)
    assert g.refined().h == pytest.approx(g.h / 2)


@pytest.mark.parametrize("args", [(1.0, 0.0, 11), (0.0, 1.0, 2)])
def test_bad_interval_rejected(args):
    with pytest.raises(InvalidDomain):
        make_interval(*args)


def test_bad_radial_rejected():
    with pytest.raises(InvalidDomain):
        make_radial(-1.0, 2, 11)
    with pytest.raises(InvalidDomain):
        make_radial(1.0, 0, 11)


def test_grid_mismatch():
    a, b = make_interval(0, 1, 11), make_interval(0, 1, 21)
    with pytest.raises(GridMismatch):
        check_same_grid(a.zeros(), b.zeros())


# --- operators: oracles

def test_stiffness_is_symmetric_positive_definite(small_grid):
    A, W = dense_matrix(small_grid.zeros())
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0
    assert np.all(np.diag(W) > 0)


def test_eigenpairs_match_dense_oracle(small_grid, rng):
    V = small_grid.field(rng.uniform(0, 5, small_grid.n))
    A, W = dense_matrix(V)
    oracle = scipy.linalg.eigh(A, W, eigvals_only=True)
    k = min(4, oracle.size)
    spec = eigenpairs(V, k)
    assert np.allclose(spec.eigenvalues, oracle[:k], rtol=1e-8, atol=0)
    for j in range(k):
        assert inner(spec.eigenfunctions[j], spec.eigenfunctions[j]) == pytest.approx(1.0, rel=1e-10)


def test_solve_linear_exact_for_quadratic():
    # three-point differences are exact on x(1 - x)/2
    g = make_interval(0.0, 1.0, 17)
    u = solve_linear(g.zeros(), g.field(1.0))
    assert np.allclose(u.values, g.nodes * (1 - g.nodes) / 2, atol=1e-14)
    assert energy_of_potential(g.zeros(), g.field(1.0)) == pytest.approx(-1 / 24, rel=1e-2)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_radial_torsion_second_order(d):
    # torsion of the unit ball: (1 - r^2) / (2d)
    errs = []
    for n in (41, 81):
        g = make_radial(1.0, d, n)
        w = torsion(g.zeros())
        errs.append(np.max(np.abs(w.values - (1 - g.nodes ** 2) / (2 * d))))
    assert errs[1] < 1e-10 or errs[0] / errs[1] > 3.5


def test_laplacian_consistent_with_stiffness(rng):
    g = make_radial(2.0, 3, 31)
    u = g.field(np.where(g.free, rng.standard_normal(g.n), 0.0))
    assert -inner(laplacian(u), u) == pytest.approx(dirichlet_energy(u), rel=1e-12)


def test_quadratic_energy_minimum_equals_energy(rng):
    g = make_interval(0, 1, 51)
    V = g.field(rng.uniform(0, 10, g.n))
    f = g.field(rng.uniform(-1, 1, g.n))
    u = solve_linear(V, f)
    E = energy_of_potential(V, f)
    assert quadratic_energy(V, f, u) == pytest.approx(E, rel=1e-12)
    bump = g.field(np.where(g.free, 1e-3 * rng.standard_normal(g.n), 0.0))
    assert quadratic_energy(V, f, u.with_values(u.values + bump.values)) > E


def test_residual_of_solve(rng):
    g = make_radial(3.0, 2, 61)
    V = g.field(rng.uniform(0, 2, g.n))
    f = g.field(rng.uniform(0, 1, g.n))
    r = apply_operator(V, solve_linear(V, f)).values - f.values
    assert np.max(np.abs(r[g.free])) < 1e-10


def test_negative_potential_rejected():
    g = make_interval(0, 1, 11)
    with pytest.raises(NegativePotential):
        solve_linear(g.field(-1.0), g.field(1.0))


def test_clamp_acts_as_wall():
    g = make_interval(0, 1, 201)
    V = np.zeros(g.n)
    V[100] = CLAMP
    u = solve_linear(g.field(V), g.field(1.0))
    assert abs(u.values[100]) < 1e-10
    # two independent cells of length 1/2
    assert energy_of_potential(g.field(V), g.field(1.0)) == pytest.approx(-2 * (0.5 ** 3) / 24, rel=1e-4)


def test_dirichlet_eigenvalues_of_unit_interval():
    g = make_interval(0, 1, 2001)
    lam = eigenpairs(g.zeros(), 2).eigenvalues
    assert lam[0] == pytest.approx(math.pi ** 2, rel=1e-3)
    assert lam[1] == pytest.approx(4 * math.pi ** 2, rel=2e-3)


def test_ball_eigenvalue_d3():
    # first Dirichlet eigenvalue of the unit ball in R^3 is pi^2
    assert lambda1(make_radial(1.0, 3, 801).zeros()) == pytest.approx(math.pi ** 2, rel=1e-4)


def test_stiffness_bands_row_sums_zero_inside():
    g = make_radial(1.0, 2, 21)
    diag, sup = stiffness_bands(g)
    rows = diag.copy()
    rows[:-1] += sup
    rows[1:] += sup
    assert np.allclose(rows, 0.0)


# --- properties

vals = st.lists(st.floats(0, 50, allow_nan=False), min_size=15, max_size=15)
signed = st.lists(st.floats(-5, 5, allow_nan=False), min_size=15, max_size=15)


@given(vals, vals)
def test_maximum_principle(fv, Vv):
    g = make_interval(0, 1, 15)
    u = solve_linear(g.field(Vv), g.field(fv))
    assert np.all(u.values >= -1e-12 * max(1.0, max(fv)))


@given(vals, vals, vals)
def test_energy_and_lambda1_monotone_in_V(fv, Vv, dV):
    g = make_radial(1.0, 2, 15)
    V1 = g.field(Vv)
    V2 = g.field(np.add(Vv, dV))
    f = g.field(fv)
    tol = 1e-12 * (1 + abs(energy_of_potential(V1, f)))
    assert energy_of_potential(V2, f) >= energy_of_potential(V1, f) - tol
    assert lambda1(V2) >= lambda1(V1) * (1 - 1e-10)


@given(signed, vals)
def test_energy_scales_quadratically_in_f(fv, Vv):
    g = make_interval(0, 1, 15)
    V, f = g.field(Vv), g.field(fv)
    E = energy_of_potential(V, f)
    assert energy_of_potential(V, g.field(np.multiply(fv, 3.0))) == pytest.approx(9 * E, rel=1e-10, abs=1e-14)


def test_constant_potential_shifts_spectrum():
    g = make_interval(0, 1, 201)
    base = eigenpairs(g.zeros(), 3).eigenvalues
    shifted = eigenpairs(g.field(7.5), 3).eigenvalues
    assert np.allclose(shifted, base + 7.5, rtol=1e-12)


def test_potential_lowers_solution():
    g = make_interval(0, 1, 201)
    free_sol = g.nodes * (1 - g.nodes) / 2
    u = solve_linear(g.field(1.0), g.field(1.0)).values
    assert np.all(u[g.free] < free_sol[g.free])
    walled = solve_linear(g.field(CLAMP), g.field(1.0))
    assert walled.sup < 1e-11


@given(signed, signed, vals)
def test_operator_self_adjoint(a, b, Vv):
    g = make_radial(1.0, 3, 15)
    u = g.field(np.where(g.free, a, 0.0))
    v = g.field(np.where(g.free, b, 0.0))
    V = g.field(Vv)
    lhs = inner(apply_operator(V, u), v)
    rhs = inner(u, apply_operator(V, v))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
