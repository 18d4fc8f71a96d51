import numpy as np
import pytest
import scipy.sparse as sp

from mafem.assembly import assemble_mass_scalar, det2, sigma_at_quadrature
from mafem.errors import NotConvergedError, ParameterError, ProblemDataError, SingularMatrixError
from mafem.lagrange import State, build_dofmap, interpolate
from mafem.mesh import unit_square_mesh
from mafem.newton import NewtonOptions, initial_guess, newton_solve, solve_linear
from mafem.problems import Problem, builtin_problem


@pytest.fixture(scope="module")
def exp_solution():
    d = build_dofmap(unit_square_mesh(8), 3)
    state, stats = newton_solve(builtin_problem("exp_radial"), d)
    return d, state, stats


def test_initial_guess_exact_for_quadratic(dm_k3_n4):
    st = initial_guess(builtin_problem("quadratic"), dm_k3_n4)
    ref = interpolate(lambda x, y: 0.5 * (x * x + y * y), dm_k3_n4)
    assert np.abs(st.u - ref).max() <= 1e-10
    assert np.array_equal(st.lam, interpolate(lambda x, y: 0.5 * (x * x + y * y), dm_k3_n4, "L"))


def test_initial_guess_is_subharmonic_with_zero_data(dm_k3_n4):
    zero_g = Problem("zero_g", lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x))
    st = initial_guess(zero_g, dm_k3_n4)
    assert st.u.min() < 0
    assert np.abs(st.u[dm_k3_n4.boundary_dofs]).max() == 0


def test_nonpositive_f_is_rejected(dm_k3_n4):
    bad = Problem("bad", lambda x, y: x - 0.5, lambda x, y: np.zeros_like(x))
    with pytest.raises(ProblemDataError, match="positive"):
        newton_solve(bad, dm_k3_n4)


def test_solve_linear_identity_and_spd(dm_k3_n4, rng):
    b = rng.normal(size=5)
    assert np.allclose(solve_linear(sp.identity(5), b), b, rtol=0, atol=0)
    M = assemble_mass_scalar(dm_k3_n4)
    x = rng.normal(size=M.shape[0])
    assert np.allclose(solve_linear(M, M @ x), x, rtol=1e-9)


def test_solve_linear_singular():
    with pytest.raises(SingularMatrixError):
        solve_linear(sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.array([1.0, 0.0]))


def test_options_validation():
    with pytest.raises(ParameterError):
        NewtonOptions(tol_residual=0)
    with pytest.raises(ParameterError):
        NewtonOptions(damping="wolfe")
    with pytest.raises(ParameterError):
        NewtonOptions(max_iters=0)


def test_loose_tolerance_returns_immediately(dm_k3_n4):
    _, stats = newton_solve(builtin_problem("exp_radial"), dm_k3_n4, NewtonOptions(tol_residual=1e3))
    assert stats.iterations == 0 and stats.converged


def test_quadratic_needs_no_iterations(dm_k3_n4):
    st, stats = newton_solve(builtin_problem("quadratic"), dm_k3_n4)
    assert stats.iterations <= 2 and stats.residuals[-1] <= 1e-12
    ref = interpolate(lambda x, y: 0.5 * (x * x + y * y), dm_k3_n4)
    assert np.abs(st.u - ref).max() <= 1e-10


def test_exp_converges_quadratically(exp_solution):
    _, _, stats = exp_solution
    r = np.array(stats.residuals)
    assert stats.converged and stats.iterations <= 15
    assert np.all(np.diff(r) < 0)
    # r_{n+1} <= C r_n^2 until roundoff takes over
    floor = 1e-12
    for a, b in zip(r[:-1], r[1:]):
        if b > floor:
            assert b <= 10 * a * a
    assert all(s == 1.0 for s in stats.steps[1:])


def test_converged_state_is_convex_and_lambda_is_trace(exp_solution):
    d, st, _ = exp_solution
    tab = d.cells_tab(3 * d.degree)
    S = sigma_at_quadrature(st.sigma, d, tab)
    assert np.all(det2(S) > 0) and np.all(S[..., 0, 0] > 0)
    g_h = interpolate(builtin_problem("exp_radial").g, d, "L")
    assert np.array_equal(st.lam, g_h)
    assert np.array_equal(st.u[d.boundary_dofs], g_h)


def test_warm_start_from_solution_is_immediate(exp_solution):
    d, st, _ = exp_solution
    st2, stats = newton_solve(builtin_problem("exp_radial"), d, state0=st)
    assert stats.iterations <= 1
    assert np.abs(st2.u - st.u).max() < 1e-12


def test_iteration_budget_exhaustion_raises(dm_k3_n4):
    with pytest.raises(NotConvergedError) as info:
        newton_solve(builtin_problem("exp_radial"), dm_k3_n4, NewtonOptions(max_iters=1))
    assert len(info.value.history) >= 1


def test_threads_do_not_change_the_solution(dm_k3_n4):
    p = builtin_problem("exp_radial")
    a, _ = newton_solve(p, dm_k3_n4, NewtonOptions(threads=1))
    b, _ = newton_solve(p, dm_k3_n4, NewtonOptions(threads=2))
    assert np.array_equal(a.u, b.u)


def test_state_check(dm_k3_n4):
    st = initial_guess(builtin_problem("exp_radial"), dm_k3_n4)
    assert st.check(dm_k3_n4)
    st.u[3] = np.nan
    assert not State(st.sigma, st.u, st.lam).check(dm_k3_n4)
