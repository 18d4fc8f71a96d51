import numpy as np
import pytest
import sympy as sy

from mafem.errors import CapabilityError
from mafem.lagrange import State, build_dofmap, interpolate
from mafem.mesh import unit_square_mesh
from mafem.newton import newton_solve
from mafem.problems import BUILTINS, Problem, builtin_problem, compute_errors

x, y = sy.symbols("x y", real=True)
SYMBOLIC = {
    "quadratic": (x ** 2 + y ** 2) / 2,
    "product_quadratic": (x ** 2 + y ** 2) / 2 + x * y / 2,
    "exp_radial": sy.exp((x ** 2 + y ** 2) / 2),
    "ball": -sy.sqrt(4 - x ** 2 - y ** 2),
}


def lam(expr):
    return sy.lambdify((x, y), expr, "numpy")


def boundary_points(rng, n):
    t = rng.uniform(size=n)
    side = rng.integers(0, 4, size=n)
    px = np.select([side == 0, side == 1, side == 2], [t, 1.0, t], 0.0)
    py = np.select([side == 0, side == 1, side == 2], [0.0, t, 1.0], t)
    return px, py


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_symbolic_consistency(name, rng):
    p = builtin_problem(name)
    u = SYMBOLIC[name]
    hess = sy.hessian(u, (x, y))
    X, Y = rng.uniform(size=(2, 100))
    f_sym = np.broadcast_to(lam(sy.simplify(hess.det()))(X, Y), X.shape)
    assert np.allclose(p.f(X, Y), f_sym, rtol=1e-10, atol=0)
    assert np.allclose(p.u(X, Y), lam(u)(X, Y), rtol=1e-13, atol=1e-15)
    g_sym = [np.broadcast_to(lam(u.diff(v))(X, Y), X.shape) for v in (x, y)]
    assert np.allclose(p.grad_u(X, Y), np.stack(g_sym, -1), rtol=1e-12, atol=1e-14)
    h_sym = [[np.broadcast_to(lam(hess[i, j])(X, Y), X.shape) for j in range(2)] for i in range(2)]
    assert np.allclose(p.hess_u(X, Y), np.moveaxis(np.array(h_sym), (0, 1), (-2, -1)),
                       rtol=1e-12, atol=1e-14)
    bx, by = boundary_points(rng, 20)
    assert np.allclose(p.g(bx, by), lam(u)(bx, by), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_data_positive_and_solution_convex(name, rng):
    p = builtin_problem(name)
    X, Y = rng.uniform(size=(2, 100))
    assert np.all(p.f(X, Y) > 0)
    assert p.convex
    assert np.all(np.linalg.eigvalsh(p.hess_u(X, Y)) > 0)


def test_unknown_problem_lists_builtins():
    with pytest.raises(KeyError, match="exp_radial"):
        builtin_problem("nope")


def exact_state(p, d):
    u = interpolate(p.u, d)
    comps = [interpolate(lambda a, b, i=i, j=j: p.hess_u(a, b)[..., i, j], d)
             for i, j in ((0, 0), (0, 1), (1, 0), (1, 1))]
    return State(np.concatenate(comps), u, interpolate(p.g, d, "L"))


def test_exact_interpolant_of_quadratic_has_no_error(dm_k3_n4):
    p = builtin_problem("quadratic")
    err = compute_errors(exact_state(p, dm_k3_n4), dm_k3_n4, p)
    for v in vars(err).values():
        assert 0 <= v <= 1e-10


def test_errors_are_homogeneous(dm_k3_n4, rng):
    zero = Problem("zero", lambda a, b: np.ones_like(a), lambda a, b: np.zeros_like(a),
                   u=lambda a, b: np.zeros_like(a),
                   grad_u=lambda a, b: np.zeros(np.shape(a) + (2,)),
                   hess_u=lambda a, b: np.zeros(np.shape(a) + (2, 2)))
    d = dm_k3_n4
    st = State(rng.normal(size=d.dim_sigma), rng.normal(size=d.num_dofs),
               rng.normal(size=d.dim_lambda))
    e1 = compute_errors(st, d, zero)
    e2 = compute_errors(State(2 * st.sigma, 2 * st.u, 2 * st.lam), d, zero)
    for a, b in zip(vars(e1).values(), vars(e2).values()):
        assert b == pytest.approx(2 * a, rel=1e-14)
    assert e1.err_u_L2 <= e1.err_u_H1 <= e1.err_u_H2broken
    assert e1.err_sigma_L2 <= e1.err_sigma_H1


def test_h1_error_ratio_for_exp():
    p = builtin_problem("exp_radial")
    errs = []
    for n in (4, 8):
        d = build_dofmap(unit_square_mesh(n), 3)
        st, _ = newton_solve(p, d)
        errs.append(compute_errors(st, d, p).err_u_H1)
    assert 6 <= errs[0] / errs[1] <= 10


def test_missing_exact_solution(dm_k3_n4):
    p = Problem("data_only", lambda a, b: np.ones_like(a), lambda a, b: np.zeros_like(a))
    assert not p.has_exact
    with pytest.raises(CapabilityError):
        compute_errors(exact_state(builtin_problem("quadratic"), dm_k3_n4), dm_k3_n4, p)
