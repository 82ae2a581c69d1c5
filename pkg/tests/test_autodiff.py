"""Differentiation tests: analytic oracles, finite differences, cross-mode."""

import dataclasses

import numpy as np
import pytest

from diffsolve.operators import (
    GridSpec,
    LinearProblem,
    assemble_burgers_oseen,
    assemble_heat_btcs,
    assemble_navier_stokes_coupled,
    assemble_poisson_1d,
    materialize,
    negate_problem,
)
from diffsolve.solvers import SolveConfig, jacobi_solve
from diffsolve.autodiff import (
    SolveVJP,
    implicit_pullback,
    solve_with_vjp,
    unrolled_pullback,
)


def f32(x):
    return np.asarray(x, dtype=np.float32)


def heat_problem(n=16, nu=0.05, dt=1.0, seed=0):
    g = GridSpec(1, n, "dirichlet")
    rng = np.random.default_rng(seed)
    return assemble_heat_btcs(g, nu, dt, f32(rng.standard_normal(n)))


def shifted_identity_problem(g):
    """2x2 system A(g) = [[2+g, 1], [1, 2+g]] with constant rhs."""
    gval = np.float32(g)
    a = np.array([[2 + gval, 1], [1, 2 + gval]], dtype=np.float32)
    return LinearProblem(
        size=2,
        apply=lambda v: v @ a.T,
        apply_transpose=lambda v: v @ a,
        rhs=f32([3.0, -1.0]),
        diagonal=np.diag(a).copy(),
        vjp_wrt_g_through_matrix=lambda u, lam: np.dot(lam, u),
        vjp_wrt_g_through_diagonal=lambda dbar: dbar.sum(),
    )


# ---------------------------------------------------------------------------
# trivial contracts


@pytest.mark.parametrize("mode", ["implicit", "unrolled"])
def test_zero_cotangent_zero_gradient(mode):
    p = heat_problem()
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=10), mode=mode)
    gbar = vjp.pullback(np.zeros_like(p.rhs))
    assert np.all(gbar == 0)


@pytest.mark.parametrize("mode", ["implicit", "unrolled"])
def test_zero_iterations_zero_gradient(mode):
    p = heat_problem()
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=0), mode=mode)
    gbar = vjp.pullback(f32(np.random.default_rng(0).standard_normal(16)))
    assert np.all(gbar == 0)


def test_gmres_rejects_unrolled():
    p = heat_problem()
    with pytest.raises(ValueError):
        solve_with_vjp(p, SolveConfig(max_iterations=5), mode="unrolled", solver="gmres")


def test_unrolled_requires_iterates():
    p = heat_problem()
    with pytest.raises(ValueError):
        unrolled_pullback(p, None, np.zeros(16, dtype=np.float32))


def test_primal_matches_plain_solver():
    p = heat_problem()
    cfg = SolveConfig(max_iterations=12)
    vjp = solve_with_vjp(p, cfg, mode="implicit")
    plain = jacobi_solve(p, cfg)
    np.testing.assert_array_equal(vjp.primal.solution, plain.solution)


def test_single_jacobi_step_gradient_is_scaled_rhs_vjp():
    g = GridSpec(1, 10, "dirichlet")
    p = assemble_poisson_1d(g, f32([1.0, -0.5]))
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=1), mode="unrolled")
    rng = np.random.default_rng(1)
    ubar = f32(rng.standard_normal(10))
    got = vjp.pullback(ubar)
    want = p.vjp_wrt_g_through_rhs(ubar / p.diagonal)
    np.testing.assert_allclose(got, want, rtol=1e-6)


@pytest.mark.parametrize("mode", ["implicit", "unrolled"])
def test_pullback_linearity(mode):
    p = heat_problem()
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=8), mode=mode)
    rng = np.random.default_rng(2)
    v = f32(rng.standard_normal(16))
    w = f32(rng.standard_normal(16))
    a = np.float32(1.3)
    left = vjp.pullback(a * v + w)
    right = a * vjp.pullback(v) + vjp.pullback(w)
    np.testing.assert_allclose(left, right, rtol=1e-5, atol=1e-6 * np.abs(right).max())


def test_unrolled_replay_matches_aux_tape():
    g = GridSpec(1, 12, "periodic")
    rng = np.random.default_rng(3)
    w = f32(rng.standard_normal(12))
    p = assemble_burgers_oseen(g, 0.001, 0.05, w)
    cfg = SolveConfig(max_iterations=6, store_iterates=True)
    rep = jacobi_solve(p, cfg)
    ubar = f32(rng.standard_normal(12))
    with_aux = unrolled_pullback(p, rep.iterates, ubar, "jacobi", aux=rep.aux)
    replayed = unrolled_pullback(p, rep.iterates, ubar, "jacobi", aux=None)
    np.testing.assert_array_equal(with_aux, replayed)


def test_sd_unrolled_replay_matches_aux_tape():
    p = negate_problem(assemble_poisson_1d(GridSpec(1, 8, "dirichlet"), f32([1.0, 2.0])))
    cfg = SolveConfig(max_iterations=7, store_iterates=True)
    from diffsolve.solvers import steepest_descent_solve

    rep = steepest_descent_solve(p, cfg)
    ubar = f32(np.random.default_rng(4).standard_normal(8))
    with_aux = unrolled_pullback(p, rep.iterates, ubar, "steepest_descent", aux=rep.aux)
    replayed = unrolled_pullback(p, rep.iterates, ubar, "steepest_descent", aux=None)
    np.testing.assert_array_equal(with_aux, replayed)


# ---------------------------------------------------------------------------
# analytic oracles


def test_implicit_heat_matches_dense_adjoint():
    p = heat_problem(n=12)
    cfg = SolveConfig(max_iterations=500)
    vjp = solve_with_vjp(p, cfg, mode="implicit")
    assert vjp.primal.converged
    rng = np.random.default_rng(5)
    ubar = f32(rng.standard_normal(12))
    got = vjp.pullback(ubar)
    a = materialize(p).astype(np.float64)
    lam = np.linalg.solve(a.T, ubar.astype(np.float64))
    assert np.linalg.norm(got - lam) / np.linalg.norm(lam) <= 1e-4


def test_implicit_poisson_routes_through_rhs_vjp():
    g = GridSpec(1, 10, "dirichlet")
    p = assemble_poisson_1d(g, f32([1.0, 2.0, -0.7]))
    cfg = SolveConfig(max_iterations=5000)
    vjp = solve_with_vjp(p, cfg, mode="implicit")
    assert vjp.primal.converged
    rng = np.random.default_rng(6)
    ubar = f32(rng.standard_normal(10))
    got = vjp.pullback(ubar)
    a = materialize(p).astype(np.float64)
    lam = np.linalg.solve(a.T, ubar.astype(np.float64))
    want = p.vjp_wrt_g_through_rhs(f32(lam))
    np.testing.assert_allclose(got, want, rtol=1e-3, atol=1e-8)


def test_implicit_dense_2x2_analytic_gradient():
    # L(g) = 0.5 ||A(g)^{-1} b - y||^2 at full convergence
    y = np.array([0.4, -0.2])
    gval = 0.3

    def loss64(g):
        a = np.array([[2 + g, 1], [1, 2 + g]])
        u = np.linalg.solve(a, np.array([3.0, -1.0]))
        return 0.5 * np.sum((u - y) ** 2)

    p = shifted_identity_problem(gval)
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=200), mode="implicit")
    assert vjp.primal.converged
    ubar = vjp.primal.solution - f32(y)
    got = float(vjp.pullback(ubar))
    h = 1e-6
    want = (loss64(gval + h) - loss64(gval - h)) / (2 * h)
    assert abs(got - want) <= 1e-3 * abs(want)


# ---------------------------------------------------------------------------
# finite differences against the truncated map


def test_unrolled_jacobi_2x2_matches_float64_shadow():
    # the shadow replays the same K=5 truncated iteration in float64
    y = np.array([0.2, 0.4])
    steps = 5

    def shadow_loss(g):
        a = np.array([[2 + g, 1], [1, 2 + g]])
        b = np.array([3.0, -1.0])
        d = np.diag(a)
        u = np.zeros(2)
        for _ in range(steps):
            u = (b - (a @ u - d * u)) / d
        return 0.5 * np.sum((u - y) ** 2)

    gval = 0.3
    p = shifted_identity_problem(gval)
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=steps), mode="unrolled")
    assert not vjp.primal.converged
    ubar = vjp.primal.solution - f32(y)
    got = float(vjp.pullback(ubar))
    h = 1e-3
    want = (shadow_loss(gval + h) - shadow_loss(gval - h)) / (2 * h)
    assert abs(got - want) <= 1e-3 * abs(want)


def fd_gradient(loss, x, h):
    """Central differences coordinate by coordinate, in the map's own precision."""
    x = np.asarray(x)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        grad.reshape(-1)[i] = (loss(x + e.reshape(x.shape)) - loss(x - e.reshape(x.shape))) / (2 * h)
    return grad


@pytest.mark.parametrize("steps", [1, 3, 8])
def test_unrolled_jacobi_burgers_wind_gradient(steps):
    g = GridSpec(1, 8, "periodic")
    rng = np.random.default_rng(7)
    w0 = f32(rng.standard_normal(8))
    y = f32(rng.standard_normal(8))
    nu, dt = 0.001, 0.05

    def loss(w):
        p = assemble_burgers_oseen(g, nu, dt, f32(w))
        rep = jacobi_solve(p, SolveConfig(max_iterations=steps, store_iterates=True))
        return 0.5 * float(np.sum((rep.solution - y).astype(np.float64) ** 2))

    p = assemble_burgers_oseen(g, nu, dt, w0)
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=steps), mode="unrolled")
    ubar = vjp.primal.solution - y
    got = vjp.pullback(ubar).astype(np.float64)
    want = fd_gradient(loss, w0, 2e-3)
    err = np.linalg.norm(got - want) / np.linalg.norm(want)
    assert err <= 1e-2


@pytest.mark.parametrize("steps", [1, 4, 12])
def test_unrolled_sd_poisson_theta_gradient(steps):
    g = GridSpec(1, 8, "dirichlet")
    theta0 = f32([1.0, -2.0, 0.8])
    y = f32(np.random.default_rng(8).standard_normal(8))

    def loss(theta):
        from diffsolve.solvers import steepest_descent_solve

        p = negate_problem(assemble_poisson_1d(g, f32(theta)))
        rep = steepest_descent_solve(p, SolveConfig(max_iterations=steps))
        return 0.5 * float(np.sum((rep.solution - y).astype(np.float64) ** 2))

    p = negate_problem(assemble_poisson_1d(g, theta0))
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=steps), mode="unrolled", solver="steepest_descent")
    ubar = vjp.primal.solution - y
    got = vjp.pullback(ubar).astype(np.float64)
    want = fd_gradient(loss, theta0, 1e-2)
    err = np.linalg.norm(got - want) / np.linalg.norm(want)
    assert err <= 1e-2


def test_implicit_heat_converged_gradient_vs_fd():
    g = GridSpec(1, 8, "dirichlet")
    rng = np.random.default_rng(9)
    u0 = f32(rng.standard_normal(8))
    y = f32(rng.standard_normal(8))

    def loss(uprev):
        p = assemble_heat_btcs(g, 0.05, 1.0, f32(uprev))
        rep = jacobi_solve(p, SolveConfig(max_iterations=500))
        return 0.5 * float(np.sum((rep.solution - y).astype(np.float64) ** 2))

    p = assemble_heat_btcs(g, 0.05, 1.0, u0)
    vjp = solve_with_vjp(p, SolveConfig(max_iterations=500), mode="implicit")
    assert vjp.primal.converged
    got = vjp.pullback(vjp.primal.solution - y).astype(np.float64)
    want = fd_gradient(loss, u0, 1e-2)
    assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 1e-2


def test_implicit_gmres_burgers_converged_gradient_vs_fd():
    g = GridSpec(1, 8, "periodic")
    rng = np.random.default_rng(10)
    w0 = f32(rng.standard_normal(8))
    y = f32(rng.standard_normal(8))
    cfg = SolveConfig(max_iterations=60, gmres_restart=2)

    def loss(w):
        from diffsolve.solvers import gmres_solve

        p = assemble_burgers_oseen(g, 0.001, 0.05, f32(w))
        rep = gmres_solve(p, cfg)
        return 0.5 * float(np.sum((rep.solution - y).astype(np.float64) ** 2))

    p = assemble_burgers_oseen(g, 0.001, 0.05, w0)
    vjp = solve_with_vjp(p, cfg, mode="implicit", solver="gmres")
    assert vjp.primal.converged
    got = vjp.pullback(vjp.primal.solution - y).astype(np.float64)
    want = fd_gradient(loss, w0, 2e-3)
    assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 1e-2


def test_implicit_gmres_navier_stokes_gradient_vs_fd():
    g = GridSpec(2, 5, "periodic", staggered=True)
    rng = np.random.default_rng(11)
    w0 = f32(rng.standard_normal(75)) * f32(0.3)
    w0[50:] = 0
    y = f32(rng.standard_normal(75))
    cfg = SolveConfig(max_iterations=60, gmres_restart=5)

    def loss(w):
        from diffsolve.solvers import gmres_solve

        p = assemble_navier_stokes_coupled(g, 1e-4, 0.1, f32(w))
        rep = gmres_solve(p, cfg)
        return 0.5 * float(np.sum((rep.solution - y).astype(np.float64) ** 2))

    p = assemble_navier_stokes_coupled(g, 1e-4, 0.1, w0)
    vjp = solve_with_vjp(p, cfg, mode="implicit", solver="gmres")
    assert vjp.primal.converged
    got = vjp.pullback(vjp.primal.solution - y).astype(np.float64)
    direction = rng.standard_normal(75)
    direction /= np.linalg.norm(direction)
    h = 5e-3
    want = (loss(w0 + f32(h * direction)) - loss(w0 - f32(h * direction))) / (2 * h)
    assert abs(float(got @ direction) - want) <= 1e-2 * max(abs(want), 1e-3)


# ---------------------------------------------------------------------------
# cross-mode agreement and coupling


@pytest.mark.parametrize(
    "solver,make,rel",
    [
        ("jacobi", lambda: heat_problem(n=12), 1e-4),
        # conditioning of the stiff operator bounds the shared tail near 1e-5 * kappa
        (
            "steepest_descent",
            lambda: negate_problem(assemble_poisson_1d(GridSpec(1, 12, "dirichlet"), f32([1.0, 2.0]))),
            1e-3,
        ),
    ],
)
def test_converged_unrolled_matches_implicit(solver, make, rel):
    p = make()
    cfg = SolveConfig(max_iterations=20000)
    rng = np.random.default_rng(12)
    ubar = f32(rng.standard_normal(12))
    unr = solve_with_vjp(p, cfg, mode="unrolled", solver=solver)
    assert unr.primal.converged
    imp = solve_with_vjp(p, cfg, mode="implicit", solver=solver)
    a = unr.pullback(ubar).astype(np.float64)
    b = imp.pullback(ubar).astype(np.float64)
    assert np.linalg.norm(a - b) / np.linalg.norm(b) <= rel


def count_transpose_matvecs(problem, cfg, k):
    cfg = dataclasses.replace(cfg, max_iterations=k)
    counter = {"n": 0}
    orig = problem.apply_transpose

    def counting(v):
        counter["n"] += 1
        return orig(v)

    wrapped = dataclasses.replace(problem, apply_transpose=counting)
    vjp = solve_with_vjp(wrapped, cfg, mode="implicit")
    vjp.pullback(f32(np.ones(problem.size)))
    return counter["n"]


def test_coupled_refinement_scales_adjoint_work():
    # raising K must raise the adjoint solve's budget too
    g = GridSpec(1, 16, "dirichlet")
    p = assemble_heat_btcs(g, 0.2, 1.0, f32(np.random.default_rng(13).standard_normal(16)))
    cfg = SolveConfig(max_iterations=1)
    low = count_transpose_matvecs(p, cfg, 3)
    high = count_transpose_matvecs(p, cfg, 9)
    assert low == 3
    assert high == 9


def test_adjoint_iteration_count_matches_primal_on_symmetric_system():
    g = GridSpec(1, 30, "dirichlet")
    rng = np.random.default_rng(14)
    p = assemble_heat_btcs(g, 0.001, 1.0, f32(rng.standard_normal(30)))
    primal = jacobi_solve(p, SolveConfig(max_iterations=500))
    assert primal.converged
    from diffsolve.operators import transpose_problem, with_rhs

    ubar = f32(rng.standard_normal(30))
    adj = with_rhs(transpose_problem(p), ubar)
    adjoint = jacobi_solve(adj, SolveConfig(max_iterations=500))
    assert adjoint.converged
    assert abs(adjoint.iterations_used - primal.iterations_used) <= 5
