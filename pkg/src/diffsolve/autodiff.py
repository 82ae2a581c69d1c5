"""Reverse-mode differentiation through approximate linear solves.

Two routes produce the cotangent on the assembly input g from a
cotangent on the solver output u_K:

implicit
    Solve the adjoint system A^T lam = ubar with the same solver family
    and the same iteration cap as the primal, then assemble
    gbar = rhs_vjp(lam) - matrix_vjp(u_K, lam).  Valid at (near)
    convergence, cheap in memory, and the only route for GMRES.

unrolled
    Walk the stored iterate tape backwards, applying the hand-derived
    per-step vector-Jacobian products of the Jacobi or steepest descent
    update.  At small K this differentiates the truncated map itself,
    which is exactly what the training loss sees.

Per-sample freezing in the forward solve is mirrored here: a frozen
sample's step is the identity, so its cotangent passes through
untouched.  Matrix cotangents are never materialized; they flow through
the assembly hooks on the problem.
"""

import dataclasses

import numpy as np

from .operators import transpose_problem, with_rhs
from .solvers import (
    SolveConfig,
    _dot,
    _norm,
    gmres_solve,
    jacobi_solve,
    steepest_descent_solve,
)

DTYPE = np.float32

_SOLVERS = {
    "jacobi": jacobi_solve,
    "steepest_descent": steepest_descent_solve,
    "gmres": gmres_solve,
}

DIFF_MODES = ("implicit", "unrolled")


@dataclasses.dataclass(frozen=True)
class SolveVJP:
    """A solve bundled with its pullback.

    ``primal`` is the unmodified solver report; ``pullback`` maps a
    cotangent on the solution to a cotangent on the assembly input g
    and is linear in its argument.
    """

    primal: object
    pullback: object


def _accumulate(total, term):
    return term if total is None else total + term


def _finish(problem, bbar, gbar):
    if problem.vjp_wrt_g_through_rhs is not None:
        gbar = _accumulate(gbar, problem.vjp_wrt_g_through_rhs(bbar))
    if gbar is None:
        raise ValueError("problem exposes no parameter VJP hooks")
    return gbar


def solve_with_vjp(problem, cfg, mode="implicit", solver="jacobi"):
    """Run a solver and capture the chosen differentiation route.

    Unrolled mode forces iterate storage on the forward solve; GMRES
    admits implicit mode only.
    """
    if mode not in DIFF_MODES:
        raise ValueError(f"unknown differentiation mode: {mode!r}")
    if solver not in _SOLVERS:
        raise ValueError(f"unknown solver kind: {solver!r}")
    if mode == "unrolled":
        if solver == "gmres":
            raise ValueError("GMRES supports implicit differentiation only")
        if not cfg.store_iterates:
            cfg = dataclasses.replace(cfg, store_iterates=True)
    report = _SOLVERS[solver](problem, cfg)

    if mode == "implicit":
        def pullback(ubar):
            return implicit_pullback(problem, report.solution, ubar, cfg, solver=solver)
    else:
        def pullback(ubar):
            return unrolled_pullback(
                problem, report.iterates, ubar, solver,
                aux=report.aux, tolerance=cfg.tolerance,
            )
    return SolveVJP(primal=report, pullback=pullback)


def implicit_pullback(problem, u_k, ubar, cfg, solver="jacobi"):
    """Adjoint-solve route: A^T lam = ubar at the primal iteration cap.

    The adjoint runs the same solver family with the same cap, so
    refining K refines both passes.  A zero cotangent short-circuits to
    a zero gradient (the solvers reject zero right-hand sides).
    """
    if solver not in _SOLVERS:
        raise ValueError(f"unknown solver kind: {solver!r}")
    ubar = np.asarray(ubar, dtype=DTYPE)
    if np.all(ubar == 0):
        lam = np.zeros_like(ubar)
    else:
        adj = with_rhs(transpose_problem(problem), ubar)
        adj_cfg = dataclasses.replace(cfg, store_iterates=False)
        lam = _SOLVERS[solver](adj, adj_cfg).solution
    gbar = None
    if problem.vjp_wrt_g_through_matrix is not None:
        gbar = _accumulate(gbar, -problem.vjp_wrt_g_through_matrix(u_k, lam))
    return _finish(problem, lam, gbar)


def _active_masks(problem, iterates, tolerance):
    """Reconstruct the per-step update masks from the iterate tape."""
    b = problem.rhs
    bnorm = _norm(b)
    masks = []
    xi = _norm(b - problem.apply(iterates[0])) / bnorm
    active = np.asarray(xi >= tolerance)
    for k in range(len(iterates) - 1):
        masks.append(active)
        xi = _norm(b - problem.apply(iterates[k + 1])) / bnorm
        active = active & (xi >= tolerance)
    return masks


def _sd_tape(problem, steps, tolerance):
    """Replay the steepest descent recurrence to rebuild residuals and masks."""
    b = problem.rhs
    bnorm = _norm(b)
    r = b.copy()
    xi = _norm(r) / bnorm
    active = np.asarray(xi >= tolerance)
    residuals, masks = [r], []
    for _ in range(steps):
        masks.append(active)
        q = problem.apply(r)
        s = _dot(r, r)
        t = _dot(r, q)
        alpha = s / np.where(t <= 0, DTYPE(1), t)
        r = np.where(active[..., None], r - alpha[..., None] * q, r)
        residuals.append(r)
        xi = _norm(r) / bnorm
        active = active & (xi >= tolerance)
    return residuals, masks


def unrolled_pullback(problem, iterates, ubar, solver="jacobi", aux=None, tolerance=1e-5):
    """Backpropagate through the stored iteration tape.

    ``iterates`` is the sequence u_0..u_K from a solve with iterate
    storage enabled.  ``aux`` (the report's aux dict) supplies the
    per-step activity masks and, for steepest descent, the recurrence
    residuals; without it both are reconstructed by replay, which is
    bit-exact because the solvers are deterministic.
    """
    if iterates is None:
        raise ValueError("unrolled differentiation requires stored iterates")
    steps = len(iterates) - 1
    if steps < 0:
        raise ValueError("iterate tape is empty")
    ubar = np.asarray(ubar, dtype=DTYPE)
    if aux is not None and len(aux["active"]) != steps:
        raise ValueError("iterate tape and activity mask lengths disagree")
    if solver == "jacobi":
        return _unrolled_jacobi(problem, iterates, ubar, aux, tolerance)
    if solver == "steepest_descent":
        return _unrolled_sd(problem, iterates, ubar, aux, tolerance)
    if solver == "gmres":
        raise ValueError("GMRES supports implicit differentiation only")
    raise ValueError(f"unknown solver kind: {solver!r}")


def _unrolled_jacobi(problem, iterates, ubar, aux, tolerance):
    # step: u' = u + D^{-1}(b - A u) on active samples, identity on frozen
    d = np.asarray(problem.diagonal, dtype=DTYPE)
    b = problem.rhs
    steps = len(iterates) - 1
    masks = aux["active"] if aux is not None else _active_masks(problem, iterates, tolerance)
    vjp_matrix = problem.vjp_wrt_g_through_matrix
    vjp_diag = problem.vjp_wrt_g_through_diagonal

    lam = ubar
    bbar = np.zeros_like(ubar)
    gbar = None
    for k in range(steps - 1, -1, -1):
        contrib = np.where(masks[k][..., None], lam, 0) / d
        bbar = bbar + contrib
        if vjp_matrix is not None:
            gbar = _accumulate(gbar, -vjp_matrix(iterates[k], contrib))
        if vjp_diag is not None:
            r_k = b - problem.apply(iterates[k])
            gbar = _accumulate(gbar, vjp_diag(-contrib * r_k / d))
        lam = lam - problem.apply_transpose(contrib)
    return _finish(problem, bbar, gbar)


def _unrolled_sd(problem, iterates, ubar, aux, tolerance):
    # step: q = A r; alpha = (r.r)/(r.q); u' = u + alpha r; r' = r - alpha q
    steps = len(iterates) - 1
    if aux is not None and "residuals" in aux:
        residuals, masks = aux["residuals"], aux["active"]
    else:
        residuals, masks = _sd_tape(problem, steps, tolerance)
    if len(residuals) != steps + 1:
        raise ValueError("iterate tape and residual tape lengths disagree")
    vjp_matrix = problem.vjp_wrt_g_through_matrix

    rbar = np.zeros_like(ubar)
    gbar = None
    for k in range(steps - 1, -1, -1):
        r = residuals[k]
        mf = masks[k][..., None]
        q = problem.apply(r)
        s = _dot(r, r)
        t = _dot(r, q)
        tsafe = np.where(t <= 0, DTYPE(1), t)
        alpha = s / tsafe
        abar = _dot(ubar, r) - _dot(rbar, q)
        sbar = abar / tsafe
        tbar = -abar * s / (tsafe * tsafe)
        qbar = np.where(mf, tbar[..., None] * r - alpha[..., None] * rbar, 0)
        rnew = (
            rbar
            + alpha[..., None] * ubar
            + 2 * sbar[..., None] * r
            + tbar[..., None] * q
            + problem.apply_transpose(qbar)
        )
        rbar = np.where(mf, rnew, rbar)
        if vjp_matrix is not None:
            gbar = _accumulate(gbar, vjp_matrix(r, qbar))
    # r_0 = b exactly, so the residual cotangent lands on the rhs
    return _finish(problem, rbar, gbar)
