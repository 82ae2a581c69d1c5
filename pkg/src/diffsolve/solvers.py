"""Iterative linear solvers with a shared convergence and reporting contract.

All solvers follow the same loop: start from the zero vector, take one
solver-specific step per iteration, track the relative residual

    xi_k = ||A u_k - b||_2 / ||b||_2

and stop when ``xi < tolerance`` or the iteration cap ``max_iterations``
is reached.  The cap, not the tolerance, is the quantity the refinement
controller adapts; the tolerance acts as an early-exit guard only.

Problems may carry leading batch axes on ``rhs``.  Convergence is
tracked per sample and converged samples are frozen (their state stops
updating), so a batched solve produces bit-identical results to solving
each sample on its own.  Iterating in lockstep this way is what makes
iteration accounting well defined: ``iterations_used`` is the number of
steps taken by the slowest still-active sample.

Arithmetic is single precision; dot products and norms accumulate in
double before being rounded back, which keeps reductions deterministic
and independent of batch layout.
"""

from dataclasses import dataclass

import numpy as np

from .operators import LinearProblem, materialize

DTYPE = np.float32


def _dot(a, b):
    """Dot product over the trailing axis with float64 accumulation."""
    out = np.einsum("...i,...i->...", a.astype(np.float64), b.astype(np.float64))
    return out.astype(DTYPE)


def _norm(a):
    """2-norm over the trailing axis with float64 accumulation."""
    a64 = a.astype(np.float64)
    return np.sqrt(np.einsum("...i,...i->...", a64, a64)).astype(DTYPE)


def _rhs_norm(problem):
    b = problem.rhs
    bnorm = _norm(b)
    if np.any(bnorm == 0):
        raise ValueError("relative residual is undefined for a zero right-hand side")
    return b, bnorm


def relative_residual(problem, u):
    """Relative residual ``||A u - b|| / ||b||`` of a candidate solution.

    Batched inputs return one value per sample.  A zero right-hand side
    raises, since the quantity is undefined there; callers that want an
    absolute criterion must apply it themselves.
    """
    b, bnorm = _rhs_norm(problem)
    return _norm(b - problem.apply(u)) / bnorm


@dataclass(frozen=True)
class SolveConfig:
    """Iteration budget and termination settings shared by all solvers.

    Parameters
    ----------
    max_iterations : int
        Iteration cap K >= 0.  For GMRES one iteration is one full
        restart cycle.
    tolerance : float
        Relative-residual threshold for early exit, default 1e-5 (about
        the single-precision floor for the systems treated here).
    gmres_restart : int
        Krylov dimension m per restart; ignored by the other solvers.
    store_iterates : bool
        Keep every iterate in the report.  Unrolled differentiation
        needs this; it is opt-in to bound memory.
    """

    max_iterations: int
    tolerance: float = 1e-5
    gmres_restart: int = 8
    store_iterates: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.gmres_restart < 1:
            raise ValueError("gmres_restart must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an iterative solve.

    Attributes
    ----------
    solution : ndarray
        Final iterate u_K, same shape as the problem rhs.
    iterations_used : int
        Number of steps taken; <= max_iterations.
    converged : bool
        True iff every sample's final relative residual is below the
        tolerance.
    residual_history : ndarray
        xi_k for k = 0..iterations_used, shape (iterations_used + 1,
        *batch).  xi_0 is always exactly 1.
    iterates : ndarray or None
        All iterates u_0..u_K when requested; iterates[0] is the zero
        vector.
    aux : dict or None
        Solver internals needed by reverse-mode differentiation:
        'active': per-step update masks, shape (iterations_used, *batch);
        'converged_mask': per-sample convergence flags; steepest descent
        adds 'residuals', the recurrence residual sequence.
    """

    solution: np.ndarray
    iterations_used: int
    converged: bool
    residual_history: np.ndarray
    iterates: np.ndarray | None = None
    aux: dict | None = None


def _stack_masks(masks, batch_shape):
    if masks:
        return np.stack(masks)
    return np.zeros((0,) + batch_shape, dtype=bool)


def _report(u, its, history, cfg, iterates, extra=None):
    final = history[-1]
    aux = dict(extra or {})
    aux["converged_mask"] = final < cfg.tolerance
    return SolveReport(
        solution=u,
        iterations_used=its,
        converged=bool(np.all(final < cfg.tolerance)),
        residual_history=np.stack(history),
        iterates=np.stack(iterates) if iterates is not None else None,
        aux=aux,
    )


def jacobi_solve(problem, cfg):
    """Jacobi iteration ``u <- D^{-1}(b - (L+U)u)``.

    The off-diagonal product is formed matrix-free as ``A u - D u``, one
    matvec per step.  Requires ``problem.diagonal``; a zero diagonal
    entry is a hard error.
    """
    if problem.diagonal is None:
        raise ValueError("Jacobi requires the problem diagonal")
    d = np.asarray(problem.diagonal, dtype=DTYPE)
    if np.any(d == 0):
        raise ValueError("Jacobi is undefined for a zero diagonal entry")
    b, bnorm = _rhs_norm(problem)

    u = np.zeros_like(b)
    t = np.zeros_like(b)  # A u, exact for u = 0 by linearity
    xi = _norm(b - t) / bnorm
    history = [xi]
    iterates = [u] if cfg.store_iterates else None
    active = np.asarray(xi >= cfg.tolerance)
    masks = []
    its = 0
    while its < cfg.max_iterations and np.any(active):
        masks.append(active)
        u = np.where(active[..., None], (b - (t - d * u)) / d, u)
        its += 1
        t = problem.apply(u)
        xi = _norm(b - t) / bnorm
        history.append(xi)
        active = active & (xi >= cfg.tolerance)
        if iterates is not None:
            iterates.append(u)
    extra = {"active": _stack_masks(masks, b.shape[:-1])}
    return _report(u, its, history, cfg, iterates, extra)


def steepest_descent_solve(problem, cfg):
    """Steepest descent with step ``alpha = (r.r)/(r.Ar)``.

    The residual is updated by the recurrence ``r <- r - alpha A r``
    (one matvec per step) and drives the convergence check.  Requires a
    symmetric positive definite operator; a non-positive curvature
    ``r.Ar`` on any still-active sample is a hard error.
    """
    b, bnorm = _rhs_norm(problem)
    u = np.zeros_like(b)
    r = b.copy()
    xi = _norm(r) / bnorm
    history = [xi]
    iterates = [u] if cfg.store_iterates else None
    residuals = [r] if cfg.store_iterates else None
    active = np.asarray(xi >= cfg.tolerance)
    masks = []
    its = 0
    while its < cfg.max_iterations and np.any(active):
        masks.append(active)
        q = problem.apply(r)
        s = _dot(r, r)
        t = _dot(r, q)
        if np.any((t <= 0) & active):
            raise ValueError("operator is not positive definite along the residual")
        alpha = s / np.where(t <= 0, DTYPE(1), t)  # guard frozen samples only
        am = active[..., None]
        u = np.where(am, u + alpha[..., None] * r, u)
        r = np.where(am, r - alpha[..., None] * q, r)
        its += 1
        xi = _norm(r) / bnorm
        history.append(xi)
        active = active & (xi >= cfg.tolerance)
        if iterates is not None:
            iterates.append(u)
            residuals.append(r)
    extra = {"active": _stack_masks(masks, b.shape[:-1])}
    if residuals is not None:
        extra["residuals"] = np.stack(residuals)
    return _report(u, its, history, cfg, iterates, extra)


def _givens_least_squares(h, beta, m):
    """Solve ``min ||beta e1 - H y||`` for the (m+1, m) Hessenberg H.

    Works on trailing matrix axes with arbitrary batch axes in front.
    Zero rotation denominators and zero R diagonals (both arise past a
    lucky breakdown) degrade to identity rotations and zero solution
    components.
    """
    r = h.copy()
    g = np.zeros(h.shape[:-2] + (m + 1,), dtype=DTYPE)
    g[..., 0] = beta
    cs = np.zeros(h.shape[:-2] + (m,), dtype=DTYPE)
    sn = np.zeros_like(cs)
    for j in range(m):
        col = r[..., :, j]
        for i in range(j):
            hi = col[..., i].copy()
            col[..., i] = cs[..., i] * hi + sn[..., i] * col[..., i + 1]
            col[..., i + 1] = -sn[..., i] * hi + cs[..., i] * col[..., i + 1]
        a = col[..., j].astype(np.float64)
        bjj = col[..., j + 1].astype(np.float64)
        denom = np.sqrt(a * a + bjj * bjj)
        safe = np.where(denom == 0, 1.0, denom)
        c = np.where(denom == 0, 1.0, a / safe).astype(DTYPE)
        s = np.where(denom == 0, 0.0, bjj / safe).astype(DTYPE)
        cs[..., j] = c
        sn[..., j] = s
        col[..., j] = denom.astype(DTYPE)
        col[..., j + 1] = 0
        gj = g[..., j].copy()
        g[..., j] = c * gj + s * g[..., j + 1]
        g[..., j + 1] = -s * gj + c * g[..., j + 1]
    y = np.zeros(h.shape[:-2] + (m,), dtype=DTYPE)
    for j in range(m - 1, -1, -1):
        tail = np.einsum("...k,...k->...", r[..., j, j + 1 :].astype(np.float64), y[..., j + 1 :].astype(np.float64)).astype(DTYPE)
        rjj = r[..., j, j]
        num = g[..., j] - tail
        y[..., j] = np.where(rjj == 0, DTYPE(0), num / np.where(rjj == 0, DTYPE(1), rjj))
    return y


def gmres_solve(problem, cfg):
    """Restarted GMRES; one reported iteration is one full restart.

    Each cycle builds an m-dimensional Krylov basis with modified
    Gram-Schmidt, solves the Hessenberg least-squares problem by Givens
    rotations, and only then re-evaluates the true residual, so
    convergence can only be detected at restart boundaries.  An exact
    Arnoldi breakdown is lucky: the offending basis vector is replaced
    by zero, the reduced system is solved, and the recomputed residual
    confirms convergence.
    """
    m = cfg.gmres_restart
    b, bnorm = _rhs_norm(problem)
    batch = b.shape[:-1]
    u = np.zeros_like(b)
    xi = _norm(b) / bnorm
    history = [xi]
    iterates = [u] if cfg.store_iterates else None
    active = np.asarray(xi >= cfg.tolerance)
    masks = []
    its = 0
    while its < cfg.max_iterations and np.any(active):
        masks.append(active)
        r0 = b - problem.apply(u)
        beta = _norm(r0)
        nonzero = (beta != 0)[..., None]
        v = np.zeros((m + 1,) + b.shape, dtype=DTYPE)
        h = np.zeros(batch + (m + 1, m), dtype=DTYPE)
        v[0] = np.where(nonzero, r0 / np.where(nonzero, beta[..., None], DTYPE(1)), 0)
        for j in range(m):
            w = problem.apply(v[j])
            wnorm = _norm(w)
            for i in range(j + 1):
                hij = _dot(v[i], w)
                h[..., i, j] = hij
                w = w - hij[..., None] * v[i]
            hnext = _norm(w)
            # an orthogonalization remainder at roundoff level is a lucky
            # breakdown; exact zeros never materialize in float arithmetic
            down = hnext <= 16 * np.finfo(DTYPE).eps * wnorm
            h[..., j + 1, j] = np.where(down, DTYPE(0), hnext)
            ok = (~down)[..., None]
            v[j + 1] = np.where(ok, w / np.where(ok, hnext[..., None], DTYPE(1)), 0)
        y = _givens_least_squares(h, beta, m)
        du = np.einsum("k...n,...k->...n", v[:m], y).astype(DTYPE)
        u = np.where(active[..., None], u + du, u)
        its += 1
        xi = _norm(b - problem.apply(u)) / bnorm
        history.append(xi)
        active = active & (xi >= cfg.tolerance)
        if iterates is not None:
            iterates.append(u)
    extra = {"active": _stack_masks(masks, batch)}
    return _report(u, its, history, cfg, iterates, extra)


def direct_solve(problem):
    """Dense LU solve of the materialized system, as oracle and for reference data.

    The factorization runs in double precision and the solution is
    rounded back to single.  The rhs may carry batch axes as long as the
    operator itself is sample-independent.  An exactly singular matrix
    raises ``numpy.linalg.LinAlgError``.
    """
    a = materialize(problem).astype(np.float64)
    rhs = np.asarray(problem.rhs, dtype=np.float64)
    flat = rhs.reshape(-1, problem.size)
    x = np.linalg.solve(a, flat.T).T
    return x.reshape(rhs.shape).astype(DTYPE)
