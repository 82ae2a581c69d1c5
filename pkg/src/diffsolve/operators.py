"""Matrix-free linear operators for the PDE scenarios.

Each scenario assembles a :class:`LinearProblem` holding the matvec
``apply``, its transpose, the right-hand side, and VJP hooks that route
cotangents back onto the assembly input ``g`` (inverse-problem
parameters or the previous state of a time stepper).

Conventions
-----------
* All state arrays are ``float32`` and flat over the spatial degrees of
  freedom in their last axis.  Leading axes are batch axes: every
  ``apply``/``apply_transpose`` broadcasts over them, so a batch of
  per-sample systems (Burgers, Navier-Stokes) and a batch of right-hand
  sides for one shared matrix (heat) go through the same code path.
* Dirichlet grids have spacing 1/(N+1) and store interior values only;
  periodic grids have spacing 1/N.
* The Navier-Stokes state is flattened as (u1, u2, p), each an N-by-N
  field in row-major order with the first index along x.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

DTYPE = np.float32


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over the unit interval/square/cube.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    n : int
        Interior points per dimension (Dirichlet) or points per
        dimension (periodic).
    boundary : str
        ``"dirichlet"`` or ``"periodic"``.
    staggered : bool
        True only for the Navier-Stokes grid (biperiodic, three fields).
    """

    dim: int
    n: int
    boundary: str
    staggered: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 2:
            raise ValueError("grids need at least 2 points per dimension")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.staggered and (self.boundary != "periodic" or self.dim != 2):
            raise ValueError("staggered grids are biperiodic 2D only")

    @property
    def spacing(self) -> float:
        if self.boundary == "dirichlet":
            return 1.0 / (self.n + 1)
        return 1.0 / self.n

    @property
    def dof(self) -> int:
        """Total degrees of freedom of one state vector."""
        if self.staggered:
            return 3 * self.n * self.n
        return self.n**self.dim

    @property
    def shape(self) -> tuple:
        """Spatial shape of one scalar field."""
        return (self.n,) * self.dim


@dataclass(frozen=True)
class FieldState:
    """A flat state vector tied to its grid.

    ``components`` is 1 for scalar PDEs and 3 for the coupled
    Navier-Stokes state (u1, u2, p).
    """

    values: np.ndarray
    grid: GridSpec
    components: int = 1

    def __post_init__(self):
        expected = self.grid.dof if self.grid.staggered else self.components * self.grid.n**self.grid.dim
        if self.values.shape[-1] != expected:
            raise ValueError(
                f"state has {self.values.shape[-1]} dof, grid expects {expected}"
            )


# ---------------------------------------------------------------------------
# linear problems


@dataclass(frozen=True)
class LinearProblem:
    """Matrix-free linear system A(g) u = b(g).

    ``apply`` and ``apply_transpose`` act on arrays shaped (..., size)
    and are linear in their argument.  ``vjp_wrt_g_through_matrix(u, lam)``
    returns d/dg [lam . A(g) u]; ``vjp_wrt_g_through_rhs(bbar)`` returns
    d/dg [bbar . b(g)].  Hooks are None when the respective path is
    identically zero.  ``vjp_wrt_g_through_diagonal`` covers the extra
    1/diag dependence of the Jacobi update for operators whose diagonal
    varies with g; it is None whenever the diagonal is constant.
    """

    size: int
    apply: Callable[[np.ndarray], np.ndarray]
    apply_transpose: Callable[[np.ndarray], np.ndarray]
    rhs: np.ndarray
    diagonal: Optional[np.ndarray] = None
    vjp_wrt_g_through_matrix: Optional[Callable] = None
    vjp_wrt_g_through_rhs: Optional[Callable] = None
    vjp_wrt_g_through_diagonal: Optional[Callable] = None


def transpose_problem(p: LinearProblem) -> LinearProblem:
    """Swap apply and apply_transpose; the stencil transposes here all
    leave the diagonal unchanged."""
    return replace(p, apply=p.apply_transpose, apply_transpose=p.apply)


def with_rhs(p: LinearProblem, rhs: np.ndarray) -> LinearProblem:
    """Same operator, different right-hand side."""
    return replace(p, rhs=np.asarray(rhs, dtype=DTYPE))


def negate_problem(p: LinearProblem) -> LinearProblem:
    """The equivalent system (-A) u = (-b).

    Same solution and identical Jacobi iterates, but a negative definite
    operator becomes positive definite, which steepest descent requires.
    The VJP hooks absorb the sign so gradients match the original system.
    """
    neg_mat = None
    if p.vjp_wrt_g_through_matrix is not None:
        neg_mat = lambda u, lam: -p.vjp_wrt_g_through_matrix(u, lam)
    neg_rhs = None
    if p.vjp_wrt_g_through_rhs is not None:
        neg_rhs = lambda bbar: p.vjp_wrt_g_through_rhs(-bbar)
    neg_diag = None
    if p.vjp_wrt_g_through_diagonal is not None:
        neg_diag = lambda dbar: -p.vjp_wrt_g_through_diagonal(dbar)
    return LinearProblem(
        size=p.size,
        apply=lambda v: -p.apply(v),
        apply_transpose=lambda v: -p.apply_transpose(v),
        rhs=-p.rhs,
        diagonal=None if p.diagonal is None else -p.diagonal,
        vjp_wrt_g_through_matrix=neg_mat,
        vjp_wrt_g_through_rhs=neg_rhs,
        vjp_wrt_g_through_diagonal=neg_diag,
    )


def materialize(p: LinearProblem) -> np.ndarray:
    """Dense matrix built column by column from ``apply``.

    Test/oracle path and input to the direct solver; never used inside
    iterative solves.
    """
    eye = np.eye(p.size, dtype=DTYPE)
    # apply maps row vectors, so row k of the result is A e_k
    return np.asarray(p.apply(eye)).T.copy()


# ---------------------------------------------------------------------------
# stencil primitives
#
# All primitives take and return arrays whose trailing axes are the
# spatial axes; they broadcast over any leading batch axes.


def shift(x: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """Periodic shift: result[i] = x[i + offset] with wraparound."""
    return np.roll(x, -offset, axis=axis)


def forward_diff_periodic(x: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """F x = (x[i+1] - x[i]) / dx with wraparound."""
    return (shift(x, 1, axis) - x) / DTYPE(dx)


def backward_diff_periodic(x: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """B x = (x[i] - x[i-1]) / dx with wraparound."""
    return (x - shift(x, -1, axis)) / DTYPE(dx)


def forward_diff_periodic_t(x: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Transpose of the periodic forward difference (equals -B)."""
    return (shift(x, -1, axis) - x) / DTYPE(dx)


def backward_diff_periodic_t(x: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Transpose of the periodic backward difference (equals -F)."""
    return (x - shift(x, 1, axis)) / DTYPE(dx)


def laplace_periodic(x: np.ndarray, dx: float, ndim: int) -> np.ndarray:
    """Periodic Laplacian over the trailing ``ndim`` axes."""
    out = np.zeros_like(x)
    inv = DTYPE(1.0 / dx**2)
    for d in range(ndim):
        ax = -1 - d
        out += (shift(x, 1, ax) - 2.0 * x + shift(x, -1, ax)) * inv
    return out


def laplace_dirichlet(x: np.ndarray, dx: float, ndim: int) -> np.ndarray:
    """Homogeneous-Dirichlet Laplacian over the trailing ``ndim`` axes.

    Interior values only; neighbours beyond the boundary are zero.
    """
    out = np.zeros_like(x)
    inv = DTYPE(1.0 / dx**2)
    for d in range(ndim):
        ax = x.ndim - 1 - d
        out -= 2.0 * inv * x
        lo = [slice(None)] * x.ndim
        hi = [slice(None)] * x.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        out[lo] += inv * x[hi]
        out[hi] += inv * x[lo]
    return out


def upwind_winds(w: np.ndarray, axis: int = -1):
    """Neighbour-average wind speeds at the left/right cell interfaces.

    a_minus[i] = (w[i-1] + w[i]) / 2, a_plus[i] = (w[i] + w[i+1]) / 2.
    """
    a_minus = 0.5 * (shift(w, -1, axis) + w)
    a_plus = 0.5 * (shift(w, 1, axis) + w)
    return a_minus, a_plus


def upwind_apply(v, w_pos, w_neg, dx, axis=-1):
    """Gamma v = diag(max(a-,0)) B v + diag(min(a+,0)) F v.

    ``w_pos``/``w_neg`` are the pre-split positive/negative wind parts.
    """
    return w_pos * backward_diff_periodic(v, dx, axis) + w_neg * forward_diff_periodic(v, dx, axis)


def upwind_apply_t(v, w_pos, w_neg, dx, axis=-1):
    """Transpose of :func:`upwind_apply` in v."""
    return backward_diff_periodic_t(w_pos * v, dx, axis) + forward_diff_periodic_t(w_neg * v, dx, axis)


def split_winds(a_minus: np.ndarray, a_plus: np.ndarray):
    """Positive/negative wind parts; a wind of exactly zero contributes
    to neither branch."""
    w_pos = np.where(a_minus > 0, a_minus, DTYPE(0))
    w_neg = np.where(a_plus < 0, a_plus, DTYPE(0))
    return w_pos, w_neg


# ---------------------------------------------------------------------------
# Poisson 1D (Dirichlet)


def poisson_sine_modes(grid: GridSpec, n_params: int) -> np.ndarray:
    """Matrix S with S[j, i] = sin(2 (i+1) pi x_j) at the interior nodes."""
    x = (np.arange(1, grid.n + 1) * grid.spacing).astype(np.float64)
    modes = np.stack(
        [np.sin(2.0 * (i + 1) * np.pi * x) for i in range(n_params)], axis=1
    )
    return modes.astype(DTYPE)


def assemble_poisson_1d(grid: GridSpec, theta: np.ndarray) -> LinearProblem:
    """Discrete Poisson problem L u = b with b = -sum_i theta_i sin(2 i pi x).

    The tridiagonal stencil (1, -2, 1)/dx^2 is independent of theta, so
    the matrix path of the VJP is identically zero.
    """
    if grid.boundary != "dirichlet":
        raise ValueError("the Poisson scenario is Dirichlet-only")
    if grid.dim != 1:
        raise ValueError("the Poisson scenario is one-dimensional")
    theta = np.asarray(theta, dtype=DTYPE)
    if theta.ndim != 1 or theta.size < 1:
        raise ValueError("theta must be a vector with at least one entry")
    dx = grid.spacing
    modes = poisson_sine_modes(grid, theta.size)
    rhs = -(modes @ theta)

    def apply(v):
        return laplace_dirichlet(v, dx, 1)

    diag = np.full(grid.n, -2.0 / dx**2, dtype=DTYPE)

    def vjp_rhs(bbar):
        return -(np.asarray(bbar) @ modes)

    return LinearProblem(
        size=grid.n,
        apply=apply,
        apply_transpose=apply,
        rhs=rhs,
        diagonal=diag,
        vjp_wrt_g_through_matrix=None,
        vjp_wrt_g_through_rhs=vjp_rhs,
    )


# ---------------------------------------------------------------------------
# heat equation, BTCS (Dirichlet, 1D/2D/3D)


def assemble_heat_btcs(grid: GridSpec, nu: float, dt: float, u_prev: np.ndarray) -> LinearProblem:
    """Backward-Euler diffusion step (I - nu dt L) u = u_prev.

    ``u_prev`` may carry leading batch axes; the operator itself is the
    same for every sample, so the matrix path of the VJP is zero and the
    rhs path is the identity.
    """
    if grid.boundary != "dirichlet":
        raise ValueError("heat scenario uses Dirichlet grids")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u_prev = np.asarray(u_prev, dtype=DTYPE)
    if u_prev.shape[-1] != grid.dof:
        raise ValueError(
            f"u_prev has {u_prev.shape[-1]} dof, grid expects {grid.dof}"
        )
    dx = grid.spacing
    dim = grid.dim
    shape = grid.shape
    coef = DTYPE(nu * dt)

    def apply(v):
        f = v.reshape(v.shape[:-1] + shape)
        out = f - coef * laplace_dirichlet(f, dx, dim)
        return out.reshape(v.shape)

    diag = np.full(grid.dof, 1.0 + 2.0 * dim * nu * dt / dx**2, dtype=DTYPE)

    return LinearProblem(
        size=grid.dof,
        apply=apply,
        apply_transpose=apply,
        rhs=u_prev,
        diagonal=diag,
        vjp_wrt_g_through_matrix=None,
        vjp_wrt_g_through_rhs=lambda bbar: bbar,
    )


# ---------------------------------------------------------------------------
# Burgers 1D, upwind Oseen linearization (periodic)


def assemble_burgers_oseen(grid: GridSpec, nu: float, dt: float, u_prev: np.ndarray) -> LinearProblem:
    """Oseen step (I + dt Gamma(w) - dt nu L) u = w with w = u_prev.

    The advection matrix Gamma(w) splits the neighbour-average winds into
    positive and negative parts feeding backward/forward differences.
    Both the rhs and the matrix depend on w, so both VJP hooks are live,
    as is the diagonal hook (the upwind diagonal moves with the winds).
    """
    if grid.boundary != "periodic" or grid.dim != 1:
        raise ValueError("Burgers scenario uses periodic 1D grids")
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.asarray(u_prev, dtype=DTYPE)
    if w.shape[-1] != grid.n:
        raise ValueError(f"u_prev has {w.shape[-1]} dof, grid expects {grid.n}")
    dx = grid.spacing
    dtf = DTYPE(dt)
    nudt = DTYPE(nu * dt)

    a_minus, a_plus = upwind_winds(w)
    w_pos, w_neg = split_winds(a_minus, a_plus)
    mask_minus = (a_minus > 0).astype(DTYPE)
    mask_plus = (a_plus < 0).astype(DTYPE)

    def apply(v):
        return v + dtf * upwind_apply(v, w_pos, w_neg, dx) - nudt * laplace_periodic(v, dx, 1)

    def apply_t(v):
        return v + dtf * upwind_apply_t(v, w_pos, w_neg, dx) - nudt * laplace_periodic(v, dx, 1)

    diag = 1.0 + dtf * (w_pos - w_neg) / DTYPE(dx) + 2.0 * nudt / DTYPE(dx**2)

    def winds_to_w(abar_minus, abar_plus):
        # a_minus = (s_{-1} w + w)/2, a_plus = (s_1 w + w)/2
        wbar = 0.5 * (shift(abar_minus, 1, -1) + abar_minus)
        wbar += 0.5 * (shift(abar_plus, -1, -1) + abar_plus)
        return wbar

    def vjp_matrix(u, lam):
        # d/dw [lam . dt Gamma(w) u]
        abar_minus = dtf * lam * backward_diff_periodic(u, dx) * mask_minus
        abar_plus = dtf * lam * forward_diff_periodic(u, dx) * mask_plus
        return winds_to_w(abar_minus, abar_plus)

    def vjp_diag(dbar):
        # d = 1 + dt (w_pos - w_neg)/dx + 2 nu dt/dx^2
        abar_minus = dtf * dbar * mask_minus / DTYPE(dx)
        abar_plus = -dtf * dbar * mask_plus / DTYPE(dx)
        return winds_to_w(abar_minus, abar_plus)

    return LinearProblem(
        size=grid.n,
        apply=apply,
        apply_transpose=apply_t,
        rhs=w,
        diagonal=diag,
        vjp_wrt_g_through_matrix=vjp_matrix,
        vjp_wrt_g_through_rhs=lambda bbar: bbar,
        vjp_wrt_g_through_diagonal=vjp_diag,
    )


# ---------------------------------------------------------------------------
# Navier-Stokes 2D, coupled saddle system on a backward-staggered grid
#
# Layout of one state: (u1, u2, p), each flattened from an (N, N) field
# with the first index along x.  Positions: u1[i,j] sits at (i dx,
# (j+1/2) dx), u2[i,j] at ((i+1/2) dx, j dx), p[i,j] at the cell center
# ((i+1/2) dx, (j+1/2) dx).  Divergence uses forward differences into
# cell centers, the pressure gradient uses backward differences onto the
# faces, so G = -D^T holds discretely.


def ns_split(v: np.ndarray, n: int):
    """Split a flat (..., 3 n^2) state into three (..., n, n) fields."""
    f = v.reshape(v.shape[:-1] + (3, n, n))
    return f[..., 0, :, :], f[..., 1, :, :], f[..., 2, :, :]


def ns_merge(u1: np.ndarray, u2: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Inverse of :func:`ns_split`."""
    f = np.stack([u1, u2, p], axis=-3)
    return f.reshape(f.shape[:-3] + (3 * f.shape[-1] * f.shape[-1],))


def interp_u2_to_u1(u2: np.ndarray) -> np.ndarray:
    """Average the four u2 values surrounding each u1 position."""
    left = shift(u2, -1, -2)
    return 0.25 * (left + u2 + shift(left, 1, -1) + shift(u2, 1, -1))


def interp_u1_to_u2(u1: np.ndarray) -> np.ndarray:
    """Average the four u1 values surrounding each u2 position."""
    below = shift(u1, -1, -1)
    return 0.25 * (below + u1 + shift(below, 1, -2) + shift(u1, 1, -2))


def _upwind_2d_parts(cx: np.ndarray, cy: np.ndarray):
    """Split both wind components of a co-located 2D wind field."""
    ax_minus, ax_plus = upwind_winds(cx, axis=-2)
    ay_minus, ay_plus = upwind_winds(cy, axis=-1)
    px, nx = split_winds(ax_minus, ax_plus)
    py, ny = split_winds(ay_minus, ay_plus)
    masks = (
        (ax_minus > 0).astype(DTYPE),
        (ax_plus < 0).astype(DTYPE),
        (ay_minus > 0).astype(DTYPE),
        (ay_plus < 0).astype(DTYPE),
    )
    return (px, nx, py, ny), masks


def _upwind_2d_apply(v, parts, dx):
    px, nx, py, ny = parts
    return upwind_apply(v, px, nx, dx, axis=-2) + upwind_apply(v, py, ny, dx, axis=-1)


def _upwind_2d_apply_t(v, parts, dx):
    px, nx, py, ny = parts
    return upwind_apply_t(v, px, nx, dx, axis=-2) + upwind_apply_t(v, py, ny, dx, axis=-1)


def assemble_navier_stokes_coupled(grid: GridSpec, nu: float, dt: float, u_prev: np.ndarray) -> LinearProblem:
    """One implicit step of the coupled incompressible Navier-Stokes system.

    Block structure (v = (v1, v2, q)):

        row u1:  (I + dt G1(w) - dt nu L) v1            + Bx q
        row u2:             (I + dt G2(w) - dt nu L) v2 + By q
        row p:   Fx v1 + Fy v2

    with G1/G2 the per-component upwind advection built from the previous
    velocities w (u2 interpolated to u1 positions and vice versa), and the
    continuity row scaled so no dt appears on the pressure blocks.  The
    pressure-pressure block is zero and the pressure slot of ``u_prev``
    affects neither the matrix nor the rhs.
    """
    if not grid.staggered:
        raise ValueError("Navier-Stokes scenario needs the staggered grid")
    n = grid.n
    dx = grid.spacing
    w = np.asarray(u_prev, dtype=DTYPE)
    if w.shape[-1] != 3 * n * n:
        raise ValueError(f"u_prev has {w.shape[-1]} dof, grid expects {3 * n * n}")
    dtf = DTYPE(dt)
    nudt = DTYPE(nu * dt)

    w1, w2, _ = ns_split(w, n)
    cy1 = interp_u2_to_u1(w2)
    cx2 = interp_u1_to_u2(w1)
    parts1, masks1 = _upwind_2d_parts(w1, cy1)
    parts2, masks2 = _upwind_2d_parts(cx2, w2)

    def apply(v):
        v1, v2, q = ns_split(v, n)
        r1 = v1 + dtf * _upwind_2d_apply(v1, parts1, dx) - nudt * laplace_periodic(v1, dx, 2)
        r1 += backward_diff_periodic(q, dx, axis=-2)
        r2 = v2 + dtf * _upwind_2d_apply(v2, parts2, dx) - nudt * laplace_periodic(v2, dx, 2)
        r2 += backward_diff_periodic(q, dx, axis=-1)
        rp = forward_diff_periodic(v1, dx, axis=-2) + forward_diff_periodic(v2, dx, axis=-1)
        return ns_merge(r1, r2, rp)

    def apply_t(v):
        v1, v2, q = ns_split(v, n)
        r1 = v1 + dtf * _upwind_2d_apply_t(v1, parts1, dx) - nudt * laplace_periodic(v1, dx, 2)
        r1 += forward_diff_periodic_t(q, dx, axis=-2)
        r2 = v2 + dtf * _upwind_2d_apply_t(v2, parts2, dx) - nudt * laplace_periodic(v2, dx, 2)
        r2 += forward_diff_periodic_t(q, dx, axis=-1)
        rp = backward_diff_periodic_t(v1, dx, axis=-2) + backward_diff_periodic_t(v2, dx, axis=-1)
        return ns_merge(r1, r2, rp)

    rhs = w.copy().reshape(w.shape)
    r1, r2, rp = ns_split(rhs, n)
    rhs = ns_merge(r1, r2, np.zeros_like(rp))

    def vjp_rhs(bbar):
        b1, b2, _ = ns_split(np.asarray(bbar), n)
        return ns_merge(b1, b2, np.zeros_like(b1))

    def vjp_matrix(u, lam):
        u1, u2, _ = ns_split(np.asarray(u), n)
        l1, l2, _ = ns_split(np.asarray(lam), n)
        mx1m, mx1p, my1m, my1p = masks1
        mx2m, mx2p, my2m, my2p = masks2
        # u1 row: winds are (w1, interp(w2))
        ax_m = dtf * l1 * backward_diff_periodic(u1, dx, axis=-2) * mx1m
        ax_p = dtf * l1 * forward_diff_periodic(u1, dx, axis=-2) * mx1p
        ay_m = dtf * l1 * backward_diff_periodic(u1, dx, axis=-1) * my1m
        ay_p = dtf * l1 * forward_diff_periodic(u1, dx, axis=-1) * my1p
        w1bar = 0.5 * (shift(ax_m, 1, -2) + ax_m) + 0.5 * (shift(ax_p, -1, -2) + ax_p)
        cy1bar = 0.5 * (shift(ay_m, 1, -1) + ay_m) + 0.5 * (shift(ay_p, -1, -1) + ay_p)
        w2bar = interp_u1_to_u2(cy1bar)  # transpose of interp_u2_to_u1
        # u2 row: winds are (interp(w1), w2)
        bx_m = dtf * l2 * backward_diff_periodic(u2, dx, axis=-2) * mx2m
        bx_p = dtf * l2 * forward_diff_periodic(u2, dx, axis=-2) * mx2p
        by_m = dtf * l2 * backward_diff_periodic(u2, dx, axis=-1) * my2m
        by_p = dtf * l2 * forward_diff_periodic(u2, dx, axis=-1) * my2p
        cx2bar = 0.5 * (shift(bx_m, 1, -2) + bx_m) + 0.5 * (shift(bx_p, -1, -2) + bx_p)
        w1bar += interp_u2_to_u1(cx2bar)  # transpose of interp_u1_to_u2
        w2bar += 0.5 * (shift(by_m, 1, -1) + by_m) + 0.5 * (shift(by_p, -1, -1) + by_p)
        return ns_merge(w1bar, w2bar, np.zeros_like(w1bar))

    return LinearProblem(
        size=3 * n * n,
        apply=apply,
        apply_transpose=apply_t,
        rhs=rhs,
        diagonal=None,
        vjp_wrt_g_through_matrix=vjp_matrix,
        vjp_wrt_g_through_rhs=vjp_rhs,
    )


def ns_divergence(v: np.ndarray, n: int, dx: float) -> np.ndarray:
    """Discrete divergence of the velocity part of a flat NS state."""
    v1, v2, _ = ns_split(v, n)
    return forward_diff_periodic(v1, dx, axis=-2) + forward_diff_periodic(v2, dx, axis=-1)
