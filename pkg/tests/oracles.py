"""Independent dense constructions used as test oracles.

Everything here is built directly from the discretization definitions
with plain numpy in float64, deliberately sharing no code with the
library so that agreement is meaningful.
"""

import numpy as np


def dense_shift(n: int, off: int) -> np.ndarray:
    """Periodic shift matrix: (S x)[i] = x[(i + off) % n]."""
    s = np.zeros((n, n))
    for i in range(n):
        s[i, (i + off) % n] = 1.0
    return s


def dense_laplace_dirichlet_1d(n: int) -> np.ndarray:
    dx = 1.0 / (n + 1)
    a = np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    return a / dx**2


def dense_laplace_dirichlet(n: int, dim: int) -> np.ndarray:
    l1 = dense_laplace_dirichlet_1d(n)
    eye = np.eye(n)
    if dim == 1:
        return l1
    if dim == 2:
        return np.kron(l1, eye) + np.kron(eye, l1)
    return (
        np.kron(np.kron(l1, eye), eye)
        + np.kron(np.kron(eye, l1), eye)
        + np.kron(np.kron(eye, eye), l1)
    )


def dense_poisson(n: int) -> np.ndarray:
    return dense_laplace_dirichlet_1d(n)


def poisson_rhs(n: int, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    x = np.arange(1, n + 1) / (n + 1)
    b = np.zeros(n)
    for i, t in enumerate(theta):
        b -= t * np.sin(2 * (i + 1) * np.pi * x)
    return b


def dense_heat(n: int, dim: int, nu: float, dt: float) -> np.ndarray:
    return np.eye(n**dim) - nu * dt * dense_laplace_dirichlet(n, dim)


def dense_forward_diff_periodic(n: int) -> np.ndarray:
    dx = 1.0 / n
    return (dense_shift(n, 1) - np.eye(n)) / dx


def dense_backward_diff_periodic(n: int) -> np.ndarray:
    dx = 1.0 / n
    return (np.eye(n) - dense_shift(n, -1)) / dx


def dense_laplace_periodic_1d(n: int) -> np.ndarray:
    dx = 1.0 / n
    return (dense_shift(n, 1) - 2.0 * np.eye(n) + dense_shift(n, -1)) / dx**2


def dense_upwind_1d(w) -> np.ndarray:
    """Gamma(w) = diag(max(a-,0)) B + diag(min(a+,0)) F with
    interface-averaged winds."""
    w = np.asarray(w, dtype=np.float64)
    n = w.size
    a_minus = (np.roll(w, 1) + w) / 2.0
    a_plus = (np.roll(w, -1) + w) / 2.0
    pos = np.where(a_minus > 0, a_minus, 0.0)
    neg = np.where(a_plus < 0, a_plus, 0.0)
    return np.diag(pos) @ dense_backward_diff_periodic(n) + np.diag(neg) @ dense_forward_diff_periodic(n)


def dense_burgers(w, nu: float, dt: float) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    n = w.size
    return np.eye(n) + dt * dense_upwind_1d(w) - dt * nu * dense_laplace_periodic_1d(n)


# -- staggered Navier-Stokes blocks ------------------------------------------
#
# Fields are (n, n) flattened row-major with the first index along x.
# An operator acting along x is kron(op, I); along y it is kron(I, op).


def _along_x(op: np.ndarray) -> np.ndarray:
    n = op.shape[0]
    return np.kron(op, np.eye(n))


def _along_y(op: np.ndarray) -> np.ndarray:
    n = op.shape[0]
    return np.kron(np.eye(n), op)


def dense_ns_interp_u2_to_u1(n: int) -> np.ndarray:
    sx = _along_x(dense_shift(n, -1))
    sy = _along_y(dense_shift(n, 1))
    eye = np.eye(n * n)
    return 0.25 * (sx + eye + sx @ sy + sy)


def dense_ns_interp_u1_to_u2(n: int) -> np.ndarray:
    sy = _along_y(dense_shift(n, -1))
    sx = _along_x(dense_shift(n, 1))
    eye = np.eye(n * n)
    return 0.25 * (sy + eye + sy @ sx + sx)


def dense_upwind_2d(cx, cy, n: int) -> np.ndarray:
    """Per-direction upwinding with co-located wind components cx, cy."""
    dx = 1.0 / n
    fx = _along_x((dense_shift(n, 1) - np.eye(n)) / dx)
    bx = _along_x((np.eye(n) - dense_shift(n, -1)) / dx)
    fy = _along_y((dense_shift(n, 1) - np.eye(n)) / dx)
    by = _along_y((np.eye(n) - dense_shift(n, -1)) / dx)
    sxm = _along_x(dense_shift(n, -1))
    sxp = _along_x(dense_shift(n, 1))
    sym = _along_y(dense_shift(n, -1))
    syp = _along_y(dense_shift(n, 1))
    cx = np.asarray(cx, dtype=np.float64).reshape(-1)
    cy = np.asarray(cy, dtype=np.float64).reshape(-1)
    axm = (sxm @ cx + cx) / 2.0
    axp = (sxp @ cx + cx) / 2.0
    aym = (sym @ cy + cy) / 2.0
    ayp = (syp @ cy + cy) / 2.0
    gx = np.diag(np.where(axm > 0, axm, 0.0)) @ bx + np.diag(np.where(axp < 0, axp, 0.0)) @ fx
    gy = np.diag(np.where(aym > 0, aym, 0.0)) @ by + np.diag(np.where(ayp < 0, ayp, 0.0)) @ fy
    return gx + gy


def dense_ns(w, n: int, nu: float, dt: float) -> np.ndarray:
    """Dense 3n^2-square coupled matrix from the block definitions."""
    w = np.asarray(w, dtype=np.float64)
    m = n * n
    w1 = w[:m].reshape(n, n)
    w2 = w[m : 2 * m].reshape(n, n)
    dx = 1.0 / n
    fx = _along_x((dense_shift(n, 1) - np.eye(n)) / dx)
    bx = _along_x((np.eye(n) - dense_shift(n, -1)) / dx)
    fy = _along_y((dense_shift(n, 1) - np.eye(n)) / dx)
    by = _along_y((np.eye(n) - dense_shift(n, -1)) / dx)
    lap = (
        _along_x(dense_shift(n, 1) - 2 * np.eye(n) + dense_shift(n, -1))
        + _along_y(dense_shift(n, 1) - 2 * np.eye(n) + dense_shift(n, -1))
    ) / dx**2
    m1 = dense_ns_interp_u2_to_u1(n)
    m2 = dense_ns_interp_u1_to_u2(n)
    cy1 = (m1 @ w2.reshape(-1)).reshape(n, n)
    cx2 = (m2 @ w1.reshape(-1)).reshape(n, n)
    a1 = np.eye(m) + dt * dense_upwind_2d(w1, cy1, n) - dt * nu * lap
    a2 = np.eye(m) + dt * dense_upwind_2d(cx2, w2, n) - dt * nu * lap
    zero = np.zeros((m, m))
    return np.block([[a1, zero, bx], [zero, a2, by], [fx, fy, zero]])


# -- scripted optimizer reference ---------------------------------------------


def adam_reference(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Parameter deltas for a sequence of gradient vectors, in float64."""
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    m = np.zeros_like(grads[0])
    v = np.zeros_like(grads[0])
    theta = np.zeros_like(grads[0])
    out = []
    for k, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**k)
        vhat = v / (1 - beta2**k)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(theta.copy())
    return out
