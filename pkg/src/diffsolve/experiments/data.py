"""Dataset construction: random initial conditions and reference trajectories.

Reference trajectories come from fully converged physics: a dense LU
solve wherever the operator is sample-independent or small, and a
tolerance-converged Krylov solve for the coupled saddle system whose
pressure nullspace rules out a plain dense factorization.
"""

import dataclasses
import itertools

import numpy as np

from ..operators import (
    DTYPE,
    FieldState,
    GridSpec,
    assemble_burgers_oseen,
    assemble_heat_btcs,
    assemble_navier_stokes_coupled,
    backward_diff_periodic,
    forward_diff_periodic,
    materialize,
    ns_merge,
    ns_split,
)
from ..solvers import SolveConfig, gmres_solve


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Reference trajectories plus the train/validation split.

    ``trajectories`` has shape (samples, steps + 1, dof) in the state
    layout the scenario trains on (the coarse grid for the hybrid
    scenario).  Row 0 of the time axis is the initial condition.
    """

    trajectories: np.ndarray
    train_indices: np.ndarray
    val_indices: np.ndarray
    seed: int

    @property
    def initial(self):
        return self.trajectories[:, 0]

    def split(self):
        return self.trajectories[self.train_indices], self.trajectories[self.val_indices]


class ValView:
    """Validation-slice adapter for validation_error."""

    def __init__(self, trajectories):
        self.trajectories = trajectories

    @property
    def initial(self):
        return self.trajectories[:, 0]

    def target_at(self, t):
        return self.trajectories[:, t]


def node_coordinates(grid):
    if grid.boundary == "dirichlet":
        return (np.arange(1, grid.n + 1) * grid.spacing).astype(np.float64)
    return (np.arange(grid.n) * grid.spacing).astype(np.float64)


def generate_fourier_ic(grid, n_modes, seed, n_samples=1, amplitudes=None):
    """Truncated Fourier series evaluated at the grid nodes.

    Each mode k = 1..n_modes contributes the 2^dim products of
    sin(2 k pi x_d) / cos(2 k pi x_d) across dimensions, each with an
    independent U(-1, 1) amplitude.  ``amplitudes`` with shape
    (n_samples, n_modes, 2^dim) overrides the random draw; the product
    terms are ordered by itertools.product over (sin, cos) per axis.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    x = node_coordinates(grid)
    n_terms = 2**grid.dim
    if amplitudes is None:
        rng = np.random.default_rng(seed)
        amplitudes = rng.uniform(-1.0, 1.0, size=(n_samples, n_modes, n_terms))
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if amplitudes.shape != (n_samples, n_modes, n_terms):
        raise ValueError("amplitudes must have shape (n_samples, n_modes, 2^dim)")
    # trig[k, 0] = sin(2 (k+1) pi x), trig[k, 1] = cos(2 (k+1) pi x)
    ks = 2.0 * np.pi * np.arange(1, n_modes + 1)[:, None] * x[None, :]
    trig = np.stack([np.sin(ks), np.cos(ks)], axis=1)
    field = np.zeros((n_samples,) + grid.shape, dtype=np.float64)
    for t, choice in enumerate(itertools.product(range(2), repeat=grid.dim)):
        for k in range(n_modes):
            term = trig[k, choice[0]]
            for d in range(1, grid.dim):
                term = np.multiply.outer(term, trig[k, choice[d]])
            field += amplitudes[:, k, t].reshape((-1,) + (1,) * grid.dim) * term
    values = field.reshape(n_samples, -1).astype(DTYPE)
    return FieldState(values=values, grid=grid)


def _lowpass(field, cutoff):
    """Zero all Fourier modes whose index exceeds cutoff on any axis."""
    spec = np.fft.fftn(field, axes=(-2, -1))
    n = field.shape[-1]
    idx = np.minimum(np.arange(n), n - np.arange(n))
    keep = (idx[:, None] <= cutoff) & (idx[None, :] <= cutoff)
    return np.real(np.fft.ifftn(spec * keep, axes=(-2, -1)))


def _periodic_poisson_solve(rhs, dx):
    """Spectral solve of the 5-point periodic Laplacian, zero-mean branch."""
    n = rhs.shape[-1]
    k = 2.0 * np.pi * np.arange(n) / n
    eig = (2.0 * np.cos(k)[:, None] + 2.0 * np.cos(k)[None, :] - 4.0) / dx**2
    eig[0, 0] = 1.0
    spec = np.fft.fftn(rhs, axes=(-2, -1)) / eig
    spec[..., 0, 0] = 0.0
    return np.real(np.fft.ifftn(spec, axes=(-2, -1)))


def project_divergence_free(values, grid):
    """Remove the divergent part of a staggered velocity field.

    Solves the pressure-Poisson system D G phi = D u and subtracts
    G phi; the discrete identity G = -D^T keeps the correction exact up
    to rounding.
    """
    u1, u2, p = ns_split(np.asarray(values, dtype=np.float64), grid.n)
    dx = grid.spacing
    div = forward_diff_periodic(u1, dx, axis=-2) + forward_diff_periodic(u2, dx, axis=-1)
    phi = _periodic_poisson_solve(div, dx)
    u1 = u1 - backward_diff_periodic(phi, dx, axis=-2)
    u2 = u2 - backward_diff_periodic(phi, dx, axis=-1)
    return ns_merge(u1, u2, p).astype(DTYPE)


def generate_ns_ic(grid, seed, n_samples=1):
    """Smooth, normalized, divergence-free staggered velocity samples.

    Standard-normal per-face draws are low-pass filtered (hard
    truncation above a quarter of the Nyquist index), renormalized to
    zero mean and unit standard deviation per component, then projected
    onto the discretely divergence-free subspace.  Pressure starts at
    zero.
    """
    if not grid.staggered:
        raise ValueError("Navier-Stokes initial conditions need a staggered grid")
    rng = np.random.default_rng(seed)
    n = grid.n
    cutoff = max(1, n // 8)
    fields = rng.standard_normal((n_samples, 2, n, n))
    fields = _lowpass(fields, cutoff)
    mean = fields.mean(axis=(-2, -1), keepdims=True)
    std = fields.std(axis=(-2, -1), keepdims=True)
    fields = (fields - mean) / std
    p = np.zeros((n_samples, n, n))
    values = ns_merge(fields[:, 0], fields[:, 1], p)
    return FieldState(values=project_divergence_free(values, grid), grid=grid, components=3)


def downsample_staggered(values, fine_n):
    """Factor-2 cell-average restriction of a staggered state.

    Coarse face values average the two fine faces they cover and the
    pressure averages its four fine cells, so a discretely
    divergence-free fine field restricts to a divergence-free coarse
    field exactly.
    """
    if fine_n % 2:
        raise ValueError("restriction needs an even fine resolution")
    u1, u2, p = ns_split(np.asarray(values), fine_n)
    u1c = 0.5 * (u1[..., ::2, ::2] + u1[..., ::2, 1::2])
    u2c = 0.5 * (u2[..., ::2, ::2] + u2[..., 1::2, ::2])
    pc = 0.25 * (
        p[..., ::2, ::2] + p[..., 1::2, ::2] + p[..., ::2, 1::2] + p[..., 1::2, 1::2]
    )
    return ns_merge(u1c, u2c, pc).astype(DTYPE)


# ---------------------------------------------------------------------------
# reference marching


def heat_trajectories(grid, nu, dt, initial, steps):
    """March the diffusion step; one shared matrix solves all samples."""
    problem = assemble_heat_btcs(grid, nu, dt, np.zeros(grid.dof, dtype=DTYPE))
    a = materialize(problem).astype(np.float64)
    out = [np.asarray(initial, dtype=DTYPE)]
    for _ in range(steps):
        nxt = np.linalg.solve(a, out[-1].astype(np.float64).T).T.astype(DTYPE)
        out.append(nxt)
    return np.stack(out, axis=1)


def burgers_trajectories(grid, nu, dt, initial, steps):
    """March the linearized advection-diffusion step sample by sample."""
    samples = np.asarray(initial, dtype=DTYPE)
    out = [samples]
    for _ in range(steps):
        prev = out[-1]
        nxt = np.empty_like(prev)
        for i in range(prev.shape[0]):
            problem = assemble_burgers_oseen(grid, nu, dt, prev[i])
            a = materialize(problem).astype(np.float64)
            nxt[i] = np.linalg.solve(a, prev[i].astype(np.float64)).astype(DTYPE)
        out.append(nxt)
    return np.stack(out, axis=1)


def ns_trajectories(grid, nu, dt, initial, steps, restart=8, tolerance=1e-5, max_cycles=2000):
    """March the coupled saddle system with tolerance-converged GMRES.

    The pressure nullspace makes the materialized matrix exactly
    singular, so the converged iterative solve stands in for a dense
    factorization here.
    """
    cfg = SolveConfig(max_iterations=max_cycles, tolerance=tolerance, gmres_restart=restart)
    out = [np.asarray(initial, dtype=DTYPE)]
    for _ in range(steps):
        problem = assemble_navier_stokes_coupled(grid, nu, dt, out[-1])
        report = gmres_solve(problem, cfg)
        if not report.converged:
            raise RuntimeError("reference trajectory solve failed to converge")
        out.append(report.solution)
    return np.stack(out, axis=1)


def build_dataset(cfg):
    """Generate the scenario's reference dataset from its config."""
    total = cfg.train_samples + cfg.val_samples
    steps = max(2, cfg.val_step)
    if cfg.scenario.startswith("heat"):
        dim = {"heat1d": 1, "heat2d": 2, "heat3d": 3}[cfg.scenario]
        grid = GridSpec(dim=dim, n=cfg.n, boundary="dirichlet")
        ics = generate_fourier_ic(grid, cfg.n_modes, cfg.data_seed, n_samples=total)
        traj = heat_trajectories(grid, cfg.nu, cfg.dt, ics.values, steps)
    elif cfg.scenario == "burgers1d":
        grid = GridSpec(dim=1, n=cfg.n, boundary="periodic")
        ics = generate_fourier_ic(grid, cfg.n_modes, cfg.data_seed, n_samples=total)
        traj = burgers_trajectories(grid, cfg.nu, cfg.dt, ics.values, steps)
    elif cfg.scenario == "navier_stokes_hybrid":
        fine = GridSpec(dim=2, n=cfg.fine_n, boundary="periodic", staggered=True)
        ics = generate_ns_ic(fine, cfg.data_seed, n_samples=total)
        fine_traj = ns_trajectories(fine, cfg.nu, cfg.dt, ics.values, steps, restart=cfg.gmres_restart)
        traj = downsample_staggered(fine_traj, cfg.fine_n)
    else:
        raise ValueError(f"scenario {cfg.scenario} uses no dataset")
    return Dataset(
        trajectories=traj,
        train_indices=np.arange(cfg.train_samples),
        val_indices=np.arange(cfg.train_samples, total),
        seed=cfg.data_seed,
    )


def save_dataset(path, dataset):
    np.savez_compressed(
        path,
        trajectories=dataset.trajectories,
        train_indices=dataset.train_indices,
        val_indices=dataset.val_indices,
        seed=np.asarray(dataset.seed),
    )


def load_dataset(path):
    with np.load(path) as data:
        return Dataset(
            trajectories=data["trajectories"],
            train_indices=data["train_indices"],
            val_indices=data["val_indices"],
            seed=int(data["seed"]),
        )
