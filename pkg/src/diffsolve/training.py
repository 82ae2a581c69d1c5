"""Outer-loop optimization machinery.

Losses, learning-rate schedules, Adam and plain gradient descent, seeded
minibatching, the per-epoch validation metric, and the single train_step
that chains network forward → physics solve → loss → solver pullback →
network backward → optimizer update.

Scenario wiring lives in the experiments package; here a ``Pipeline`` is
just the bundle of callables a scenario provides: ``loss_and_grad``
computes one minibatch loss and the flat parameter gradient at a given
refinement level K, ``rollout`` advances validation inputs through the
trained component, and ``solves_per_step`` records how many linear
solves one update step costs (adjoint solves included), which makes the
iteration accounting an exact integer identity.
"""

import dataclasses

import numpy as np

from .networks import NetworkParams, forward

DTYPE = np.float32


@dataclasses.dataclass(frozen=True)
class LossSpec:
    """Which discrepancy to minimize and where the reference lives."""

    kind: str
    reference: object = None
    evaluation_step: int = 0

    def __post_init__(self):
        if self.kind not in ("mse", "nmse", "sum_of_step_mse"):
            raise ValueError(f"unknown loss kind {self.kind!r}")


@dataclasses.dataclass(frozen=True)
class LRSchedule:
    kind: str = "constant"
    base_lr: float = 1e-3
    decay_rate: float = 1.0
    transition_steps: int = 1
    decay_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "cosine"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr < 0:
            raise ValueError("base_lr must be nonnegative")


def lr_at(schedule, step):
    """Learning rate at an integer update step (continuous exponent)."""
    if schedule.kind == "constant":
        return float(schedule.base_lr)
    if schedule.kind == "exponential":
        return float(schedule.base_lr * schedule.decay_rate ** (step / schedule.transition_steps))
    frac = min(step, schedule.decay_steps) / schedule.decay_steps
    return float(schedule.base_lr * 0.5 * (1.0 + np.cos(np.pi * frac)))


@dataclasses.dataclass(frozen=True)
class OptimizerState:
    kind: str
    schedule: LRSchedule
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8


def optimizer_init(kind, size, schedule):
    if kind == "adam":
        zeros = np.zeros(size, dtype=DTYPE)
        return OptimizerState(kind="adam", schedule=schedule, m=zeros, v=zeros.copy())
    if kind == "gd":
        return OptimizerState(kind="gd", schedule=schedule)
    raise ValueError(f"unknown optimizer kind {kind!r}")


def adam_step(state, params, grad):
    """One bias-corrected Adam update on a flat parameter vector."""
    grad = np.asarray(grad, dtype=params.dtype)
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    lr = lr_at(state.schedule, state.step)
    new_params = params - lr * mhat / (np.sqrt(vhat) + state.eps_adam)
    return dataclasses.replace(state, step=t, m=m, v=v), new_params


def gradient_descent_step(state, params, grad):
    lr = lr_at(state.schedule, state.step)
    return dataclasses.replace(state, step=state.step + 1), params - lr * np.asarray(grad, dtype=params.dtype)


def optimizer_update(state, params, grad):
    if state.kind == "adam":
        return adam_step(state, params, grad)
    return gradient_descent_step(state, params, grad)


# ---------------------------------------------------------------------------
# losses


def _batched(pred, ref):
    pred = np.asarray(pred)
    ref = np.asarray(ref)
    if pred.shape != ref.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match reference {ref.shape}")
    if pred.ndim >= 2:
        return pred.reshape(pred.shape[0], -1), ref.reshape(ref.shape[0], -1)
    return pred.reshape(1, -1), ref.reshape(1, -1)


def nmse_loss(pred, ref):
    """Batch-mean of per-sample squared relative errors, with cotangent.

    Axis 0 is the batch when the input has two or more axes; a single
    vector is treated as a batch of one.
    """
    p, r = _batched(pred, ref)
    diff = (p - r).astype(np.float64)
    ref_sq = np.einsum("bi,bi->b", r.astype(np.float64), r.astype(np.float64))
    if np.any(ref_sq == 0):
        raise ValueError("nmse reference has a zero-norm sample")
    per_sample = np.einsum("bi,bi->b", diff, diff) / ref_sq
    value = float(per_sample.mean())
    cot = (2.0 / (p.shape[0] * ref_sq[:, None])) * diff
    return value, cot.astype(DTYPE).reshape(np.asarray(pred).shape)


def mse_loss(pred, ref):
    """Mean squared error over every element, with cotangent."""
    p = np.asarray(pred)
    r = np.asarray(ref)
    if p.shape != r.shape:
        raise ValueError(f"prediction shape {p.shape} does not match reference {r.shape}")
    diff = (p - r).astype(np.float64)
    value = float(np.mean(diff * diff))
    cot = (2.0 / p.size) * diff
    return value, cot.astype(DTYPE)


# ---------------------------------------------------------------------------
# pipelines


@dataclasses.dataclass(frozen=True)
class Pipeline:
    """A scenario's trainable chain, packaged for the generic loop.

    ``loss_and_grad(params, batch, K) -> (loss, flat_grad)`` runs the
    full forward and reverse chain at refinement level K.  ``rollout
    (params, x0, t) -> prediction`` advances validation inputs to time
    step t through the trained component (the bare network for the
    emulator scenarios, the corrector-plus-coarse-solver pipeline for
    the hybrid).  ``solves_per_step`` counts linear solves per update
    step, adjoints included.
    """

    params: NetworkParams
    loss_and_grad: object
    rollout: object
    solves_per_step: int = 1


def train_step(pipeline, batch, opt_state, K):
    """One minibatch update at refinement level K."""
    if K < 1:
        raise ValueError("K must be at least 1")
    loss, grad = pipeline.loss_and_grad(pipeline.params, batch, K)
    flat = pipeline.params.flat if isinstance(pipeline.params, NetworkParams) else pipeline.params
    opt_state, new_flat = optimizer_update(opt_state, flat, grad)
    if isinstance(pipeline.params, NetworkParams):
        new_params = dataclasses.replace(pipeline.params, flat=new_flat)
    else:
        new_params = new_flat
    return new_params, opt_state, loss


def network_rollout(params, x0, t):
    """Autoregressive rollout of a bare network for t steps."""
    state = x0
    for _ in range(t):
        state = forward(params, state)
    return state


def validation_error(model_or_pipeline, val_set, t):
    """Mean over the validation set of squared relative rollout errors."""
    if isinstance(model_or_pipeline, Pipeline):
        rollout = model_or_pipeline.rollout
        params = model_or_pipeline.params
    elif isinstance(model_or_pipeline, NetworkParams):
        rollout = network_rollout
        params = model_or_pipeline
    else:
        raise TypeError("expected a Pipeline or NetworkParams")
    x0 = val_set.initial
    ref = val_set.target_at(t)
    if x0.shape[0] == 0:
        raise ValueError("validation set is empty")
    pred = rollout(params, x0, t)
    p, r = _batched(pred, ref)
    ref_sq = np.einsum("bi,bi->b", r.astype(np.float64), r.astype(np.float64))
    if np.any(ref_sq == 0):
        raise ValueError("validation reference has a zero-norm sample")
    diff = (p - r).astype(np.float64)
    per_sample = np.einsum("bi,bi->b", diff, diff) / ref_sq
    return float(per_sample.mean())


def minibatches(dataset, batch_size, epoch_seed):
    """Seeded shuffle then fixed partition; returns index arrays."""
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if batch_size > n:
        raise ValueError("batch_size exceeds dataset size")
    perm = np.random.default_rng(epoch_seed).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]
