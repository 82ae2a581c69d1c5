"""Plateau-driven refinement controller.

Watches the per-interval validation metric, smooths it with an
exponential moving average, and decides whether the physics budget K
should grow.  Three regimes drive the decision: while the smoothed
metric still falls fast enough the controller holds (cheap physics is
still paying off); when it plateaus against a checkpoint taken at the
last refinement, either the plateau sits well below the checkpoint
(refine: the extra physics unlocked progress last time, try again) or
it does not (stop: further refinement buys nothing, freeze K for the
rest of the run).  A metric sitting above the checkpoint reads as a
divergent regime and also refines.

State transitions are pure functions returning new state; once stopped,
a run's K never changes again.
"""

import dataclasses
import math

import numpy as np

DECISIONS = ("refine", "hold", "stop")


@dataclasses.dataclass(frozen=True)
class PRDPConfig:
    K_cap: int
    tau_step: float = 0.95
    tau_stop: float = 0.9
    grace_delta: int = 3
    ema_window: int = 6
    K0: int = 1
    delta_K: int = 1

    def __post_init__(self):
        if not (0 < self.tau_step <= 1):
            raise ValueError("tau_step must lie in (0, 1]")
        if not (0 < self.tau_stop <= 1):
            raise ValueError("tau_stop must lie in (0, 1]")
        if self.grace_delta < 1:
            raise ValueError("grace_delta must be at least 1")
        if self.ema_window < 1:
            raise ValueError("ema_window must be at least 1")
        if self.K0 < 1 or self.delta_K < 1:
            raise ValueError("K0 and delta_K must be at least 1")
        if self.K0 > self.K_cap:
            raise ValueError("K0 exceeds K_cap")


@dataclasses.dataclass(frozen=True)
class PRDPState:
    current_K: int
    raw_history: tuple
    smoothed_history: tuple
    checkpoint: float
    stopped: bool = False


@dataclasses.dataclass(frozen=True)
class DecisionRecord:
    """One decision-log row per validation interval."""

    interval: int
    raw: float
    smoothed: float
    ratio_step: float
    ratio_checkpoint: float
    decision: str
    K: int


def checkpoint_init(first_validation, config):
    """State after the pre-training evaluation: c seeds the checkpoint."""
    value = float(first_validation)
    if not math.isfinite(value):
        raise ValueError("validation metric must be finite")
    return PRDPState(
        current_K=config.K0,
        raw_history=(value,),
        smoothed_history=(value,),
        checkpoint=value,
        stopped=False,
    )


def ema_append(state, new_value, ema_window):
    """Append a raw value and its smoothed companion (alpha = 2/(window+1))."""
    value = float(new_value)
    if not math.isfinite(value):
        raise ValueError("validation metric must be finite")
    if not state.smoothed_history:
        smoothed = value
    else:
        alpha = 2.0 / (ema_window + 1.0)
        smoothed = alpha * value + (1.0 - alpha) * state.smoothed_history[-1]
    return dataclasses.replace(
        state,
        raw_history=state.raw_history + (value,),
        smoothed_history=state.smoothed_history + (smoothed,),
    )


def should_refine(state, config):
    """Decide refine/hold/stop from the smoothed history.

    Expects ema_append to have run for the current interval.  Applies
    the K update (clamped at K_cap) and checkpoint move on refine; a
    stop latches permanently.
    """
    if state.stopped:
        return "stop", state
    history = state.smoothed_history
    if len(history) <= config.grace_delta:
        return "hold", state
    lookback = history[-config.grace_delta]
    if lookback == 0:
        raise ValueError("smoothed metric hit zero; ratio undefined")
    r = history[-1] / lookback
    if r <= config.tau_step:
        return "hold", state
    if state.checkpoint == 0:
        raise ValueError("checkpoint is zero; ratio undefined")
    r_c = history[-1] / state.checkpoint
    if r_c < config.tau_stop or r_c > 1.0:
        new_state = dataclasses.replace(
            state,
            checkpoint=history[-1],
            current_K=min(state.current_K + config.delta_K, config.K_cap),
        )
        return "refine", new_state
    return "stop", dataclasses.replace(state, stopped=True)


def observe(state, config, raw_value):
    """ema_append plus should_refine, packaged as one decision record."""
    state = ema_append(state, raw_value, config.ema_window)
    before = state
    decision, state = should_refine(state, config)
    r = math.nan
    r_c = math.nan
    history = before.smoothed_history
    if not before.stopped and len(history) > config.grace_delta:
        r = history[-1] / history[-config.grace_delta]
        if r > config.tau_step:
            r_c = history[-1] / before.checkpoint
    return state, DecisionRecord(
        interval=len(state.raw_history) - 1,
        raw=float(raw_value),
        smoothed=state.smoothed_history[-1],
        ratio_step=r,
        ratio_checkpoint=r_c,
        decision=decision,
        K=state.current_K,
    )


def replay(config, raw_series):
    """Run the controller over a full recorded series; returns records."""
    series = list(np.asarray(raw_series, dtype=float))
    if not series:
        raise ValueError("empty validation series")
    state = checkpoint_init(series[0], config)
    records = [
        DecisionRecord(
            interval=0,
            raw=series[0],
            smoothed=series[0],
            ratio_step=math.nan,
            ratio_checkpoint=math.nan,
            decision="hold",
            K=state.current_K,
        )
    ]
    for value in series[1:]:
        state, record = observe(state, config, value)
        records.append(record)
    return state, records
