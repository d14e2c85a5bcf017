"""Per-trajectory off-policy estimates of a policy's expected desirability.

All importance ratios are ego-only: under independent, stationary teammates
the teammate factors in the joint ratio cancel, so the known ego behavior
policy is all that is needed. Running weights are kept in linear space; once
a weight underflows to zero the remaining correction terms vanish exactly,
which is the mathematically correct limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import ConstraintSpec, TabularPolicy, Trajectory, g_return
from .errors import ConfigError, SupportViolation
from .model import QVTables

__all__ = [
    "EstimateBatch",
    "is_estimate",
    "pdis_estimate",
    "dr_estimate",
    "shift_nonneg",
    "clip_batch",
]


@dataclass(frozen=True)
class EstimateBatch:
    """A vector of per-trajectory estimates plus its shift/clip bookkeeping.

    The shift constant lives here so a lower bound computed on shifted values
    can never forget to subtract it.
    """

    values: np.ndarray
    kind: str
    shift: float = 0.0
    clip_range: tuple[float, float] = (-np.inf, np.inf)
    final_weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.shift > 0.0 and np.any(values < 0.0):
            raise ConfigError("shifted estimate batch contains negative values")

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["traj_index", "value", "weight_final"])
            for i, v in enumerate(self.values):
                w = "" if self.final_weights is None else repr(float(self.final_weights[i]))
                writer.writerow([i, repr(float(v)), w])


def _ego_ratios(
    traj: Trajectory, behavior_ego: TabularPolicy, candidate_ego: TabularPolicy
) -> np.ndarray:
    states = traj.states[:-1]
    egos = traj.ego_actions
    b = behavior_ego.probs[states, egos]
    if np.any(b == 0.0):
        t = int(np.argmax(b == 0.0))
        raise SupportViolation(
            f"behavior policy '{behavior_ego.name}' assigns probability 0 to observed "
            f"action {int(egos[t])} at state {int(states[t])} (step {t})"
        )
    return candidate_ego.probs[states, egos] / b


_WEIGHT_CAP = 1e300


def _running_weights(ratios: np.ndarray) -> np.ndarray:
    """Cumulative ratio products, with overflow pinned to a huge finite value.

    An overflowed weight makes the estimate worthless-large either way; keeping
    it finite avoids 0 * inf turning whole batches into NaN before clipping.
    """
    with np.errstate(over="ignore"):
        w = np.cumprod(ratios)
    np.clip(w, None, _WEIGHT_CAP, out=w)
    return w


def _pdis_core(values: np.ndarray, ratios: np.ndarray, gamma_pows: np.ndarray) -> float:
    w = _running_weights(ratios)
    return float(np.dot(gamma_pows, values * w))


def _dr_core(
    values: np.ndarray,
    ratios: np.ndarray,
    q_sa: np.ndarray,
    v_s: np.ndarray,
    gamma_pows: np.ndarray,
) -> float:
    w = _running_weights(ratios)
    w_prev = np.empty_like(w)
    w_prev[0] = 1.0  # empty product before the first step
    w_prev[1:] = w[:-1]
    terms = w * (values - q_sa) + w_prev * v_s
    return float(np.dot(gamma_pows, terms))


def is_estimate(
    traj: Trajectory,
    behavior_ego: TabularPolicy,
    candidate_ego: TabularPolicy,
    g: ConstraintSpec,
    gamma: float,
) -> float:
    """Full-trajectory importance-sampling estimate of the candidate's g-return."""
    ratios = _ego_ratios(traj, behavior_ego, candidate_ego)
    return g_return(traj, g, gamma) * float(_running_weights(ratios)[-1])


def pdis_estimate(
    traj: Trajectory,
    behavior_ego: TabularPolicy,
    candidate_ego: TabularPolicy,
    g: ConstraintSpec,
    gamma: float,
) -> float:
    """Per-decision importance sampling: each step weighted by ratios up to it."""
    ratios = _ego_ratios(traj, behavior_ego, candidate_ego)
    values = g.trajectory_values(traj)
    gamma_pows = gamma ** np.arange(traj.length)
    return _pdis_core(values, ratios, gamma_pows)


def dr_estimate(
    traj: Trajectory,
    behavior_ego: TabularPolicy,
    candidate_ego: TabularPolicy,
    g: ConstraintSpec,
    qv: QVTables,
    gamma: float,
) -> float:
    """Doubly-robust estimate: per-decision weights with Q/V control variates.

    With q and v identically zero this reduces exactly to the per-decision
    importance-sampling estimate.
    """
    ratios = _ego_ratios(traj, behavior_ego, candidate_ego)
    values = g.trajectory_values(traj)
    states = traj.states[:-1]
    q_sa = qv.q[states, traj.ego_actions]
    v_s = qv.v[states]
    gamma_pows = gamma ** np.arange(traj.length)
    return _dr_core(values, ratios, q_sa, v_s, gamma_pows)


def shift_nonneg(batch: EstimateBatch, L: int, gmax: float, vmax: float) -> EstimateBatch:
    """Add the worst-case constant L*(gmax + 2*vmax) to make every value nonnegative.

    Valid whenever per-step values are within [0, gmax] and the Q/V tables
    were clipped into [0, vmax]; the shift is recorded so bounds subtract it.
    """
    if batch.shift != 0.0:
        raise ConfigError("estimate batch is already shifted")
    if not np.isfinite(gmax) or not np.isfinite(vmax) or gmax < 0 or vmax < 0:
        raise ConfigError(f"shift_nonneg: invalid bounds gmax={gmax}, vmax={vmax}")
    a = L * (gmax + 2.0 * vmax)
    return EstimateBatch(
        values=batch.values + a,
        kind=batch.kind,
        shift=a,
        clip_range=batch.clip_range,
        final_weights=batch.final_weights,
    )


def clip_batch(batch: EstimateBatch, v_m: float, v_M: float) -> EstimateBatch:
    """Clamp every estimate into [v_m, v_M]. Must happen before any shift."""
    if v_m > v_M:
        raise ConfigError(f"clip range is empty: [{v_m}, {v_M}]")
    if batch.shift != 0.0:
        raise ConfigError("estimates must be clipped before shifting, not after")
    return EstimateBatch(
        values=np.clip(batch.values, v_m, v_M),
        kind=batch.kind,
        shift=0.0,
        clip_range=(v_m, v_M),
        final_weights=batch.final_weights,
    )
