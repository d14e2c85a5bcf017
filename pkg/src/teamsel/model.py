"""Estimation from the training split: transition model, teammate types, Q/V tables.

The transition model is a maximum-likelihood count table over (state, joint
action) pairs. Teammate types are picked per slot by log-likelihood against
a finite library. Q/V tables for a candidate are the stationary fixed point
of the one-step desirability backup under the estimated dynamics, solved by
iteration; a sparse mixed-dynamics operator is precomputed once so many
candidates and constraints can share it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import sparse

from .core import Dataset, TabularPolicy
from .errors import ConfigError, InsufficientData, TypeInferenceFailure

__all__ = [
    "TransitionModel",
    "TeammateModel",
    "RewardModel",
    "QVTables",
    "JointDynamics",
    "estimate_transition",
    "estimate_rewards",
    "infer_types",
    "build_joint_dynamics",
    "solve_qv",
]


class TransitionModel:
    """MLE next-state distributions per (state, joint action), with a fallback.

    Unseen pairs fall back to a deterministic self-loop unless an explicit
    fallback distribution over next states is supplied.
    """

    def __init__(
        self,
        counts: dict[tuple[int, tuple[int, ...]], dict[int, int]],
        num_states: int,
        fallback: np.ndarray | None = None,
    ):
        self.counts = counts
        self.num_states = num_states
        if fallback is not None:
            fallback = np.asarray(fallback, dtype=np.float64)
            if fallback.shape != (num_states,) or abs(fallback.sum() - 1.0) > 1e-9:
                raise ConfigError("transition fallback must be a distribution over states")
        self.fallback = fallback
        self.probs: dict[tuple[int, tuple[int, ...]], tuple[np.ndarray, np.ndarray]] = {}
        for key, nxt in counts.items():
            ids = np.fromiter(nxt.keys(), dtype=np.int64, count=len(nxt))
            c = np.fromiter(nxt.values(), dtype=np.float64, count=len(nxt))
            self.probs[key] = (ids, c / c.sum())

    def row(self, state: int, joint: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        """Next-state ids and probabilities for one (state, joint action)."""
        hit = self.probs.get((state, joint))
        if hit is not None:
            return hit
        if self.fallback is None:
            return np.array([state]), np.array([1.0])
        ids = np.nonzero(self.fallback)[0]
        return ids, self.fallback[ids]

    def prob(self, state: int, joint: tuple[int, ...], next_state: int) -> float:
        ids, probs = self.row(state, joint)
        hits = probs[ids == next_state]
        return float(hits[0]) if hits.size else 0.0


class RewardModel:
    """Mean observed reward per (state, joint action); zero where unseen."""

    def __init__(self, means: dict[tuple[int, tuple[int, ...]], float], gmax: float):
        self.means = means
        self.gmax = float(gmax)

    def get(self, state: int, joint: tuple[int, ...]) -> float:
        return self.means.get((state, joint), 0.0)

    def values(self, states, ego_actions, teammate_actions) -> np.ndarray:
        out = np.empty(len(states), dtype=np.float64)
        means = self.means
        for i in range(len(states)):
            key = (int(states[i]), (int(ego_actions[i]), *map(int, teammate_actions[i])))
            out[i] = means.get(key, 0.0)
        return out


@dataclass(frozen=True)
class TeammateModel:
    """Per-slot inferred types: chosen library indices and their policies."""

    chosen: tuple[int, ...]
    policies: tuple[TabularPolicy, ...]
    scores: np.ndarray  # (p, library size) log-likelihoods

    @property
    def p(self) -> int:
        return len(self.chosen)


@dataclass
class QVTables:
    """Solved state-action and state values for one (candidate, constraint) pair."""

    q: np.ndarray  # (num_states, num_actions), clipped to [0, vmax]
    v: np.ndarray  # (num_states,)
    gamma: float
    tol: float
    iterations: int
    residual: float
    converged: bool

    def export_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["state", "action", "q", "v"])
            for s in range(self.q.shape[0]):
                for a in range(self.q.shape[1]):
                    writer.writerow([s, a, repr(float(self.q[s, a])), repr(float(self.v[s]))])


def _iter_steps(train: Dataset):
    for traj, _ in train:
        states = traj.states.tolist()
        egos = traj.ego_actions.tolist()
        mates = traj.teammate_actions.tolist()
        rewards = traj.rewards.tolist()
        for t in range(traj.length):
            yield states[t], (egos[t], *mates[t]), states[t + 1], rewards[t]


def estimate_transition(train: Dataset, fallback: np.ndarray | None = None) -> TransitionModel:
    """Count-based MLE of the transition model on the training split."""
    if len(train) == 0:
        raise InsufficientData("cannot estimate a transition model from an empty dataset")
    counts: dict[tuple[int, tuple[int, ...]], dict[int, int]] = {}
    for s, joint, nxt, _ in _iter_steps(train):
        row = counts.setdefault((s, joint), {})
        row[nxt] = row.get(nxt, 0) + 1
    return TransitionModel(counts, train.num_states, fallback=fallback)


def estimate_rewards(train: Dataset) -> RewardModel:
    """Mean observed ego reward per (state, joint action) on the training split."""
    if len(train) == 0:
        raise InsufficientData("cannot estimate rewards from an empty dataset")
    sums: dict[tuple[int, tuple[int, ...]], float] = {}
    nums: dict[tuple[int, tuple[int, ...]], int] = {}
    for s, joint, _, rew in _iter_steps(train):
        key = (s, joint)
        sums[key] = sums.get(key, 0.0) + rew
        nums[key] = nums.get(key, 0) + 1
    means = {key: sums[key] / nums[key] for key in sums}
    return RewardModel(means, gmax=train.rmax)


def infer_types(train: Dataset, type_library: list[TabularPolicy], p: int) -> TeammateModel:
    """Pick, independently per teammate slot, the library policy with the highest
    log-likelihood of the observed actions. A type that assigns probability zero
    to any observed action scores -inf and is disqualified outright."""
    if not type_library:
        raise ConfigError("type library is empty")
    if len(train) == 0:
        raise InsufficientData("cannot infer teammate types from an empty dataset")
    if p != train.p:
        raise ConfigError(f"dataset has {train.p} teammate slots, expected {p}")

    states = np.concatenate([traj.states[:-1] for traj in train.trajectories()])
    mates = np.concatenate([traj.teammate_actions for traj in train.trajectories()], axis=0)

    scores = np.empty((p, len(type_library)), dtype=np.float64)
    for slot in range(p):
        acts = mates[:, slot]
        for u, pol in enumerate(type_library):
            probs = pol.probs[states, acts]
            if np.any(probs == 0.0):
                scores[slot, u] = -np.inf
            else:
                scores[slot, u] = float(np.log(probs).sum())
        if np.all(np.isinf(scores[slot])):
            raise TypeInferenceFailure(
                f"teammate slot {slot}: no library type supports the observed actions"
            )
    chosen = tuple(int(np.argmax(scores[slot])) for slot in range(p))
    return TeammateModel(
        chosen=chosen,
        policies=tuple(type_library[u] for u in chosen),
        scores=scores,
    )


class JointDynamics:
    """Estimated dynamics with the inferred teammates marginalized out.

    Holds a sparse row-stochastic operator M of shape (S * A_ego, S) where
    M[(s, a), s'] sums the transition row over teammate actions weighted by
    their inferred policies, plus the machinery to average any per-step value
    function the same way. Building it is the expensive part of a Q/V solve,
    so one instance is shared across candidates and constraints.
    """

    def __init__(
        self,
        t_hat: TransitionModel,
        mates: TeammateModel,
        num_states: int,
        num_actions: int,
    ):
        self.num_states = num_states
        self.num_actions = num_actions
        self._mate_probs = [pol.probs for pol in mates.policies]
        self.matrix = self._build(t_hat)

    def _mate_weight(self, state: int, combo: tuple[int, ...]) -> float:
        w = 1.0
        for k, a in enumerate(combo):
            w *= self._mate_probs[k][state, a]
        return w

    def _build(self, t_hat: TransitionModel) -> sparse.csr_matrix:
        S, A = self.num_states, self.num_actions
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        seen_mass = np.zeros((S, A), dtype=np.float64)
        for (s, joint), (ids, probs) in t_hat.probs.items():
            a_ego = joint[0]
            w = self._mate_weight(s, joint[1:])
            if w == 0.0:
                continue
            seen_mass[s, a_ego] += w
            r = s * A + a_ego
            rows.extend([r] * len(ids))
            cols.extend(ids.tolist())
            vals.extend((w * probs).tolist())
        # Remaining teammate-action mass lands on the fallback distribution.
        leftover = np.clip(1.0 - seen_mass, 0.0, None)
        if t_hat.fallback is None:
            s_idx, a_idx = np.nonzero(leftover > 1e-15)
            rows.extend((s_idx * A + a_idx).tolist())
            cols.extend(s_idx.tolist())
            vals.extend(leftover[s_idx, a_idx].tolist())
        else:
            nz = np.nonzero(t_hat.fallback)[0]
            fvals = t_hat.fallback[nz]
            s_idx, a_idx = np.nonzero(leftover > 1e-15)
            for s, a in zip(s_idx.tolist(), a_idx.tolist()):
                r = s * A + a
                rows.extend([r] * len(nz))
                cols.extend(nz.tolist())
                vals.extend((leftover[s, a] * fvals).tolist())
        m = sparse.coo_matrix((vals, (rows, cols)), shape=(S * A, S))
        return m.tocsr()

    def mean_values(self, value_fn) -> np.ndarray:
        """Average a per-step value function over the inferred teammate actions.

        value_fn(states, ego_actions, teammate_actions) must accept aligned
        arrays and return one value per row; both ConstraintSpec.values and
        RewardModel.values fit.
        """
        S, A = self.num_states, self.num_actions
        p = len(self._mate_probs)
        num_mate_actions = self._mate_probs[0].shape[1] if p else 0
        states = np.arange(S, dtype=np.int64)
        out = np.zeros((S, A), dtype=np.float64)
        for combo in product(range(num_mate_actions), repeat=p):
            w = np.ones(S, dtype=np.float64)
            for k, a in enumerate(combo):
                w *= self._mate_probs[k][:, a]
            if not np.any(w):
                continue
            mates_tiled = np.tile(np.array(combo, dtype=np.int64), (S, 1))
            for a_ego in range(A):
                vals = value_fn(states, np.full(S, a_ego, dtype=np.int64), mates_tiled)
                out[:, a_ego] += w * vals
        return out


def build_joint_dynamics(
    t_hat: TransitionModel, mates: TeammateModel, num_states: int, num_actions: int
) -> JointDynamics:
    return JointDynamics(t_hat, mates, num_states, num_actions)


def solve_qv(
    candidate: TabularPolicy,
    g,
    t_hat: TransitionModel,
    mates: TeammateModel,
    gamma: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    vmax: float | None = None,
    dynamics: JointDynamics | None = None,
) -> QVTables:
    """Solve the candidate's Q/V tables for one per-step value function.

    `g` needs a `.values(states, egos, mates)` batch evaluator and a `.gmax`
    bound (ConstraintSpec or RewardModel). Iterates the stationary backup
    from zero until the max-norm update drops below `tol`; if `max_iter` is
    hit first, the best iterate is returned with a warning flag set.
    """
    if not (0.0 < gamma < 1.0):
        raise ConfigError(f"solve_qv: gamma must be in (0, 1), got {gamma}")
    if tol <= 0.0:
        raise ConfigError(f"solve_qv: tol must be positive, got {tol}")
    S, A = candidate.num_states, candidate.num_actions
    if dynamics is None:
        dynamics = JointDynamics(t_hat, mates, S, A)
    if vmax is None:
        vmax = g.gmax / (1.0 - gamma)

    r_bar = dynamics.mean_values(g.values).reshape(-1)
    M = dynamics.matrix
    pol = candidate.probs

    q = np.zeros(S * A, dtype=np.float64)
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        v = np.einsum("sa,sa->s", pol, q.reshape(S, A))
        q_next = r_bar + gamma * (M @ v)
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual < tol:
            break
    converged = residual < tol
    if not converged:
        warnings.warn(
            f"solve_qv: stopped after {max_iter} iterations with residual {residual:.3e}",
            RuntimeWarning,
        )
    q = np.clip(q.reshape(S, A), 0.0, vmax)
    v = np.clip(np.einsum("sa,sa->s", pol, q), 0.0, vmax)
    return QVTables(
        q=q,
        v=v,
        gamma=gamma,
        tol=tol,
        iterations=iterations,
        residual=residual,
        converged=converged,
    )
