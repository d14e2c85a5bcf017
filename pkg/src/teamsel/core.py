"""Shared domain types: policies, trajectories, datasets, constraint functions.

States and actions are dense nonnegative integer indices. Each environment
publishes the enumeration; everything downstream (transition counts, Q/V
tables, policy matrices) indexes into it directly.
"""

from __future__ import annotations

import gzip
import json
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "ActionProfile",
    "Step",
    "Trajectory",
    "TabularPolicy",
    "Dataset",
    "ConstraintSpec",
    "policy_prob",
    "sample_action",
    "g_return",
    "save_policy",
    "load_policy",
    "save_dataset",
    "load_dataset",
]

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ActionProfile:
    """Joint action of the ego agent and its p teammates (fixed order)."""

    ego: int
    teammates: tuple[int, ...]

    def as_tuple(self) -> tuple[int, ...]:
        return (self.ego,) + self.teammates


@dataclass(frozen=True)
class Step:
    """One transition: ego reward only, joint action recorded in full."""

    state: int
    actions: ActionProfile
    next_state: int
    reward: float


class TabularPolicy:
    """Per-state categorical distribution over one agent's actions.

    Rows must be valid probability vectors (entries in [0, 1], summing to 1
    within 1e-9). The probability matrix is copied and frozen on construction.
    """

    def __init__(self, probs: np.ndarray, name: str = "policy"):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ConfigError(f"policy '{name}': probs must be 2-D, got shape {probs.shape}")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ConfigError(f"policy '{name}': probabilities outside [0, 1]")
        row_sums = probs.sum(axis=1)
        bad = np.abs(row_sums - 1.0) > _ROW_SUM_TOL
        if np.any(bad):
            s = int(np.argmax(bad))
            raise ConfigError(
                f"policy '{name}': row {s} sums to {row_sums[s]!r}, expected 1 within {_ROW_SUM_TOL}"
            )
        probs.setflags(write=False)
        self.probs = probs
        self.name = name
        self._cum_rows: list[list[float]] | None = None

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def prob(self, state: int, action: int) -> float:
        return float(self.probs[state, action])

    def sample(self, state: int, rng) -> int:
        """Draw an action at `state` using rng.random(); deterministic given seed."""
        if self._cum_rows is None:
            self._cum_rows = [list(np.cumsum(row)) for row in self.probs]
        row = self._cum_rows[state]
        a = bisect_right(row, rng.random())
        return min(a, len(row) - 1)

    def __repr__(self) -> str:
        return f"TabularPolicy({self.name!r}, {self.num_states}x{self.num_actions})"


class Trajectory:
    """A fixed-length episode stored as dense arrays.

    Chaining (each step's next state equals the following step's state) is
    enforced by storing the state sequence once, with length L + 1.
    """

    __slots__ = ("states", "ego_actions", "teammate_actions", "rewards")

    def __init__(
        self,
        states: np.ndarray,
        ego_actions: np.ndarray,
        teammate_actions: np.ndarray,
        rewards: np.ndarray,
    ):
        states = np.asarray(states, dtype=np.int64)
        ego_actions = np.asarray(ego_actions, dtype=np.int64)
        teammate_actions = np.asarray(teammate_actions, dtype=np.int64)
        rewards = np.asarray(rewards, dtype=np.float64)
        length = ego_actions.shape[0]
        if states.shape != (length + 1,):
            raise ConfigError(
                f"trajectory: states must have shape ({length + 1},), got {states.shape}"
            )
        if teammate_actions.ndim != 2 or teammate_actions.shape[0] != length:
            raise ConfigError("trajectory: teammate_actions must have shape (L, p)")
        if rewards.shape != (length,):
            raise ConfigError("trajectory: rewards must have shape (L,)")
        for arr in (states, ego_actions, teammate_actions, rewards):
            arr.setflags(write=False)
        self.states = states
        self.ego_actions = ego_actions
        self.teammate_actions = teammate_actions
        self.rewards = rewards

    @classmethod
    def from_steps(cls, steps: Sequence[Step]) -> "Trajectory":
        if not steps:
            raise ConfigError("trajectory: empty step sequence")
        p = len(steps[0].actions.teammates)
        states = np.empty(len(steps) + 1, dtype=np.int64)
        egos = np.empty(len(steps), dtype=np.int64)
        mates = np.empty((len(steps), p), dtype=np.int64)
        rewards = np.empty(len(steps), dtype=np.float64)
        for t, step in enumerate(steps):
            if t > 0 and step.state != steps[t - 1].next_state:
                raise ConfigError(
                    f"trajectory: step {t} starts at state {step.state}, "
                    f"previous step ended at {steps[t - 1].next_state}"
                )
            states[t] = step.state
            egos[t] = step.actions.ego
            mates[t] = step.actions.teammates
            rewards[t] = step.reward
        states[-1] = steps[-1].next_state
        return cls(states, egos, mates, rewards)

    @property
    def length(self) -> int:
        return self.ego_actions.shape[0]

    @property
    def num_teammates(self) -> int:
        return self.teammate_actions.shape[1]

    def step(self, t: int) -> Step:
        return Step(
            state=int(self.states[t]),
            actions=ActionProfile(
                ego=int(self.ego_actions[t]),
                teammates=tuple(int(a) for a in self.teammate_actions[t]),
            ),
            next_state=int(self.states[t + 1]),
            reward=float(self.rewards[t]),
        )

    def steps(self) -> Iterator[Step]:
        return (self.step(t) for t in range(self.length))


class Dataset:
    """Offline trajectories tagged with the ego behavior policy that produced them.

    Only the ego component of each behavior policy is stored: teammate factors
    cancel out of every importance ratio, so they are never needed at
    evaluation time.
    """

    def __init__(
        self,
        entries: Sequence[tuple[Trajectory, str]],
        behavior_policies: dict[str, TabularPolicy],
        num_states: int,
        num_actions: int,
        p: int,
        length: int,
        env_name: str = "unknown",
        rmax: float = float("inf"),
    ):
        self.entries = list(entries)
        self.behavior_policies = dict(behavior_policies)
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.p = int(p)
        self.length = int(length)
        self.env_name = env_name
        self.rmax = float(rmax)
        self._validate()

    def _validate(self) -> None:
        for traj, bid in self.entries:
            if bid not in self.behavior_policies:
                raise ConfigError(f"dataset: behavior policy id '{bid}' not in registry")
            if traj.length != self.length:
                raise ConfigError(
                    f"dataset: trajectory of length {traj.length}, expected {self.length}"
                )
            if traj.num_teammates != self.p:
                raise ConfigError(
                    f"dataset: trajectory with {traj.num_teammates} teammates, expected {self.p}"
                )
        for bid, pol in self.behavior_policies.items():
            if pol.num_states != self.num_states or pol.num_actions != self.num_actions:
                raise ConfigError(
                    f"dataset: behavior policy '{bid}' has shape "
                    f"{pol.num_states}x{pol.num_actions}, expected "
                    f"{self.num_states}x{self.num_actions}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[Trajectory, str]]:
        return iter(self.entries)

    def trajectories(self) -> list[Trajectory]:
        return [traj for traj, _ in self.entries]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        picked = [self.entries[i] for i in indices]
        return Dataset(
            picked,
            self.behavior_policies,
            self.num_states,
            self.num_actions,
            self.p,
            self.length,
            env_name=self.env_name,
            rmax=self.rmax,
        )

    def signature(self) -> tuple[int, int, int, int]:
        return (self.num_states, self.num_actions, self.p, self.length)


class ConstraintSpec:
    """A per-step desirability score with its confidence level and threshold.

    `g` maps (state, ActionProfile) to a value in [0, gmax]. Evaluation clamps
    tiny floating excursions and raises ConfigError if a value genuinely
    leaves the range, since the nonnegativity shift depends on the bound.
    """

    def __init__(
        self,
        g: Callable[[int, ActionProfile], float],
        delta: float,
        threshold: float,
        gmax: float,
        name: str = "g",
        vectorized: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None,
    ):
        if not (0.0 < delta < 1.0):
            raise ConfigError(f"constraint '{name}': delta must be in (0, 1), got {delta}")
        if gmax <= 0.0:
            raise ConfigError(f"constraint '{name}': gmax must be positive, got {gmax}")
        self.g = g
        self.delta = float(delta)
        self.threshold = float(threshold)
        self.gmax = float(gmax)
        self.name = name
        self._vectorized = vectorized

    def value(self, state: int, actions: ActionProfile) -> float:
        raw = float(self.g(state, actions))
        return self._clamp(raw)

    def _clamp(self, raw: float) -> float:
        if raw < -_ROW_SUM_TOL or raw > self.gmax + _ROW_SUM_TOL:
            raise ConfigError(
                f"constraint '{self.name}': value {raw!r} outside [0, {self.gmax}]"
            )
        return min(max(raw, 0.0), self.gmax)

    def values(
        self, states: np.ndarray, ego_actions: np.ndarray, teammate_actions: np.ndarray
    ) -> np.ndarray:
        """Evaluate g over aligned index arrays; teammate_actions has shape (n, p)."""
        if self._vectorized is not None:
            raw = np.asarray(self._vectorized(states, ego_actions, teammate_actions), dtype=np.float64)
            if np.any(raw < -_ROW_SUM_TOL) or np.any(raw > self.gmax + _ROW_SUM_TOL):
                bad = raw[(raw < -_ROW_SUM_TOL) | (raw > self.gmax + _ROW_SUM_TOL)][0]
                raise ConfigError(
                    f"constraint '{self.name}': value {bad!r} outside [0, {self.gmax}]"
                )
            return np.clip(raw, 0.0, self.gmax)
        out = np.empty(len(states), dtype=np.float64)
        for i in range(len(states)):
            profile = ActionProfile(int(ego_actions[i]), tuple(int(a) for a in teammate_actions[i]))
            out[i] = self.value(int(states[i]), profile)
        return out

    def trajectory_values(self, traj: Trajectory) -> np.ndarray:
        return self.values(traj.states[:-1], traj.ego_actions, traj.teammate_actions)


def policy_prob(policy: TabularPolicy, state: int, action: int) -> float:
    """Probability of `action` at `state`; raises IndexError out of range."""
    if not (0 <= state < policy.num_states):
        raise IndexError(f"state {state} out of range [0, {policy.num_states})")
    if not (0 <= action < policy.num_actions):
        raise IndexError(f"action {action} out of range [0, {policy.num_actions})")
    return policy.prob(state, action)


def sample_action(policy: TabularPolicy, state: int, rng) -> int:
    """Sample an action from the policy's row at `state`."""
    if not (0 <= state < policy.num_states):
        raise IndexError(f"state {state} out of range [0, {policy.num_states})")
    return policy.sample(state, rng)


def g_return(traj: Trajectory, c: ConstraintSpec, gamma: float) -> float:
    """Discounted sum of the constraint's per-step values along a trajectory."""
    if not (0.0 < gamma <= 1.0):
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    vals = c.trajectory_values(traj)
    return float(np.sum(vals * gamma ** np.arange(traj.length)))


# ---------------------------------------------------------------------------
# Policy file format: one `state action probability` record per line, rows
# grouped by state, '#' starts a comment. Floats are written with repr() so
# they round-trip exactly.
# ---------------------------------------------------------------------------


def save_policy(path, policy: TabularPolicy) -> None:
    with open(path, "w") as f:
        f.write(f"# tabular policy: {policy.name}\n")
        f.write(f"# {policy.num_states} states, {policy.num_actions} actions\n")
        for s in range(policy.num_states):
            for a in range(policy.num_actions):
                f.write(f"{s} {a} {policy.probs[s, a]!r}\n")


def load_policy(path, name: str | None = None) -> TabularPolicy:
    records: list[tuple[int, int, float]] = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 'state action probability'")
            try:
                records.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if not records:
        raise ConfigError(f"{path}: no policy records found")
    num_states = max(r[0] for r in records) + 1
    num_actions = max(r[1] for r in records) + 1
    probs = np.zeros((num_states, num_actions), dtype=np.float64)
    for s, a, prob in records:
        probs[s, a] = prob
    if name is None:
        import os

        name = os.path.splitext(os.path.basename(str(path)))[0]
    return TabularPolicy(probs, name=name)


# ---------------------------------------------------------------------------
# Dataset file format: gzip (fixed mtime, so identical inputs give identical
# bytes) wrapping a magic line, a JSON header, and raw little-endian arrays.
# ---------------------------------------------------------------------------

_DATASET_MAGIC = b"teamsel-dataset-v1\n"


def save_dataset(path, dataset: Dataset) -> None:
    m, L, p = len(dataset), dataset.length, dataset.p
    policy_ids = sorted(dataset.behavior_policies)
    header = {
        "env": dataset.env_name,
        "num_states": dataset.num_states,
        "num_actions": dataset.num_actions,
        "p": p,
        "length": L,
        "rmax": dataset.rmax,
        "m": m,
        "policy_ids": policy_ids,
        "behavior_ids": [bid for _, bid in dataset.entries],
    }
    states = np.empty((m, L + 1), dtype=np.int32)
    egos = np.empty((m, L), dtype=np.int16)
    mates = np.empty((m, L, p), dtype=np.int16)
    rewards = np.empty((m, L), dtype=np.float64)
    for i, (traj, _) in enumerate(dataset.entries):
        states[i] = traj.states
        egos[i] = traj.ego_actions
        mates[i] = traj.teammate_actions
        rewards[i] = traj.rewards
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as f:
            f.write(_DATASET_MAGIC)
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for pid in policy_ids:
                f.write(np.ascontiguousarray(dataset.behavior_policies[pid].probs).tobytes())
            f.write(states.tobytes())
            f.write(egos.tobytes())
            f.write(mates.tobytes())
            f.write(rewards.tobytes())


def load_dataset(path) -> Dataset:
    with gzip.open(path, "rb") as f:
        magic = f.readline()
        if magic != _DATASET_MAGIC:
            raise ConfigError(f"{path}: not a teamsel dataset file")
        header = json.loads(f.readline())
        S, A = header["num_states"], header["num_actions"]
        m, L, p = header["m"], header["length"], header["p"]
        policies = {}
        for pid in header["policy_ids"]:
            buf = f.read(S * A * 8)
            probs = np.frombuffer(buf, dtype=np.float64).reshape(S, A)
            policies[pid] = TabularPolicy(probs, name=pid)
        states = np.frombuffer(f.read(m * (L + 1) * 4), dtype=np.int32).reshape(m, L + 1)
        egos = np.frombuffer(f.read(m * L * 2), dtype=np.int16).reshape(m, L)
        mates = np.frombuffer(f.read(m * L * p * 2), dtype=np.int16).reshape(m, L, p)
        rewards = np.frombuffer(f.read(m * L * 8), dtype=np.float64).reshape(m, L)
    entries = []
    for i, bid in enumerate(header["behavior_ids"]):
        traj = Trajectory(states[i], egos[i], mates[i], rewards[i])
        entries.append((traj, bid))
    return Dataset(
        entries,
        policies,
        num_states=S,
        num_actions=A,
        p=p,
        length=L,
        env_name=header["env"],
        rmax=header["rmax"],
    )
