"""Offline dataset collection: roll out known policies in an exact simulator."""

from __future__ import annotations

import random

import numpy as np

from ..core import Dataset, TabularPolicy, Trajectory
from ..errors import ConfigError
from .base import EnvKernel


def _check_policy(env: EnvKernel, policy: TabularPolicy, role: str) -> None:
    sig = env.signature
    if policy.num_states != sig.num_states or policy.num_actions != sig.num_actions:
        raise ConfigError(
            f"{role} policy '{policy.name}' is {policy.num_states}x{policy.num_actions}, "
            f"environment '{sig.name}' needs {sig.num_states}x{sig.num_actions}"
        )


def collect_dataset(
    env: EnvKernel,
    ego: TabularPolicy,
    teammates: list[TabularPolicy],
    m: int,
    seed: int,
    behavior_id: str | None = None,
) -> Dataset:
    """Collect m fixed-length episodes under the given behavior and teammates.

    Teammate actions are sampled independently per step from their own
    policies. Each trajectory is tagged with the ego behavior policy id;
    identical seeds reproduce the dataset bit for bit.
    """
    sig = env.signature
    _check_policy(env, ego, "behavior")
    if len(teammates) != sig.p:
        raise ConfigError(f"expected {sig.p} teammate policies, got {len(teammates)}")
    for mate in teammates:
        _check_policy(env, mate, "teammate")
    if m < 0:
        raise ConfigError(f"episode count must be nonnegative, got {m}")

    bid = behavior_id if behavior_id is not None else ego.name
    rng = random.Random(seed)
    L, p = sig.length, sig.p
    reward_cap = sig.rmax + 1e-9
    step = env._step

    entries = []
    for _ in range(m):
        states = np.empty(L + 1, dtype=np.int64)
        egos = np.empty(L, dtype=np.int64)
        mates = np.empty((L, p), dtype=np.int64)
        rewards = np.empty(L, dtype=np.float64)
        s = env.initial_state(rng)
        for t in range(L):
            a = ego.sample(s, rng)
            joint = tuple(mate.sample(s, rng) for mate in teammates)
            nxt, rew = step(s, a, joint, rng)
            if not (0.0 <= rew <= reward_cap):
                raise ConfigError(
                    f"environment '{sig.name}' produced reward {rew} outside [0, {sig.rmax}]"
                )
            states[t] = s
            egos[t] = a
            mates[t] = joint
            rewards[t] = rew
            s = nxt
        states[L] = s
        entries.append((Trajectory(states, egos, mates, rewards), bid))

    return Dataset(
        entries,
        {bid: ego},
        num_states=sig.num_states,
        num_actions=sig.num_actions,
        p=p,
        length=L,
        env_name=sig.name,
        rmax=sig.rmax,
    )
