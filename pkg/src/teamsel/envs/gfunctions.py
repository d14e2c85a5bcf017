"""Built-in desirability functions for the shipped environments."""

from __future__ import annotations

import math

import numpy as np

from ..core import ActionProfile, ConstraintSpec
from ..errors import ConfigError
from .base import EnvKernel

_EXP_NEG1 = math.exp(-1.0)


def builtin_g(env: EnvKernel, delta: float, threshold: float) -> ConstraintSpec:
    """Constraint spec matching the environment's standard desirability measure.

    Chain World scores exp(-x) with x = 0 iff every agent picked the same
    action; Blackjack scores the two players' agreement; foraging scores the
    per-step reward itself. Padded steps at a terminal state always score 0.
    """
    name = env.signature.name
    if name == "chain_world":
        return _chain_agreement(delta, threshold)
    if name == "blackjack_coop":
        return _blackjack_agreement(env, delta, threshold)
    if name == "level_based_foraging":
        return _foraging_reward(env, delta, threshold)
    raise ConfigError(f"no builtin desirability function for environment '{name}'")


def _chain_agreement(delta: float, threshold: float) -> ConstraintSpec:
    def g(state: int, actions: ActionProfile) -> float:
        first = actions.ego
        return 1.0 if all(a == first for a in actions.teammates) else _EXP_NEG1

    def g_vec(states, egos, mates) -> np.ndarray:
        same = np.all(mates == egos[:, None], axis=1)
        return np.where(same, 1.0, _EXP_NEG1)

    return ConstraintSpec(g, delta, threshold, gmax=1.0, name="agreement", vectorized=g_vec)


def _blackjack_agreement(env: EnvKernel, delta: float, threshold: float) -> ConstraintSpec:
    terminal = env.terminal_state

    def g(state: int, actions: ActionProfile) -> float:
        if state == terminal:
            return 0.0
        return 1.0 if actions.ego == actions.teammates[0] else 0.0

    def g_vec(states, egos, mates) -> np.ndarray:
        agree = (mates[:, 0] == egos) & (states != terminal)
        return agree.astype(np.float64)

    return ConstraintSpec(g, delta, threshold, gmax=1.0, name="agreement", vectorized=g_vec)


def _foraging_reward(env: EnvKernel, delta: float, threshold: float) -> ConstraintSpec:
    # Foraging dynamics are deterministic, so the per-step reward is a pure
    # function of (state, joint action) and can be read off the kernel.
    def g(state: int, actions: ActionProfile) -> float:
        return env._step(state, actions.ego, actions.teammates, None)[1]

    return ConstraintSpec(
        g, delta, threshold, gmax=env.signature.rmax, name="step_reward"
    )
