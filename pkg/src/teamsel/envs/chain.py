"""Chain World: a k-agent coordination game on a line of states.

All agents picking 0 advances the chain one state; all picking 1 resets to
the start for a small reward; any disagreement stalls. Reaching the last
state pays the big reward and restarts, so episodes run a fixed length.
"""

from __future__ import annotations

from ..errors import ConfigError
from .base import EnvKernel, EnvSignature

_STAY, _ADVANCE, _RESET = 0, 1, 2


class ChainWorld(EnvKernel):
    def __init__(self, num_chain_states: int, k: int, r: float, R: float, L: int, env_noise: float):
        if num_chain_states < 2:
            raise ConfigError(f"chain_world: need at least 2 states, got {num_chain_states}")
        if k < 2:
            raise ConfigError(f"chain_world: need at least 2 agents, got {k}")
        if not (0.0 <= env_noise < 1.0):
            raise ConfigError(f"chain_world: env_noise must be in [0, 1), got {env_noise}")
        if L < 1:
            raise ConfigError(f"chain_world: episode length must be positive, got {L}")
        if r < 0 or R < 0:
            raise ConfigError("chain_world: rewards must be nonnegative")
        # With noise, an all-1 step can be diverted into the end state and
        # collect both the reset reward and the end bonus on the same step.
        rmax = r + R if env_noise > 0 else max(r, R)
        self.signature = EnvSignature(
            name="chain_world",
            num_states=num_chain_states,
            num_actions=2,
            p=k - 1,
            length=L,
            rmax=rmax,
        )
        self.terminal_state = None
        self.r = float(r)
        self.R = float(R)
        self.env_noise = float(env_noise)
        self._end = num_chain_states - 1

    def initial_state(self, rng) -> int:
        return 0

    def _step(self, state: int, ego: int, teammates: tuple[int, ...], rng) -> tuple[int, float]:
        if ego == 0:
            all0 = all(a == 0 for a in teammates)
            all1 = False
        else:
            all0 = False
            all1 = all(a == 1 for a in teammates)
        if all0:
            move = _ADVANCE
        elif all1:
            move = _RESET
        else:
            move = _STAY
        if self.env_noise > 0.0 and rng.random() < self.env_noise:
            move = int(rng.random() * 3.0)
        reward = self.r if all1 else 0.0
        if move == _ADVANCE:
            nxt = state + 1
            if nxt >= self._end:
                reward += self.R
                nxt = 0
        elif move == _RESET:
            nxt = 0
        else:
            nxt = state
        return nxt, reward


def chain_world(
    num_chain_states: int,
    k: int,
    r: float,
    R: float,
    L: int,
    env_noise: float = 0.1,
) -> ChainWorld:
    """Build a Chain World kernel; the reproduction instance is (10, 3, 10, 100, 200)."""
    return ChainWorld(num_chain_states, k, r, R, L, env_noise)
