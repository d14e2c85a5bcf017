"""Environment kernel contract shared by all simulators."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import ActionProfile
from ..errors import ConfigError


@dataclass(frozen=True)
class EnvSignature:
    """Shape card for an environment: everything validation needs to cross-check."""

    name: str
    num_states: int
    num_actions: int
    p: int
    length: int
    rmax: float

    def __post_init__(self):
        if min(self.num_states, self.num_actions, self.p, self.length) <= 0:
            raise ConfigError(f"invalid signature {self}")
        if self.rmax <= 0:
            raise ConfigError(f"invalid signature rmax {self.rmax}")


class EnvKernel:
    """Exact simulator over an enumerated state space.

    Kernels are immutable after construction and hold no episode state; the
    random source is always passed in, so independent rollouts can share one
    kernel. Episodes that terminate early sit in `terminal_state`, an
    absorbing state with zero reward, until the fixed length runs out.
    """

    signature: EnvSignature
    terminal_state: int | None = None

    def initial_state(self, rng) -> int:
        """Starting state for a fresh episode; may be stochastic (e.g. card deals)."""
        raise NotImplementedError

    def step(self, state: int, actions: ActionProfile, rng) -> tuple[int, float]:
        return self._step(state, actions.ego, actions.teammates, rng)

    def _step(self, state: int, ego: int, teammates: tuple[int, ...], rng) -> tuple[int, float]:
        raise NotImplementedError
