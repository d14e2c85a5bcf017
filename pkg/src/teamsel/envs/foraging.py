"""Level-based foraging on a small grid with a fixed per-seed layout.

Players move in four directions or load an adjacent food; a food is
collected when the levels of all players loading next to it sum to at least
its own level, paying the food level as a shared reward. The layout (start
cells, food cells, levels) is frozen at construction, so the dynamic state
is just the player positions plus which foods remain.
"""

from __future__ import annotations

import random

from ..errors import ConfigError
from .base import EnvKernel, EnvSignature

UP, DOWN, LEFT, RIGHT, LOAD = 0, 1, 2, 3, 4
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


class LevelBasedForaging(EnvKernel):
    def __init__(self, grid: int, n: int, m: int, L: int, layout_seed: int = 0):
        if grid < 2:
            raise ConfigError(f"level_based_foraging: grid too small, got {grid}")
        if n < 2 or m < 1:
            raise ConfigError("level_based_foraging: need n >= 2 players and m >= 1 foods")
        if grid * grid < n + m:
            raise ConfigError(
                f"level_based_foraging: {grid}x{grid} grid cannot place {n + m} entities"
            )
        if L < 1:
            raise ConfigError(f"level_based_foraging: episode length must be positive, got {L}")
        self.grid = grid
        self.n = n
        self.m = m

        rng = random.Random(layout_seed)
        cells = rng.sample(range(grid * grid), n + m)
        self.start_positions = tuple(cells[:n])
        self.food_cells = tuple(cells[n:])
        self.player_levels = tuple(rng.choice((1, 2)) for _ in range(n))
        cap = min(3, sum(self.player_levels))
        self.food_levels = tuple(rng.randint(1, cap) for _ in range(m))

        num_cells = grid * grid
        num_states = num_cells**n * (1 << m) + 1
        self.terminal_state = num_states - 1
        self.signature = EnvSignature(
            name="level_based_foraging",
            num_states=num_states,
            num_actions=5,
            p=n - 1,
            length=L,
            rmax=float(sum(self.food_levels)),
        )
        self._num_cells = num_cells
        self._full_mask = (1 << m) - 1

    def encode(self, positions, mask: int) -> int:
        s = 0
        for pos in positions:
            s = s * self._num_cells + pos
        return s * (self._full_mask + 1) + mask

    def decode(self, state: int) -> tuple[list[int], int]:
        mask = state % (self._full_mask + 1)
        state //= self._full_mask + 1
        positions = [0] * self.n
        for i in range(self.n - 1, -1, -1):
            positions[i] = state % self._num_cells
            state //= self._num_cells
        return positions, mask

    def initial_state(self, rng) -> int:
        return self.encode(self.start_positions, self._full_mask)

    def _adjacent(self, pos: int, cell: int) -> bool:
        r1, c1 = divmod(pos, self.grid)
        r2, c2 = divmod(cell, self.grid)
        return abs(r1 - r2) + abs(c1 - c2) == 1

    def _step(self, state: int, ego: int, teammates: tuple[int, ...], rng) -> tuple[int, float]:
        if state == self.terminal_state:
            return state, 0.0
        positions, mask = self.decode(state)
        actions = (ego,) + teammates

        # Loading resolves against pre-move positions.
        reward = 0.0
        collected = 0
        for f in range(self.m):
            if not mask & (1 << f):
                continue
            cell = self.food_cells[f]
            strength = sum(
                self.player_levels[i]
                for i in range(self.n)
                if actions[i] == LOAD and self._adjacent(positions[i], cell)
            )
            if strength >= self.food_levels[f] and strength > 0:
                collected |= 1 << f
                reward += self.food_levels[f]

        occupied = set(positions)
        targets = []
        for i in range(self.n):
            a = actions[i]
            pos = positions[i]
            if a == LOAD:
                targets.append(pos)
                continue
            row, col = divmod(pos, self.grid)
            dr, dc = _MOVES[a]
            row, col = row + dr, col + dc
            if not (0 <= row < self.grid and 0 <= col < self.grid):
                targets.append(pos)
                continue
            tgt = row * self.grid + col
            blocked = tgt in occupied or any(
                mask & (1 << f) and self.food_cells[f] == tgt for f in range(self.m)
            )
            targets.append(pos if blocked else tgt)
        # Two players contending for one cell both stay put.
        proposals = list(targets)
        for i in range(self.n):
            if proposals[i] != positions[i] and proposals.count(proposals[i]) > 1:
                targets[i] = positions[i]

        new_mask = mask & ~collected
        if new_mask == 0:
            return self.terminal_state, reward
        return self.encode(targets, new_mask), reward


def level_based_foraging(grid: int, n: int, m: int, L: int, layout_seed: int = 0) -> LevelBasedForaging:
    """Build a foraging kernel; the reproduction instance is (5, 2, 2, 25)."""
    return LevelBasedForaging(grid, n, m, L, layout_seed=layout_seed)
