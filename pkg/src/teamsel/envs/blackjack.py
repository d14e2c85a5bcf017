"""Two-player cooperative Blackjack against the dealer.

Both players must pick the same action for the game to advance: matched hits
draw one card each, matched sticks hand the turn to the dealer and resolve
the game. Mismatched actions burn a turn for a small consolation reward.
Everything is visible, so the state is both hand values (with usable-ace
flags) plus the dealer's shown card. Draws are with replacement.
"""

from __future__ import annotations

from ..errors import ConfigError
from .base import EnvKernel, EnvSignature

# 2-9, four ten-valued ranks, ace (counted 11 while usable)
_CARDS = (2, 3, 4, 5, 6, 7, 8, 9, 10, 10, 10, 10, 11)

_HAND_LO, _HAND_HI = 4, 21
_HAND_SLOTS = (_HAND_HI - _HAND_LO + 1) * 2  # (sum, usable-ace) pairs
_DEALER_SLOTS = 10  # shown card value 2..11

STICK, HIT = 0, 1


def _add_card(total: int, usable: bool, card: int) -> tuple[int, bool]:
    if card == 11:
        if total + 11 <= 21:
            return total + 11, True
        total += 1
    else:
        total += card
    if total > 21 and usable:
        return total - 10, False
    return total, usable


class BlackjackCoop(EnvKernel):
    def __init__(self, L: int, r: float, R: float, win_reward: float | None = None):
        if L < 1:
            raise ConfigError(f"blackjack_coop: need at least one turn, got {L}")
        if r < 0 or R < 0:
            raise ConfigError("blackjack_coop: rewards must be nonnegative")
        # Payout when the game resolves by comparison rather than a dealer
        # bust: winner takes half the bust bonus, ties and losses pay zero.
        self.win_reward = R / 2.0 if win_reward is None else float(win_reward)
        num_states = _HAND_SLOTS * _HAND_SLOTS * _DEALER_SLOTS + 1
        self.signature = EnvSignature(
            name="blackjack_coop",
            num_states=num_states,
            num_actions=2,
            p=1,
            length=L,
            rmax=max(r, R, self.win_reward),
        )
        self.terminal_state = num_states - 1
        self.r = float(r)
        self.R = float(R)

    @staticmethod
    def encode(ego_sum: int, ego_ace: bool, mate_sum: int, mate_ace: bool, dealer: int) -> int:
        ei = (ego_sum - _HAND_LO) * 2 + int(ego_ace)
        mi = (mate_sum - _HAND_LO) * 2 + int(mate_ace)
        return (ei * _HAND_SLOTS + mi) * _DEALER_SLOTS + (dealer - 2)

    @staticmethod
    def decode(state: int) -> tuple[int, bool, int, bool, int]:
        dealer = state % _DEALER_SLOTS + 2
        state //= _DEALER_SLOTS
        mi = state % _HAND_SLOTS
        ei = state // _HAND_SLOTS
        return (
            ei // 2 + _HAND_LO,
            bool(ei % 2),
            mi // 2 + _HAND_LO,
            bool(mi % 2),
            dealer,
        )

    def initial_state(self, rng) -> int:
        es, ea = 0, False
        for _ in range(2):
            es, ea = _add_card(es, ea, _CARDS[int(rng.random() * 13)])
        ms, ma = 0, False
        for _ in range(2):
            ms, ma = _add_card(ms, ma, _CARDS[int(rng.random() * 13)])
        dealer = _CARDS[int(rng.random() * 13)]
        return self.encode(es, ea, ms, ma, dealer)

    def _step(self, state: int, ego: int, teammates: tuple[int, ...], rng) -> tuple[int, float]:
        if state == self.terminal_state:
            return state, 0.0
        mate = teammates[0]
        if ego != mate:
            return state, self.r
        es, ea, ms, ma, dealer = self.decode(state)
        if ego == HIT:
            es, ea = _add_card(es, ea, _CARDS[int(rng.random() * 13)])
            ms, ma = _add_card(ms, ma, _CARDS[int(rng.random() * 13)])
            if es > 21 or ms > 21:
                return self.terminal_state, 0.0
            return self.encode(es, ea, ms, ma, dealer), 0.0
        # Both stick: dealer reveals and draws to 17, then hands are compared.
        ds, da = dealer, dealer == 11
        while ds < 17:
            ds, da = _add_card(ds, da, _CARDS[int(rng.random() * 13)])
        if ds > 21:
            return self.terminal_state, self.R
        if max(es, ms) > ds:
            return self.terminal_state, self.win_reward
        return self.terminal_state, 0.0


def blackjack_coop(L: int, r: float, R: float, win_reward: float | None = None) -> BlackjackCoop:
    """Build the cooperative Blackjack kernel; the reproduction instance is (10, 0.5, 5)."""
    return BlackjackCoop(L, r, R, win_reward=win_reward)
