"""Exact simulators, their desirability functions, and dataset collection."""

from .base import EnvKernel, EnvSignature
from .blackjack import BlackjackCoop, blackjack_coop
from .chain import ChainWorld, chain_world
from .collect import collect_dataset
from .foraging import LevelBasedForaging, level_based_foraging
from .gfunctions import builtin_g

__all__ = [
    "EnvKernel",
    "EnvSignature",
    "ChainWorld",
    "chain_world",
    "BlackjackCoop",
    "blackjack_coop",
    "LevelBasedForaging",
    "level_based_foraging",
    "builtin_g",
    "collect_dataset",
]
