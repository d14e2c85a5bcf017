"""End-to-end reliable policy selection from one offline dataset.

Pipeline: split the data, fit the transition model and teammate types on the
training side, solve each candidate's Q/V tables, turn the validation side
into per-trajectory estimates, lower-bound each candidate's constraint
performance with the configured concentration inequality at delta/ell (a
union bound over the ell candidates), and return the reliable candidate with
the best estimated return, or NoSolution when none qualifies.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

import numpy as np

from .bounds import BoundConfig, bernstein_lower, tstudent_lower
from .core import ConstraintSpec, Dataset, TabularPolicy
from .errors import ConfigError, InsufficientData
from .model import (
    JointDynamics,
    QVTables,
    RewardModel,
    TeammateModel,
    TransitionModel,
    build_joint_dynamics,
    estimate_rewards,
    estimate_transition,
    infer_types,
    solve_qv,
)
from .ope import (
    EstimateBatch,
    _dr_core,
    _ego_ratios,
    _pdis_core,
    _running_weights,
    clip_batch,
    shift_nonneg,
)

__all__ = [
    "SeldonianConfig",
    "Decision",
    "ModelArtifacts",
    "split_dataset",
    "run_seldonian",
    "run_seldonian_multi",
    "prepare_artifacts",
    "estimate_return",
]

ESTIMATORS = ("dr", "pdis", "is")
BOUNDS = ("bernstein", "student_t")


@dataclass
class SeldonianConfig:
    """Everything one selection run needs besides the dataset itself."""

    constraints: list[ConstraintSpec]
    candidates: list[TabularPolicy]
    type_library: list[TabularPolicy]
    p: int
    split_ratio: float
    estimator: str = "dr"
    bound: str = "student_t"
    gamma: float = 0.99
    clip_range: tuple[float, float] | None = None  # None: the worst-case envelope
    seed: int = 0
    caps: float | None = None  # Bernstein cap; None: the shift constant
    literal_t_formula: bool = False
    vmax: float | None = None  # None: gmax/(1-gamma) per constraint
    tol: float = 1e-8
    max_iter: int = 100_000
    unreliable_baseline: bool = False

    def __post_init__(self):
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError(f"split ratio must be in (0, 1), got {self.split_ratio}")
        if not self.candidates:
            raise ConfigError("candidate list is empty")
        if not self.constraints:
            raise ConfigError("constraint list is empty")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator '{self.estimator}'")
        if self.bound not in BOUNDS:
            raise ConfigError(f"unknown bound '{self.bound}'")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")

    def constraint_vmax(self, c: ConstraintSpec) -> float:
        return self.vmax if self.vmax is not None else c.gmax / (1.0 - self.gamma)


@dataclass
class Decision:
    """Outcome of one selection run, plus the diagnostics behind it."""

    chosen_index: int | None
    chosen_name: str | None
    estimated_return: float | None
    reliable: tuple[int, ...]
    alphas: np.ndarray  # (num candidates, num constraints) lower bounds
    returns: dict[int, float]
    inferred_types: tuple[int, ...] | None
    bound_deltas: tuple[float, ...]  # effective confidence per constraint (delta_j / ell)
    estimator: str
    bound: str
    split_sizes: tuple[int, int]

    @property
    def is_solution(self) -> bool:
        return self.chosen_index is not None

    def report(self) -> str:
        lines = [f"estimator={self.estimator} bound={self.bound}"]
        lines.append(f"split: {self.split_sizes[0]} train / {self.split_sizes[1]} validation")
        if self.inferred_types is not None:
            lines.append(f"inferred teammate types: {list(self.inferred_types)}")
        for i in range(self.alphas.shape[0]):
            alpha_txt = ", ".join(f"{a:.4g}" for a in self.alphas[i])
            tag = " (reliable)" if i in self.reliable else ""
            lines.append(f"candidate {i}: alpha=[{alpha_txt}]{tag}")
        if self.is_solution:
            lines.append(
                f"selected candidate {self.chosen_index} ({self.chosen_name}), "
                f"estimated return {self.estimated_return:.6g}"
            )
        else:
            lines.append("no solution: no candidate could be certified reliable")
        return "\n".join(lines)

    def record(self) -> dict:
        return {
            "decision": "policy" if self.is_solution else "no_solution",
            "chosen": "" if self.chosen_index is None else self.chosen_index,
            "chosen_name": self.chosen_name or "",
            "estimated_return": self.estimated_return,
            "estimator": self.estimator,
            "bound": self.bound,
            "reliable": list(self.reliable),
            "alphas": [[float(a) for a in row] for row in self.alphas],
            "inferred_types": None if self.inferred_types is None else list(self.inferred_types),
            "bound_deltas": list(self.bound_deltas),
        }


@dataclass
class ModelArtifacts:
    """Training-side estimates shared by every estimator/bound combination."""

    train: Dataset
    val: Dataset
    t_hat: TransitionModel
    types: TeammateModel
    reward_model: RewardModel
    dynamics: JointDynamics


def split_dataset(d: Dataset, split_ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Uniformly random train/validation partition, deterministic given seed."""
    if not (0.0 < split_ratio < 1.0):
        raise ConfigError(f"split ratio must be in (0, 1), got {split_ratio}")
    m = len(d)
    if m < 2:
        raise InsufficientData(f"cannot split a dataset of {m} trajectories")
    n_train = int(split_ratio * m + 0.5)
    if n_train == 0 or n_train == m:
        raise InsufficientData(
            f"split ratio {split_ratio} leaves an empty side for m={m}"
        )
    indices = list(range(m))
    random.Random(seed).shuffle(indices)
    train_idx = sorted(indices[:n_train])
    val_idx = sorted(indices[n_train:])
    return d.subset(train_idx), d.subset(val_idx)


def prepare_artifacts(d: Dataset, cfg: SeldonianConfig) -> ModelArtifacts:
    """Split the dataset and fit everything the estimators reuse."""
    _check_inputs(d, cfg)
    train, val = split_dataset(d, cfg.split_ratio, cfg.seed)
    t_hat = estimate_transition(train)
    types = infer_types(train, cfg.type_library, cfg.p)
    reward_model = estimate_rewards(train)
    dynamics = build_joint_dynamics(t_hat, types, d.num_states, d.num_actions)
    return ModelArtifacts(train, val, t_hat, types, reward_model, dynamics)


def _check_inputs(d: Dataset, cfg: SeldonianConfig) -> None:
    if cfg.p != d.p:
        raise ConfigError(f"config expects {cfg.p} teammates, dataset has {d.p}")
    for pol in list(cfg.candidates) + list(cfg.type_library):
        if pol.num_states != d.num_states or pol.num_actions != d.num_actions:
            raise ConfigError(
                f"policy '{pol.name}' is {pol.num_states}x{pol.num_actions}, dataset "
                f"needs {d.num_states}x{d.num_actions}"
            )


class _RunCache:
    """Per-run memo for ratio tables, g values, and solved Q/V tables."""

    def __init__(self, artifacts: ModelArtifacts, cfg: SeldonianConfig):
        self.artifacts = artifacts
        self.cfg = cfg
        self.gamma_pows = cfg.gamma ** np.arange(artifacts.val.length, dtype=np.float64)
        self._ratios: dict[int, list[np.ndarray]] = {}
        self._gvals: dict[int, list[np.ndarray]] = {}
        self._qv: dict[tuple[int, int], QVTables] = {}
        self._qv_return: dict[int, QVTables] = {}

    def ratios(self, i: int) -> list[np.ndarray]:
        if i not in self._ratios:
            cand = self.cfg.candidates[i]
            val = self.artifacts.val
            self._ratios[i] = [
                _ego_ratios(traj, val.behavior_policies[bid], cand) for traj, bid in val
            ]
        return self._ratios[i]

    def g_values(self, j: int) -> list[np.ndarray]:
        if j not in self._gvals:
            c = self.cfg.constraints[j]
            self._gvals[j] = [c.trajectory_values(traj) for traj in self.artifacts.val.trajectories()]
        return self._gvals[j]

    def qv(self, i: int, j: int) -> QVTables:
        if (i, j) not in self._qv:
            c = self.cfg.constraints[j]
            self._qv[(i, j)] = solve_qv(
                self.cfg.candidates[i],
                c,
                self.artifacts.t_hat,
                self.artifacts.types,
                gamma=self.cfg.gamma,
                tol=self.cfg.tol,
                max_iter=self.cfg.max_iter,
                vmax=self.cfg.constraint_vmax(c),
                dynamics=self.artifacts.dynamics,
            )
        return self._qv[(i, j)]

    def qv_return(self, i: int) -> QVTables:
        if i not in self._qv_return:
            self._qv_return[i] = solve_qv(
                self.cfg.candidates[i],
                self.artifacts.reward_model,
                self.artifacts.t_hat,
                self.artifacts.types,
                gamma=self.cfg.gamma,
                tol=self.cfg.tol,
                max_iter=self.cfg.max_iter,
                vmax=None,
                dynamics=self.artifacts.dynamics,
            )
        return self._qv_return[i]


def _raw_estimates(
    cache: _RunCache,
    estimator: str,
    i: int,
    per_traj_values: list[np.ndarray],
    qv: QVTables | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory estimates and final weights for candidate i on the val split."""
    val = cache.artifacts.val
    ratios = cache.ratios(i)
    gamma_pows = cache.gamma_pows
    out = np.empty(len(val), dtype=np.float64)
    weights = np.empty(len(val), dtype=np.float64)
    for k, (traj, _) in enumerate(val):
        r = ratios[k]
        vals = per_traj_values[k]
        weights[k] = w_final = float(_running_weights(r)[-1])
        if estimator == "is":
            out[k] = float(np.dot(gamma_pows, vals)) * w_final
        elif estimator == "pdis":
            out[k] = _pdis_core(vals, r, gamma_pows)
        else:
            states = traj.states[:-1]
            q_sa = qv.q[states, traj.ego_actions]
            v_s = qv.v[states]
            out[k] = _dr_core(vals, r, q_sa, v_s, gamma_pows)
    return out, weights


def _constraint_batch(
    cache: _RunCache, estimator: str, i: int, j: int
) -> EstimateBatch:
    """Clipped, shifted estimate batch for (candidate i, constraint j)."""
    cfg = cache.cfg
    c = cfg.constraints[j]
    qv = cache.qv(i, j) if estimator == "dr" else None
    values, weights = _raw_estimates(cache, estimator, i, cache.g_values(j), qv)
    vmax = cfg.constraint_vmax(c)
    a = cache.artifacts.val.length * (c.gmax + 2.0 * vmax)
    batch = EstimateBatch(values=values, kind=estimator, final_weights=weights)
    if cfg.clip_range is not None:
        lo, hi = cfg.clip_range
    else:
        # Worst-case envelope: guarantees the shifted batch is nonnegative
        # while leaving all but pathological importance weights untouched.
        lo, hi = -a, a
    batch = clip_batch(batch, lo, hi)
    return shift_nonneg(batch, cache.artifacts.val.length, c.gmax, vmax)


def _alpha(batch: EstimateBatch, bound: str, delta: float, cfg: SeldonianConfig) -> float:
    if bound == "bernstein":
        caps = cfg.caps if cfg.caps is not None else batch.shift
        bc = BoundConfig(kind="bernstein", delta=delta, caps=caps)
        return bernstein_lower(batch, bc)
    return tstudent_lower(batch, delta, literal_t_formula=cfg.literal_t_formula)


def estimate_return(
    policy_index: int,
    d_val: Dataset,
    artifacts: ModelArtifacts,
    cfg: SeldonianConfig,
    cache: _RunCache | None = None,
) -> float:
    """Mean per-trajectory estimate of the reward return for one candidate.

    Uses the configured estimator with the recorded per-step rewards as the
    value stream; the doubly-robust variant reuses Q/V tables solved against
    the train-side mean-reward model.
    """
    if cache is None:
        cache = _RunCache(artifacts, cfg)
    rewards = [traj.rewards for traj in d_val.trajectories()]
    qv = cache.qv_return(policy_index) if cfg.estimator == "dr" else None
    values, _ = _raw_estimates(cache, cfg.estimator, policy_index, rewards, qv)
    # Same guard as the constraint path: pathological weights are truncated
    # at the worst-case envelope so one trajectory cannot dominate the mean.
    vmax_r = artifacts.reward_model.gmax / (1.0 - cfg.gamma)
    if np.isfinite(vmax_r):
        a = d_val.length * (artifacts.reward_model.gmax + 2.0 * vmax_r)
        values = np.clip(values, -a, a)
    return float(values.mean())


def run_seldonian_multi(
    d: Dataset,
    cfg: SeldonianConfig,
    estimators: tuple[str, ...] | None = None,
    bound_kinds: tuple[str, ...] | None = None,
    include_baseline: bool = False,
) -> dict[tuple[str, str], Decision]:
    """Run selection for several estimator/bound combinations on shared artifacts.

    Returns a decision per (estimator, bound) pair; baseline decisions, which
    skip the reliability computation entirely and take the best estimated
    return, appear under bound name 'none'.
    """
    estimators = estimators if estimators is not None else (cfg.estimator,)
    bound_kinds = bound_kinds if bound_kinds is not None else (cfg.bound,)
    for e in estimators:
        if e not in ESTIMATORS:
            raise ConfigError(f"unknown estimator '{e}'")
    for b in bound_kinds:
        if b not in BOUNDS:
            raise ConfigError(f"unknown bound '{b}'")

    artifacts = prepare_artifacts(d, cfg)
    cache = _RunCache(artifacts, cfg)
    ell = len(cfg.candidates)
    n = len(cfg.constraints)
    deltas = tuple(c.delta / ell for c in cfg.constraints)
    split_sizes = (len(artifacts.train), len(artifacts.val))

    decisions: dict[tuple[str, str], Decision] = {}
    returns_by_estimator: dict[str, dict[int, float]] = {}

    def returns_for(estimator: str, needed: set[int]) -> dict[int, float]:
        table = returns_by_estimator.setdefault(estimator, {})
        est_cfg = cfg if cfg.estimator == estimator else _with_estimator(cfg, estimator)
        for i in sorted(needed):
            if i not in table:
                table[i] = estimate_return(i, artifacts.val, artifacts, est_cfg, cache=cache)
        return table

    for e in estimators:
        per_bound_alphas = {}
        if bound_kinds:
            batches = {}
            for i in range(ell):
                for j in range(n):
                    batches[(i, j)] = _constraint_batch(cache, e, i, j)
            for b in bound_kinds:
                ab = np.empty((ell, n), dtype=np.float64)
                for i in range(ell):
                    for j in range(n):
                        ab[i, j] = _alpha(batches[(i, j)], b, deltas[j], cfg)
                per_bound_alphas[b] = ab

        for b in bound_kinds:
            ab = per_bound_alphas[b]
            reliable = tuple(
                i
                for i in range(ell)
                if all(ab[i, j] >= cfg.constraints[j].threshold for j in range(n))
            )
            if reliable:
                rets = returns_for(e, set(reliable))
                best = max(reliable, key=lambda i: (rets[i], -i))
                decision = Decision(
                    chosen_index=best,
                    chosen_name=cfg.candidates[best].name,
                    estimated_return=rets[best],
                    reliable=reliable,
                    alphas=ab,
                    returns={i: rets[i] for i in reliable},
                    inferred_types=artifacts.types.chosen,
                    bound_deltas=deltas,
                    estimator=e,
                    bound=b,
                    split_sizes=split_sizes,
                )
            else:
                decision = Decision(
                    chosen_index=None,
                    chosen_name=None,
                    estimated_return=None,
                    reliable=(),
                    alphas=ab,
                    returns={},
                    inferred_types=artifacts.types.chosen,
                    bound_deltas=deltas,
                    estimator=e,
                    bound=b,
                    split_sizes=split_sizes,
                )
            decisions[(e, b)] = decision

        if include_baseline:
            rets = returns_for(e, set(range(ell)))
            best = max(range(ell), key=lambda i: (rets[i], -i))
            decisions[(e, "none")] = Decision(
                chosen_index=best,
                chosen_name=cfg.candidates[best].name,
                estimated_return=rets[best],
                reliable=tuple(range(ell)),
                alphas=np.full((ell, n), np.nan),
                returns=dict(rets),
                inferred_types=artifacts.types.chosen,
                bound_deltas=deltas,
                estimator=e,
                bound="none",
                split_sizes=split_sizes,
            )

    return decisions


def _with_estimator(cfg: SeldonianConfig, estimator: str) -> SeldonianConfig:
    from dataclasses import replace

    return replace(cfg, estimator=estimator)


def run_seldonian(d: Dataset, cfg: SeldonianConfig) -> Decision:
    """Select the best statistically reliable candidate, or NoSolution.

    With `cfg.unreliable_baseline` set, the reliability computation is
    skipped and the best-estimated-return candidate is returned directly.
    """
    if cfg.unreliable_baseline:
        out = run_seldonian_multi(
            d, cfg, estimators=(cfg.estimator,), bound_kinds=(), include_baseline=True
        )
        return out[(cfg.estimator, "none")]
    out = run_seldonian_multi(d, cfg, estimators=(cfg.estimator,), bound_kinds=(cfg.bound,))
    return out[(cfg.estimator, cfg.bound)]
