"""High-confidence lower bounds on the mean of an estimate batch.

Two routes: an extended empirical Bernstein inequality on capped, nonnegative
samples (finite-sample guarantee), and the one-sided Student's t bound
(asymptotic, much tighter on small batches). Both subtract the batch's
recorded nonnegativity shift, so callers reason about unshifted means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, InsufficientData
from .ope import EstimateBatch

__all__ = ["BoundConfig", "bernstein_lower", "tstudent_lower", "inv_t_cdf"]


@dataclass(frozen=True)
class BoundConfig:
    """Selection and parameters for one lower-bound computation.

    `caps` are the per-sample truncation constants of the Bernstein route,
    given either as one scalar broadcast to every sample or as a full vector;
    they trade bias for variance and are tuned per experiment.
    """

    kind: str
    delta: float
    caps: float | np.ndarray = 1.0
    literal_t_formula: bool = False

    def __post_init__(self):
        if self.kind not in ("bernstein", "student_t"):
            raise ConfigError(f"unknown bound kind '{self.kind}'")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")
        if self.kind == "bernstein" and np.any(np.asarray(self.caps) <= 0.0):
            raise ConfigError("bernstein caps must be positive")


def inv_t_cdf(p: float, dof: int) -> float:
    """Quantile of Student's t with `dof` degrees of freedom.

    Inverts the regularized incomplete beta representation of the CDF, then
    polishes with Newton steps on the analytic density.
    """
    if not (0.0 < p < 1.0):
        raise ConfigError(f"inv_t_cdf: p must be in (0, 1), got {p}")
    if dof < 1:
        raise ConfigError(f"inv_t_cdf: dof must be a positive integer, got {dof}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -inv_t_cdf(1.0 - p, dof)
    x = float(special.betaincinv(dof / 2.0, 0.5, 2.0 * (1.0 - p)))
    if x <= 0.0:
        return math.inf
    t = math.sqrt(dof * (1.0 - x) / x)
    # Newton refinement on F(t) - p with the exact pdf.
    log_norm = (
        math.lgamma((dof + 1) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * math.log(dof * math.pi)
    )
    for _ in range(50):
        xt = dof / (dof + t * t)
        err = (1.0 - 0.5 * float(special.betainc(dof / 2.0, 0.5, xt))) - p
        if abs(err) < 1e-14:
            break
        pdf = math.exp(log_norm - ((dof + 1) / 2.0) * math.log1p(t * t / dof))
        if pdf <= 0.0:
            break
        step = err / pdf
        t -= step
        if abs(step) < 1e-12 * max(1.0, abs(t)):
            break
    return t


def bernstein_lower(batch: EstimateBatch, cfg: BoundConfig) -> float:
    """Extended empirical Bernstein lower bound on the unshifted true mean.

    Needs almost-surely nonnegative samples (use shift_nonneg first) and the
    positive caps from `cfg`; each sample is truncated at its cap before the
    bound is evaluated. Holds with probability at least 1 - delta.
    """
    values = batch.values
    m = len(values)
    if m < 2:
        raise InsufficientData(f"bernstein bound needs at least 2 samples, got {m}")
    if np.any(values < 0.0):
        raise ConfigError("bernstein bound requires nonnegative samples; shift the batch first")
    caps = np.broadcast_to(np.asarray(cfg.caps, dtype=np.float64), values.shape)
    if np.any(caps <= 0.0):
        raise ConfigError("bernstein caps must be positive")

    y_over_xi = np.minimum(values, caps) / caps
    s1 = float(y_over_xi.sum())
    s2 = float((y_over_xi**2).sum())
    log_term = math.log(2.0 / cfg.delta)
    spread = max(m * s2 - s1 * s1, 0.0)
    rhs = (
        s1
        - 7.0 * m * log_term / (3.0 * (m - 1))
        - math.sqrt(2.0 * log_term / (m - 1) * spread)
    ) / float((1.0 / caps).sum())
    return rhs - batch.shift


def tstudent_lower(
    batch: EstimateBatch, delta: float, literal_t_formula: bool = False
) -> float:
    """One-sided Student's t lower confidence bound on the unshifted true mean.

    The default scales the sample deviation by sqrt(m), the standard error
    form. The literal variant instead divides the deviation itself by m under
    the root; it is kept behind a flag for comparison only, since its units
    do not track the data's scale.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    values = batch.values
    m = len(values)
    if m < 2:
        raise InsufficientData(f"t bound needs at least 2 samples, got {m}")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    if not math.isfinite(sd):
        raise InsufficientData("sample standard deviation is not finite")
    quantile = inv_t_cdf(1.0 - delta, m - 1)
    if literal_t_formula:
        margin = math.sqrt(sd / m) * quantile
    else:
        margin = sd / math.sqrt(m) * quantile
    return mean - margin - batch.shift
