"""Stepsize schedules, the stepsize-aware threshold schedule, and calibration.

The threshold at stepsize ``gamma`` is ``lambda0 * sqrt(F(gamma))`` with

    F(gamma) = gamma**a * s / (gamma**(2a) + s**2),   s = (gamma0 * gammaT)**(a/2)

which peaks at 1/2 where ``gamma**a == s`` and vanishes as ``gamma -> 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("inverse_proportional", "exponential", "constant")


class ScheduleError(ValueError):
    """Raised for schedule domain violations."""


@dataclass(frozen=True)
class StepsizeSchedule:
    """Per-iteration stepsize over a fixed horizon ``T``.

    ``inverse_proportional``: ``beta / (t + b)``.
    ``exponential``: ``gamma_init * decay ** (t // E)`` (decays once per round).
    ``constant``: ``gamma_init``.
    """

    kind: str
    T: int
    beta: float = 100.0
    b: float = 1000.0
    gamma_init: float = 0.1
    decay: float = 1.0
    E: int = 1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ScheduleError(f"unknown stepsize kind {self.kind!r}")
        if self.T < 1:
            raise ScheduleError("T must be a positive integer")
        if self.E < 1:
            raise ScheduleError("E must be a positive integer")
        if self.kind == "inverse_proportional" and not (self.beta > 0 and self.b > 0):
            raise ScheduleError("inverse_proportional needs beta > 0 and b > 0")
        if self.kind in ("exponential", "constant") and not self.gamma_init > 0:
            raise ScheduleError("gamma_init must be positive")
        if self.kind == "exponential" and not (0.0 < self.decay <= 1.0):
            raise ScheduleError("decay must lie in (0, 1]")

    def values(self) -> np.ndarray:
        """All stepsizes ``gamma_0 .. gamma_T`` as one array (length T+1)."""
        t = np.arange(self.T + 1, dtype=np.float64)
        if self.kind == "inverse_proportional":
            return self.beta / (t + self.b)
        if self.kind == "exponential":
            # scalar pow per round keeps values identical to stepsize_at
            per_round = [self.gamma_init * self.decay ** float(r) for r in range(self.T // self.E + 1)]
            return np.repeat(per_round, self.E)[: self.T + 1]
        return np.full(self.T + 1, float(self.gamma_init))

    def halving_ok(self) -> bool:
        """Check ``gamma_t <= 2 * gamma_{t+E}`` over the horizon."""
        g = self.values()
        if self.T < self.E:
            return True
        return bool(np.all(g[: -self.E] <= 2.0 * g[self.E :]))


def stepsize_at(schedule: StepsizeSchedule, t: int) -> float:
    if t < 0 or t > schedule.T:
        raise ScheduleError(f"iteration {t} outside schedule horizon [0, {schedule.T}]")
    if schedule.kind == "inverse_proportional":
        return schedule.beta / (t + schedule.b)
    if schedule.kind == "exponential":
        return schedule.gamma_init * schedule.decay ** float(t // schedule.E)
    return float(schedule.gamma_init)


@dataclass(frozen=True)
class ThresholdSchedule:
    lambda0: float
    gamma0: float
    gammaT: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ScheduleError("lambda0 must be non-negative")
        if self.alpha < 1:
            raise ScheduleError("alpha must be >= 1")
        if not (self.gamma0 > 0 and self.gammaT > 0):
            raise ScheduleError("gamma0 and gammaT must be positive")
        if self.gammaT > self.gamma0:
            raise ScheduleError("gammaT must not exceed gamma0")

    @classmethod
    def for_stepsizes(cls, lambda0: float, stepsize: StepsizeSchedule, alpha: float = 1.0):
        return cls(
            lambda0=lambda0,
            gamma0=stepsize_at(stepsize, 0),
            gammaT=stepsize_at(stepsize, stepsize.T),
            alpha=alpha,
        )

    @property
    def peak_gamma(self) -> float:
        return math.sqrt(self.gamma0 * self.gammaT)


def shape_factor(gamma, sched: ThresholdSchedule):
    """Normalized shape ``F(gamma)`` in ``(0, 1/2]``; accepts scalars or arrays."""
    g = np.asarray(gamma, dtype=np.float64)
    if np.any(g <= 0):
        raise ScheduleError("shape_factor requires gamma > 0")
    a = sched.alpha
    s = (sched.gamma0 * sched.gammaT) ** (a / 2.0)
    ga = g**a
    out = ga * s / (ga * ga + s * s)
    return float(out) if out.ndim == 0 else out


def threshold_at(sched: ThresholdSchedule, gamma_next):
    f = shape_factor(gamma_next, sched)
    out = sched.lambda0 * np.sqrt(f)
    return float(out) if np.ndim(out) == 0 else out


def lambda_from_topk(d: int, k: float) -> float:
    """Fixed threshold that keeps roughly a fraction ``k`` of ``d`` coordinates."""
    if d < 1:
        raise ScheduleError("d must be >= 1")
    if not (0.0 < k <= 1.0):
        raise ScheduleError("k must lie in (0, 1]")
    if d * k < 1:
        warnings.warn(
            f"d*k = {d * k:.3g} < 1: threshold targets less than one coordinate",
            RuntimeWarning,
            stacklevel=2,
        )
    return 1.0 / (2.0 * math.sqrt(d * k))


def calibrate_lambda0(lambda_fixed: float, stepsize: StepsizeSchedule, alpha: float = 1.0) -> float:
    """Pick ``lambda0`` so that sum_t 1/lambda_t**2 matches ``T / lambda_fixed**2``.

    The sum runs over iterations ``0 .. T-1`` with ``gamma0 = gamma(0)`` and
    ``gammaT = gamma(T)``.
    """
    if not lambda_fixed > 0:
        raise ScheduleError("lambda_fixed must be positive")
    g = stepsize.values()
    sched = ThresholdSchedule(lambda0=1.0, gamma0=g[0], gammaT=g[-1], alpha=alpha)
    inv_f = 1.0 / shape_factor(g[:-1], sched)
    return lambda_fixed * math.sqrt(float(np.mean(inv_f)))


def realized_thresholds(sched: ThresholdSchedule, stepsize: StepsizeSchedule) -> np.ndarray:
    """Threshold used at each communication round, ``lambda(gamma_{t+1})``."""
    comm = np.arange(stepsize.E, stepsize.T + 1, stepsize.E)
    return threshold_at(sched, stepsize.values()[comm])
