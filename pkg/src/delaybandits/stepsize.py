"""Step-size schedules.

Two time-varying families are supported::

    power_log:  c / (t**p * ln(t + 1))
    loglog:     c / (t * ln(t + 1) * L2(t + 1))

where ``L2(x) = ln(max(ln(max(x, e)), e))`` keeps every nested log >= 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

#: Strict upper limit on EXP3 step sizes, ``e^-2 / 2``.
EXP3_ETA_LIMIT = math.exp(-2.0) / 2.0
#: Value EXP3 schedules are clamped to.
EXP3_ETA_CAP = EXP3_ETA_LIMIT * (1.0 - 1e-9)

FORMS = ("fixed", "power_log", "loglog")


def iterated_log(x, depth: int):
    """``depth``-fold natural log with each argument clamped below at ``e``."""
    y = np.asarray(x, dtype=float)
    for _ in range(depth):
        y = np.log(np.maximum(y, math.e))
    return y if y.ndim else float(y)


@dataclass(frozen=True)
class StepSizeSchedule:
    form: str = "fixed"
    eta: float = 0.01
    c: float = 1.0
    p: float = 1.0
    cap: float | None = None

    def __post_init__(self) -> None:
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown step-size form {self.form!r}")
        if self.form == "fixed" and not self.eta > 0:
            raise ConfigurationError(f"fixed step size must be positive, got {self.eta}")
        if self.form != "fixed" and not (self.c > 0 and self.p >= 0):
            raise ConfigurationError("time-varying schedule needs c > 0 and p >= 0")
        if self.cap is not None and not self.cap > 0:
            raise ConfigurationError("cap must be positive")

    @classmethod
    def fixed(cls, eta: float) -> "StepSizeSchedule":
        return cls("fixed", eta=float(eta))

    @classmethod
    def power_log(cls, p: float, c: float = 1.0) -> "StepSizeSchedule":
        return cls("power_log", c=float(c), p=float(p))

    @classmethod
    def loglog(cls, c: float = 1.0) -> "StepSizeSchedule":
        return cls("loglog", c=float(c))

    def capped(self, cap: float = EXP3_ETA_CAP) -> "StepSizeSchedule":
        return replace(self, cap=cap)

    def values(self, T: int) -> np.ndarray:
        """``eta_1..eta_T`` as a float64 array."""
        t = np.arange(1, int(T) + 1, dtype=np.float64)
        if self.form == "fixed":
            out = np.full(t.shape, self.eta)
        elif self.form == "power_log":
            out = self.c / (t**self.p * np.log(t + 1.0))
        else:
            out = self.c / (t * np.log(t + 1.0) * iterated_log(t + 1.0, 2))
        if self.cap is not None:
            out = np.minimum(out, self.cap)
        return out

    def first(self) -> float:
        return float(self.values(1)[0])

    def describe(self) -> str:
        if self.form == "fixed":
            base = f"fixed({self.eta:.6g})"
        elif self.form == "power_log":
            base = f"{self.c:g}/(t^{self.p:g} ln(t+1))"
        else:
            base = f"{self.c:g}/(t ln(t+1) lnln(t+1))"
        return base if self.cap is None else f"min({base}, {self.cap:.10g})"


def step_size(schedule: StepSizeSchedule, t: int) -> float:
    """Step size at round ``t >= 1``."""
    if t < 1:
        raise ConfigurationError(f"round index must be >= 1, got {t}")
    if schedule.form == "fixed":
        val = schedule.eta
    elif schedule.form == "power_log":
        val = schedule.c / (t**schedule.p * math.log(t + 1.0))
    else:
        val = schedule.c / (t * math.log(t + 1.0) * iterated_log(t + 1.0, 2))
    if schedule.cap is not None:
        val = min(val, schedule.cap)
    return float(val)
