"""One-point bandit gradient descent (FKM) with delayed feedback.

The learner keeps an iterate ``x`` inside the shrunk body ``(1 - delta) K``,
plays ``x + delta * u`` for a uniform unit vector ``u`` and, when the cost
of round s arrives, steps along ``-(n / delta) * cost_s * u_s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .bodies import ConvexBody, project_shrunk
from .errors import ConfigurationError, ContractViolation
from .feedback import FeedbackEvent
from .stepsize import StepSizeSchedule, iterated_log, step_size

DELTA_MIN = 1e-6
DELTA_MAX = 1.0 - 1e-6


def clamp_delta(delta: float) -> float:
    return float(min(max(delta, DELTA_MIN), DELTA_MAX))


def sample_unit_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform point on the unit sphere in R^n (normalised Gaussian)."""
    if n < 1:
        raise ConfigurationError("dimension must be >= 1")
    while True:
        z = rng.standard_normal(n)
        nrm = float(np.linalg.norm(z))
        if nrm > 0:
            return z / nrm


def unit_rows(Z: np.ndarray) -> np.ndarray:
    """Normalise each row of a Gaussian matrix onto the sphere."""
    nrm = np.linalg.norm(Z, axis=1)
    nrm[nrm == 0] = 1.0
    return Z / nrm[:, None]


def gradient_estimate(loss_value, u: np.ndarray, n: int, delta: float) -> np.ndarray:
    """One-point estimate ``(n / delta) * loss * u``.

    Also takes a batch: losses of shape (N,) with directions of shape (N, n).
    """
    lv = np.asarray(loss_value, dtype=float)
    if np.any(~((lv >= 0.0) & (lv <= 1.0))):
        raise ContractViolation(f"loss {loss_value!r} outside [0, 1]")
    if not 0 < delta < 1:
        raise ContractViolation(f"delta must lie in (0, 1), got {delta}")
    u = np.asarray(u, dtype=float)
    if lv.ndim:
        return (n / delta) * lv[:, None] * u
    return (n / delta) * float(lv) * u


@dataclass
class FkmState:
    x: np.ndarray
    delta: float
    eta_schedule: StepSizeSchedule
    body: ConvexBody
    perturbation_log: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    round: int = 0
    retention: int | None = None
    eta_table: np.ndarray | None = None
    applied: int = 0

    def eta(self, s: int) -> float:
        if self.eta_table is not None and s <= self.eta_table.shape[0]:
            return float(self.eta_table[s - 1])
        return step_size(self.eta_schedule, s)


def fkm_new(body: ConvexBody, delta: float, eta: StepSizeSchedule, retention: int | None = None,
            eta_table: np.ndarray | None = None) -> FkmState:
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    return FkmState(np.zeros(body.dim), float(delta), eta, body, retention=retention, eta_table=eta_table)


def fkm_act(state: FkmState, rng: np.random.Generator | None = None,
            u: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Play ``x + delta * u`` and log ``(u, x)`` under the new round index."""
    if u is None:
        u = sample_unit_sphere(state.body.dim, rng)
    state.round += 1
    a = state.x + state.delta * u
    state.perturbation_log[state.round] = (u, state.x.copy())
    if state.retention is not None:
        state.perturbation_log.pop(state.round - state.retention, None)
    return a, u


def fkm_update(state: FkmState, batch: Sequence[FeedbackEvent]) -> FkmState:
    """Sequential projected steps, one per delivered sample, in batch order."""
    n = state.body.dim
    for ev in batch:
        rec = state.perturbation_log.pop(ev.origin_round, None)
        if rec is None:
            raise ContractViolation(f"no perturbation record for origin round {ev.origin_round}")
        u = rec[0]
        g = gradient_estimate(ev.cost_value, u, n, state.delta)
        state.x = project_shrunk(state.body, state.x - state.eta(ev.origin_round) * g, state.delta)
        state.applied += 1
    return state


def fkm_fixed_params(n: int, T: int, delay_sum_excl_missing: float, diameter: float) -> tuple[float, float]:
    """Step size and radius tuned for a known horizon and delay sum.

    A zero delay sum selects the delay-free branch of both min and max.
    """
    if T < 1 or n < 1:
        raise ConfigurationError("need T >= 1 and n >= 1")
    a = (1.0 / n) * T ** (-0.75)
    delta = T ** (-0.25)
    D = float(delay_sum_excl_missing)
    if D > 0:
        b = (1.0 / math.sqrt(n)) * T ** (-1.0 / 3.0) * D ** (-1.0 / 3.0)
        a = min(a, b)
        delta = max(delta, T ** (-2.0 / 3.0) * D ** (1.0 / 3.0))
    return diameter * a, clamp_delta(delta)


class DelayClass(str, Enum):
    QUARTER = "t^1/4"
    THREE_QUARTERS = "t^3/4"
    LINEAR = "t"
    LINEAR_LOG = "t*log t"


_DELAY_CLASS_ALIASES = {
    "t^1/4": DelayClass.QUARTER, "quarter": DelayClass.QUARTER, "0.25": DelayClass.QUARTER,
    "t^3/4": DelayClass.THREE_QUARTERS, "three_quarters": DelayClass.THREE_QUARTERS, "0.75": DelayClass.THREE_QUARTERS,
    "t": DelayClass.LINEAR, "linear": DelayClass.LINEAR, "1": DelayClass.LINEAR,
    "t*log t": DelayClass.LINEAR_LOG, "tlogt": DelayClass.LINEAR_LOG, "linear_log": DelayClass.LINEAR_LOG,
}


def parse_delay_class(name) -> DelayClass:
    if isinstance(name, DelayClass):
        return name
    key = str(name).strip().lower()
    if key not in _DELAY_CLASS_ALIASES:
        raise ConfigurationError(f"unknown delay class {name!r}")
    return _DELAY_CLASS_ALIASES[key]


def anytime_fkm_schedule(delay_class, T: int) -> tuple[StepSizeSchedule, float]:
    """Anytime step sizes and horizon-dependent radius for a delay growth class."""
    cls = parse_delay_class(delay_class)
    if cls is DelayClass.QUARTER:
        return StepSizeSchedule.power_log(5.0 / 8.0), clamp_delta(T ** (-3.0 / 16.0))
    if cls is DelayClass.THREE_QUARTERS:
        return StepSizeSchedule.power_log(7.0 / 8.0), clamp_delta(T ** (-1.0 / 16.0))
    if cls is DelayClass.LINEAR:
        return StepSizeSchedule.power_log(1.0), clamp_delta(iterated_log(T, 2) ** (-1.0 / 3.0))
    return StepSizeSchedule.loglog(), clamp_delta(iterated_log(T, 3) ** (-1.0 / 3.0))


def anytime_exp3_schedule(delay_class) -> StepSizeSchedule:
    """EXP3 uses the same anytime step sizes, capped below ``e^-2 / 2``."""
    return anytime_fkm_schedule(delay_class, 2)[0].capped()


def check_schedule_conditions(etas: np.ndarray, delays: np.ndarray, deltas=None) -> list[str]:
    """Heuristic finite-horizon check of the no-discounted-regret conditions.

    Returns human-readable warnings; an empty list means nothing looked off.
    Looks at the tail trends of ``eta_t d_t`` and ``sum eta_t^2 d_t``.
    """
    warnings = []
    T = len(etas)
    if T < 16:
        return warnings
    prod = etas * delays[:T]
    q = T // 4
    if prod[-q:].mean() > 2 * prod[q : 2 * q].mean():
        warnings.append("eta_t * d_t appears to grow")
    # a convergent series adds visibly less over (T/2, T] than over (T/4, T/2];
    # the harmonic series adds about the same
    s2 = np.cumsum(etas**2 * delays[:T])
    late, early = s2[-1] - s2[T // 2 - 1], s2[T // 2 - 1] - s2[T // 4 - 1]
    if late > 0.95 * early and late > 1e-12:
        warnings.append("sum eta_t^2 d_t does not appear to converge")
    return warnings


class FkmLearner:
    """Round-loop adapter around :class:`FkmState`."""

    def __init__(self, body: ConvexBody, delta: float, schedule: StepSizeSchedule,
                 eta_table: np.ndarray | None = None, retention: int | None = None) -> None:
        self.state = fkm_new(body, delta, schedule, retention, eta_table)

    def act(self, rng: np.random.Generator | None = None, u: np.ndarray | None = None) -> np.ndarray:
        return fkm_act(self.state, rng, u)[0]

    def receive(self, batch: Sequence[FeedbackEvent]) -> int:
        fkm_update(self.state, batch)
        return len(batch)

    @property
    def x(self) -> np.ndarray:
        return self.state.x


def fkm_regret_bound(n: int, T: int, eta: float, delta: float, diameter: float, lipschitz: float,
                     delays: np.ndarray) -> dict[str, float]:
    """Known-parameter regret ceiling for fixed ``eta`` and ``delta``.

    ``|M| + ((3 + |K|) delta L + eta n^2 / (2 delta^2)) (T - |M|)
    + |K|^2 / (2 eta) + 2 L n (eta / delta) * sum_{t not in M} d_t``.
    """
    d = np.asarray(delays[:T], dtype=np.int64)
    t = np.arange(1, T + 1)
    missing = t + d > T
    m = int(missing.sum())
    dsum = float(d[~missing].sum())
    value = (
        m
        + ((3 + diameter) * delta * lipschitz + 0.5 * eta * n**2 / delta**2) * (T - m)
        + diameter**2 / (2 * eta)
        + 2 * lipschitz * n * (eta / delta) * dsum
    )
    return {"bound": float(value), "missing": m, "delay_sum_arrived": dsum}
