"""EXP3 with delayed bandit feedback.

Importance-weighted cumulative loss estimates are kept as log-weights
(``log_weights = -L``); the sampling distribution is their softmax with
max-subtraction. Feedback delayed past ``1/(e^2 eta_s) - 1`` rounds is
discarded. With ``GammaMode.EQUAL_ETA`` the estimator adds implicit
exploration (``gamma_s = eta_s``) for adaptive adversaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .feedback import FeedbackEvent
from .stepsize import EXP3_ETA_LIMIT, StepSizeSchedule, step_size

#: e^2 written out so the compiled kernel uses the bit-identical constant.
E2 = 7.38905609893065
#: Ratio above which a stability snapshot counts as a violation.
RATIO_LIMIT = E2 * (1.0 + 1e-9)


class GammaMode(str, Enum):
    ZERO = "zero"
    EQUAL_ETA = "eta"


def softmax(log_weights: np.ndarray) -> np.ndarray:
    z = np.exp(log_weights - log_weights.max())
    return z / z.sum()


def sample_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds ``u``."""
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, p.shape[0] - 1)


def delay_threshold(eta: float) -> float:
    """Largest admissible delay for a sample generated with step size ``eta``."""
    return 1.0 / (E2 * eta) - 1.0


@dataclass
class Exp3Snapshot:
    origin_round: int
    p_before: np.ndarray
    p_origin: np.ndarray
    ratio_max: float


@dataclass
class Exp3State:
    arms: int
    eta_schedule: StepSizeSchedule
    gamma_mode: GammaMode
    log_weights: np.ndarray
    probabilities: np.ndarray
    round: int = 0
    origin_record: dict[int, tuple[int, np.ndarray]] = field(default_factory=dict)
    eta_table: np.ndarray | None = None
    update_scale: float = 1.0
    discarded: int = 0
    applied: int = 0
    max_ratio: float = 1.0
    violations: int = 0

    def eta(self, s: int) -> float:
        if self.eta_table is not None and s <= self.eta_table.shape[0]:
            return float(self.eta_table[s - 1])
        return step_size(self.eta_schedule, s)


def exp3_new(K: int, eta: StepSizeSchedule, gamma_mode: GammaMode | str = GammaMode.ZERO,
             eta_table: np.ndarray | None = None) -> Exp3State:
    """Fresh learner: uniform distribution, zero loss estimates."""
    if K < 2:
        raise ConfigurationError(f"EXP3 needs at least 2 arms, got {K}")
    eta1 = float(eta_table[0]) if eta_table is not None and len(eta_table) else step_size(eta, 1)
    if not eta1 < EXP3_ETA_LIMIT:
        raise ConfigurationError(
            f"EXP3 needs eta_1 < e^-2/2 = {EXP3_ETA_LIMIT:.6g}, got {eta1:.6g}; "
            "enable clamping or lower the step size"
        )
    return Exp3State(
        arms=int(K),
        eta_schedule=eta,
        gamma_mode=GammaMode(gamma_mode),
        log_weights=np.zeros(K),
        probabilities=np.full(K, 1.0 / K),
        eta_table=eta_table,
    )


def exp3_act(state: Exp3State, rng: np.random.Generator | None = None, u: float | None = None) -> int:
    """Sample an arm from the current distribution and record it for later updates."""
    if u is None:
        u = rng.random()
    arm = sample_index(state.probabilities, u)
    state.round += 1
    state.origin_record[state.round] = (arm, state.probabilities.copy())
    return arm


def exp3_filter(feedback: FeedbackEvent, eta_schedule: StepSizeSchedule | Callable[[int], float]) -> bool:
    """Accept iff the delay is within ``1/(e^2 eta_s) - 1``."""
    s = feedback.origin_round
    eta_s = eta_schedule(s) if callable(eta_schedule) else step_size(eta_schedule, s)
    return feedback.delay <= delay_threshold(eta_s)


def exp3_update(state: Exp3State, batch: Sequence[FeedbackEvent],
                probability_at_origin: Callable[[int], tuple[int, np.ndarray]] | None = None,
                keep_snapshots: bool = True) -> tuple[Exp3State, list[Exp3Snapshot]]:
    """Apply accepted feedback in the given order.

    ``probability_at_origin(s)`` returns ``(arm, p_s)``; by default the
    learner's own record of round ``s`` is used (and released).
    """
    snaps: list[Exp3Snapshot] = []
    for ev in batch:
        s = ev.origin_round
        if probability_at_origin is not None:
            arm, p_origin = probability_at_origin(s)
        else:
            rec = state.origin_record.pop(s, None)
            if rec is None:
                raise ContractViolation(f"no probability record for origin round {s}")
            arm, p_origin = rec
        if ev.action_taken is not None and int(ev.action_taken) != arm:
            raise ContractViolation(f"feedback for round {s} names arm {ev.action_taken}, recorded {arm}")
        p_before = state.probabilities
        ratio = float(np.max(p_before / p_origin))
        if ratio > state.max_ratio:
            state.max_ratio = ratio
        if ratio > RATIO_LIMIT:
            state.violations += 1
        if keep_snapshots:
            snaps.append(Exp3Snapshot(s, p_before.copy(), p_origin, ratio))
        eta_s = state.eta(s)
        gamma = eta_s if state.gamma_mode is GammaMode.EQUAL_ETA else 0.0
        inc = eta_s * state.update_scale * ev.cost_value / (p_origin[arm] + gamma)
        state.log_weights[arm] -= inc
        state.probabilities = softmax(state.log_weights)
        state.applied += 1
    return state, snaps


def exp3_fixed_eta(K: int, T: int, delay_sum_excl_missing: float) -> float:
    """Fixed step size tuned for a known horizon and delay sum."""
    return EXP3_ETA_LIMIT * math.sqrt(math.log(K) / (K * T + delay_sum_excl_missing))


class Exp3Learner:
    """Round-loop adapter: act, then receive a batch of delivered feedback."""

    def __init__(self, K: int, schedule: StepSizeSchedule, gamma_mode=GammaMode.ZERO,
                 filter_active: bool = True, eta_table: np.ndarray | None = None,
                 update_scale: float = 1.0) -> None:
        self.state = exp3_new(K, schedule, gamma_mode, eta_table)
        self.state.update_scale = update_scale
        self.filter_active = filter_active

    def act(self, rng: np.random.Generator | None = None, u: float | None = None) -> int:
        return exp3_act(self.state, rng, u)

    def receive(self, batch: Sequence[FeedbackEvent]) -> int:
        st = self.state
        accepted = []
        for ev in batch:
            if not self.filter_active or exp3_filter(ev, st.eta):
                accepted.append(ev)
            else:
                st.origin_record.pop(ev.origin_round, None)
                st.discarded += 1
        exp3_update(st, accepted, keep_snapshots=False)
        return len(accepted)

    @property
    def probabilities(self) -> np.ndarray:
        return self.state.probabilities


def discard_mask(delays: np.ndarray, etas: np.ndarray, T: int) -> np.ndarray:
    """Rounds whose feedback arrives within the horizon but fails the delay filter."""
    d = np.asarray(delays[:T], dtype=np.int64)
    t = np.arange(1, T + 1)
    arrives = t + d <= T
    return arrives & (d > 1.0 / (E2 * np.asarray(etas[:T])) - 1.0)


def exp3_regret_bound(K: int, T: int, eta: float, delays: np.ndarray) -> dict[str, float]:
    """Known-parameter regret ceiling for a fixed step size.

    ``ln K / eta + 4 eta K T + 4 eta * (delays outside missing/discarded)
    + |missing| + |discarded|``, with the realized sets of the delay sequence.
    """
    d = np.asarray(delays[:T], dtype=np.int64)
    t = np.arange(1, T + 1)
    missing = t + d > T
    disc = discard_mask(d, np.full(T, eta), T)
    kept = ~(missing | disc)
    dsum = float(d[kept].sum())
    value = math.log(K) / eta + 4 * eta * K * T + 4 * eta * dsum + missing.sum() + disc.sum()
    return {
        "bound": float(value),
        "missing": int(missing.sum()),
        "discarded": int(disc.sum()),
        "delay_sum_kept": dsum,
    }
