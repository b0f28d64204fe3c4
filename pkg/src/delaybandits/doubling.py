"""Two-dimensional doubling trick for unknown horizon and delay sum.

A time index ``h`` doubles with the round counter and a delay index ``w``
doubles with the cumulative count of outstanding samples. The ``(w, h)``
grid is partitioned into super-epochs; entering a new one restarts the
wrapped learner with parameters tuned for that super-epoch's largest
indices. Feedback generated in an earlier super-epoch is dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from .errors import ConfigurationError
from .stepsize import EXP3_ETA_LIMIT

INDEX_CAP = 62


class SuperEpochType(str, Enum):
    TIME_DOMINATED = "time_dominated"
    DELAY_DOMINATED = "delay_dominated"
    SINGLETON = "singleton"


@dataclass(frozen=True)
class RegretShape:
    """Bound of the form ``k1 D^d + k2 T^c + k3 T^a D^b``."""

    k1: float
    k2: float
    k3: float
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        if min(self.k1, self.k2, self.k3) < 0:
            raise ConfigurationError("shape constants must be non-negative")
        for e in (self.a, self.b, self.c, self.d):
            if not 0 <= e <= 1:
                raise ConfigurationError("shape exponents must lie in [0, 1]")

    def value(self, T: float, D: float) -> float:
        return self.k1 * D**self.d + self.k2 * T**self.c + self.k3 * T**self.a * D**self.b


def classify(w: int, h: int, shape: RegretShape) -> SuperEpochType:
    """Which super-epoch family the epoch ``(w, h)`` belongs to (time wins ties)."""
    s = shape
    cross = s.k3 * 2.0 ** (s.a * h) * 2.0 ** (s.b * w)
    if 2 * s.k2 * 2.0 ** (s.c * h) >= s.k1 * 2.0 ** (s.d * w) + cross:
        return SuperEpochType.TIME_DOMINATED
    if 2 * s.k1 * 2.0 ** (s.d * w) >= s.k2 * 2.0 ** (s.c * h) + cross:
        return SuperEpochType.DELAY_DOMINATED
    return SuperEpochType.SINGLETON


def super_epoch_key(w: int, h: int, shape: RegretShape) -> tuple:
    kind = classify(w, h, shape)
    if kind is SuperEpochType.TIME_DOMINATED:
        return ("h", h)
    if kind is SuperEpochType.DELAY_DOMINATED:
        return ("w", w)
    return ("s", w, h)


def maximal_indices(key: tuple, shape: RegretShape, cap: int = INDEX_CAP) -> tuple[int, int]:
    """Largest ``(w, h)`` inside the super-epoch named by ``key`` (capped)."""
    if key[0] == "h":
        h = key[1]
        ws = [w for w in range(cap + 1) if classify(w, h, shape) is SuperEpochType.TIME_DOMINATED]
        return (max(ws) if ws else 0), h
    if key[0] == "w":
        w = key[1]
        hs = [h for h in range(cap + 1) if classify(w, h, shape) is SuperEpochType.DELAY_DOMINATED]
        return w, (max(hs) if hs else 0)
    return key[1], key[2]


@dataclass
class SuperEpochRecord:
    nu: int
    kind: SuperEpochType
    key: tuple
    start: int
    end: int
    w_max: int
    h_max: int
    missing_sum: int
    params: Any
    completed: bool

    def missing_limit(self) -> float | None:
        """Cap on the summed outstanding counts implied by the epoch indices."""
        if self.kind is SuperEpochType.DELAY_DOMINATED:
            return 2.0 ** (self.key[1] - 1)
        if self.kind is SuperEpochType.TIME_DOMINATED:
            return 2.0 ** self.w_max
        return None


@dataclass
class WrapperState:
    shape: RegretShape
    param_factory: Callable[[int, int], Any]
    w: int = 0
    h: int = 0
    nu: int = 0
    missing_now: int = 0
    missing_cumsum: int = 0
    super_epoch_start_round: int = 1
    current_params: Any = None
    learner: Any = None
    received_in_epoch: int = 0
    epoch_missing_sum: int = 0
    key: tuple = ()
    t: int = 0
    history: list[SuperEpochRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.key:
            self.key = super_epoch_key(self.w, self.h, self.shape)
            self.current_params = self.param_factory(*maximal_indices(self.key, self.shape))

    @property
    def kind(self) -> SuperEpochType:
        return {"h": SuperEpochType.TIME_DOMINATED, "w": SuperEpochType.DELAY_DOMINATED}.get(
            self.key[0], SuperEpochType.SINGLETON
        )

    def _record(self, end: int, completed: bool) -> SuperEpochRecord:
        wm, hm = maximal_indices(self.key, self.shape)
        return SuperEpochRecord(self.nu, self.kind, self.key, self.super_epoch_start_round, end, wm, hm,
                                self.epoch_missing_sum, self.current_params, completed)

    def finish(self) -> list[SuperEpochRecord]:
        """All super-epochs of the run, the open one marked incomplete."""
        return self.history + [self._record(self.t, False)]


def wrapper_new(shape: RegretShape, param_factory: Callable[[int, int], Any]) -> WrapperState:
    return WrapperState(shape=shape, param_factory=param_factory)


def observe_round(state: WrapperState, t: int, n_feedback_used: int) -> WrapperState:
    """Update the outstanding-sample counters after round ``t``'s deliveries.

    ``n_feedback_used`` is the number of samples delivered at round ``t``
    that were generated in the current super-epoch.
    """
    state.t = t
    state.received_in_epoch += n_feedback_used
    m = (t - state.super_epoch_start_round + 1) - state.received_in_epoch
    state.missing_now = m
    state.missing_cumsum += m
    state.epoch_missing_sum += m
    while state.missing_cumsum >= 2**state.w:
        state.w += 1
    while t >= 2**state.h:
        state.h += 1
    return state


def maybe_restart(state: WrapperState, learner_factory: Callable[[Any], Any] | None = None
                  ) -> tuple[WrapperState, bool]:
    """Open a new super-epoch if ``(w, h)`` left the current one."""
    key = super_epoch_key(state.w, state.h, state.shape)
    if key == state.key:
        return state, False
    state.history.append(state._record(state.t, True))
    state.nu += 1
    state.key = key
    state.super_epoch_start_round = state.t + 1
    state.received_in_epoch = 0
    state.epoch_missing_sum = 0
    state.current_params = state.param_factory(*maximal_indices(key, state.shape))
    if learner_factory is not None:
        state.learner = learner_factory(state.current_params)
    return state, True


# ---------------------------------------------------------------- presets


@dataclass(frozen=True)
class Exp3Params:
    eta: float


@dataclass(frozen=True)
class FkmParams:
    eta: float
    delta: float


def exp3_shape(K: int) -> RegretShape:
    # From the fixed-step bound with eta tuned for (T, D):
    #   ln K / eta + 4 eta (K T + D) = (2 e^2 + 2 e^-2) sqrt(ln K (K T + D))
    #   <= (2 e^2 + 2 e^-2) (sqrt(K T ln K) + sqrt(D ln K)),
    # plus |M| <= sqrt(2 D) and |discarded| <= sqrt(D ln K).
    lk = math.log(K)
    coef = 2 * math.e**2 + 2 * math.exp(-2)
    return RegretShape(k1=coef * math.sqrt(lk) + math.sqrt(2) + math.sqrt(lk),
                       k2=coef * math.sqrt(K * lk), k3=0.0, a=0.0, b=0.0, c=0.5, d=0.5)


def fkm_shape(n: int, diameter: float, lipschitz: float = 1.0) -> RegretShape:
    # From the fixed-parameter bound with eta, delta tuned for (T, D), using
    # |M| <= sqrt(2 D) <= T^(1/3) D^(1/3) + 1, T - |M| <= T and delays <= D:
    #   (3 + |K|) delta L T        <= A (T^(3/4) + T^(1/3) D^(1/3)),  A = (3 + |K|) L
    #   eta n^2 T / (2 delta^2)    <= |K| n T^(3/4) / 2 + |K| sqrt(n) T^(1/3) D^(1/3) / 2
    #   |K|^2 / (2 eta)            <= |K| n T^(3/4) / 2 + |K| sqrt(n) T^(1/3) D^(1/3) / 2
    #   2 L n eta D / delta        <= 2 L |K| sqrt(n) T^(1/3) D^(1/3)
    A = (3 + diameter) * lipschitz
    return RegretShape(k1=0.0, k2=A + diameter * n,
                       k3=A + 0.5 * diameter * math.sqrt(n) + 2 * lipschitz * diameter * math.sqrt(n) + 2,
                       a=1.0 / 3.0, b=1.0 / 3.0, c=0.75, d=0.0)


def exp3_param_factory(K: int) -> Callable[[int, int], Exp3Params]:
    def factory(w: int, h: int) -> Exp3Params:
        return Exp3Params(EXP3_ETA_LIMIT * math.sqrt(math.log(K) / max(K * 2.0**h, 2.0**w)))

    return factory


def fkm_param_factory(n: int, diameter: float, delta0: float = 0.5) -> Callable[[int, int], FkmParams]:
    if not 0 < delta0 < 1:
        raise ConfigurationError("delta0 must lie in (0, 1)")

    def factory(w: int, h: int) -> FkmParams:
        eta = diameter * min((1.0 / n) * 2.0 ** (-0.75 * h), (1.0 / math.sqrt(n)) * 2.0 ** (-(h + w) / 3.0))
        delta = delta0 * max(2.0 ** (-h / 4.0), 2.0 ** ((w - 2.0 * h) / 3.0))
        return FkmParams(eta, min(max(delta, 1e-6), 1 - 1e-6))

    return factory


def preset_shape(algo: str, K: int | None = None, n: int | None = None, diameter: float | None = None,
                 delta0: float = 0.5, lipschitz: float = 1.0) -> tuple[RegretShape, Callable[[int, int], Any]]:
    """Shape constants and parameter map for ``"exp3"`` or ``"fkm"``."""
    algo = algo.lower()
    if algo == "exp3":
        if K is None or K < 2:
            raise ConfigurationError("EXP3 preset needs K >= 2")
        return exp3_shape(K), exp3_param_factory(K)
    if algo == "fkm":
        if n is None or diameter is None:
            raise ConfigurationError("FKM preset needs n and diameter")
        return fkm_shape(n, diameter, lipschitz), fkm_param_factory(n, diameter, delta0)
    raise ConfigurationError(f"unknown algorithm {algo!r}")


# ---------------------------------------------------------------- schedule pass


@dataclass
class WrapperSchedule:
    """Learner-independent outcome of the wrapper on a fixed delay sequence."""

    segments: list[SuperEpochRecord]
    w: np.ndarray
    h: np.ndarray
    nu: np.ndarray
    m: np.ndarray
    missing_cumsum: np.ndarray
    restarted: np.ndarray
    cross_discarded: int
    final_w: int
    final_h: int


def wrapper_schedule(delays: np.ndarray, T: int, shape: RegretShape,
                     param_factory: Callable[[int, int], Any]) -> WrapperSchedule:
    """Run the index bookkeeping for ``T`` rounds.

    Whether a sample counts toward the current super-epoch depends only on
    the delays and the super-epoch boundaries, never on the learner, so the
    segmentation can be computed up front.
    """
    d = np.asarray(delays[:T], dtype=np.int64)
    arrivals: dict[int, list[int]] = {}
    for s in range(1, T + 1):
        r = s + int(d[s - 1])
        if r <= T:
            arrivals.setdefault(r, []).append(s)
    epoch_of = np.zeros(T + 1, dtype=np.int64)
    st = wrapper_new(shape, param_factory)
    cols = {k: np.zeros(T, dtype=np.int64) for k in ("w", "h", "nu", "m", "cum", "restart")}
    cross = 0
    for t in range(1, T + 1):
        epoch_of[t] = st.nu
        got = 0
        for s in arrivals.get(t, ()):
            if epoch_of[s] == st.nu:
                got += 1
            else:
                cross += 1
        observe_round(st, t, got)
        cols["nu"][t - 1] = st.nu
        cols["m"][t - 1] = st.missing_now
        cols["cum"][t - 1] = st.missing_cumsum
        _, restarted = maybe_restart(st)
        cols["w"][t - 1] = st.w
        cols["h"][t - 1] = st.h
        cols["restart"][t - 1] = restarted
    return WrapperSchedule(st.finish(), cols["w"], cols["h"], cols["nu"], cols["m"], cols["cum"],
                           cols["restart"].astype(bool), cross, st.w, st.h)


def outstanding_report(schedule: WrapperSchedule, delays: np.ndarray, T: int) -> dict[str, Any]:
    """Check the per-super-epoch outstanding-sample caps and the final index caps."""
    from .delays import effective_delay_sum

    worst = 0.0
    violations = []
    for rec in schedule.segments:
        lim = rec.missing_limit()
        if lim is None or not rec.completed:
            continue
        worst = max(worst, rec.missing_sum / lim)
        if rec.missing_sum > lim:
            violations.append((rec.nu, rec.kind.value, rec.missing_sum, lim))
    D = effective_delay_sum(delays, T)
    w_cap = math.log2(D) + 1 if D > 0 else 1.0
    h_cap = math.log2(T + 2) - 1
    return {
        "epoch_violations": violations,
        "worst_epoch_ratio": worst,
        "W": schedule.final_w,
        "W_cap": w_cap,
        "H": schedule.final_h,
        "H_cap": h_cap,
        "W_ok": schedule.final_w <= w_cap,
        "H_ok": schedule.final_h <= h_cap,
    }
