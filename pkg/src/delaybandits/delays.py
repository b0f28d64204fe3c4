"""Delay schedules and the delay bookkeeping used by every learner.

Rounds are 1-indexed throughout: ``t = 1`` is the first round played.
Delays are pre-committed, so a schedule is a pure function of ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation

# Relative slack for ceil() of float powers: 16**0.75 evaluates to
# 8.000000000000002 and must still give 8.
_CEIL_RTOL = 1e-12


class DelayKind(str, Enum):
    CONSTANT = "constant"
    POWER_LAW = "power_law"
    LINEAR = "linear"
    LINEAR_LOG = "linear_log"
    EXPLICIT = "explicit"
    RANDOM_BOUNDED = "random_bounded"


def _ceil_tol(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    near = np.rint(x)
    snap = np.abs(x - near) <= _CEIL_RTOL * np.maximum(1.0, np.abs(x))
    return np.where(snap, near, np.ceil(x))


@dataclass(frozen=True)
class DelaySchedule:
    """Per-round delay generator.

    Use the named constructors (``constant``, ``power_law``, ...) rather
    than filling the fields by hand.
    """

    kind: DelayKind
    d: int = 1
    alpha: float = 1.0
    delays: tuple[int, ...] = ()
    max_delay: int = 1
    seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.kind is DelayKind.CONSTANT and self.d < 1:
            raise ConfigurationError(f"constant delay must be >= 1, got {self.d}")
        if self.kind is DelayKind.POWER_LAW and self.alpha < 0:
            raise ConfigurationError(f"power-law exponent must be >= 0, got {self.alpha}")
        if self.kind is DelayKind.EXPLICIT and any(int(v) < 1 for v in self.delays):
            raise ConfigurationError("explicit delays must all be >= 1")
        if self.kind is DelayKind.RANDOM_BOUNDED and self.max_delay < 1:
            raise ConfigurationError(f"max delay must be >= 1, got {self.max_delay}")

    @classmethod
    def constant(cls, d: int) -> "DelaySchedule":
        return cls(DelayKind.CONSTANT, d=int(d))

    @classmethod
    def power_law(cls, alpha: float) -> "DelaySchedule":
        return cls(DelayKind.POWER_LAW, alpha=float(alpha))

    @classmethod
    def linear(cls) -> "DelaySchedule":
        return cls(DelayKind.LINEAR)

    @classmethod
    def linear_log(cls) -> "DelaySchedule":
        return cls(DelayKind.LINEAR_LOG)

    @classmethod
    def explicit(cls, delays: Sequence[int]) -> "DelaySchedule":
        return cls(DelayKind.EXPLICIT, delays=tuple(int(v) for v in delays))

    @classmethod
    def random_bounded(cls, max_delay: int, seed: int) -> "DelaySchedule":
        return cls(DelayKind.RANDOM_BOUNDED, max_delay=int(max_delay), seed=int(seed))

    def sequence(self, T: int) -> np.ndarray:
        """Delays ``d_1..d_T`` as an int64 array."""
        T = int(T)
        if T < 0:
            raise ContractViolation("horizon must be non-negative")
        t = np.arange(1, T + 1, dtype=np.float64)
        kind = self.kind
        if kind is DelayKind.CONSTANT:
            out = np.full(T, self.d, dtype=np.int64)
        elif kind is DelayKind.POWER_LAW:
            out = _ceil_tol(t**self.alpha).astype(np.int64)
        elif kind is DelayKind.LINEAR:
            out = np.arange(1, T + 1, dtype=np.int64)
        elif kind is DelayKind.LINEAR_LOG:
            out = _ceil_tol(t * np.log(t)).astype(np.int64)
        elif kind is DelayKind.EXPLICIT:
            if len(self.delays) < T:
                raise ContractViolation(
                    f"explicit delay list has {len(self.delays)} entries, horizon is {T}"
                )
            out = np.asarray(self.delays[:T], dtype=np.int64)
        elif kind is DelayKind.RANDOM_BOUNDED:
            out = self._random_prefix(T)
        else:  # pragma: no cover
            raise ConfigurationError(f"unknown delay kind {kind}")
        return np.maximum(out, 1)

    def _random_prefix(self, T: int) -> np.ndarray:
        # Drawn in fixed-size blocks so that any prefix is reproducible
        # regardless of which horizon was asked for first.
        block = 4096
        nblocks = -(-T // block)
        blocks = self._cache.setdefault("blocks", [])
        while len(blocks) < nblocks:
            ss = np.random.SeedSequence(self.seed, spawn_key=(len(blocks),))
            rng = np.random.default_rng(ss)
            blocks.append(rng.integers(1, self.max_delay + 1, size=block, dtype=np.int64))
        if T == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(blocks[:nblocks])[:T].copy()

    def describe(self) -> str:
        k = self.kind
        if k is DelayKind.CONSTANT:
            return f"constant({self.d})"
        if k is DelayKind.POWER_LAW:
            return f"power_law({self.alpha:g})"
        if k is DelayKind.RANDOM_BOUNDED:
            return f"random_bounded({self.max_delay},seed={self.seed})"
        if k is DelayKind.EXPLICIT:
            return f"explicit(len={len(self.delays)})"
        return k.value


def generate_delay(schedule: DelaySchedule, t: int) -> int:
    """Delay ``d_t`` of round ``t`` (``t >= 1``)."""
    if t < 1:
        raise ContractViolation(f"round index must be >= 1, got {t}")
    k = schedule.kind
    if k is DelayKind.CONSTANT:
        return schedule.d
    if k is DelayKind.LINEAR:
        return int(t)
    if k is DelayKind.EXPLICIT:
        if t > len(schedule.delays):
            raise ContractViolation(
                f"explicit delay list exhausted at round {t} (length {len(schedule.delays)})"
            )
        return int(schedule.delays[t - 1])
    if k is DelayKind.RANDOM_BOUNDED:
        return int(schedule.sequence(t)[-1])
    if k is DelayKind.POWER_LAW:
        return max(1, int(_ceil_tol(float(t) ** schedule.alpha)))
    if k is DelayKind.LINEAR_LOG:
        return max(1, int(_ceil_tol(t * math.log(t))))
    raise ConfigurationError(f"unknown delay kind {k}")  # pragma: no cover


def effective_delay_sum(delays: Sequence[int], T: int) -> int:
    """``sum_t min(d_t, T - t + 1)`` over the first ``T`` rounds."""
    d = np.asarray(delays, dtype=np.int64)
    if d.shape[0] < T:
        raise ContractViolation("delay sequence shorter than horizon")
    if T <= 0:
        return 0
    rem = T - np.arange(1, T + 1, dtype=np.int64) + 1
    return int(np.minimum(d[:T], rem).sum())


def missing_mask(delays: Sequence[int], T: int) -> np.ndarray:
    """Boolean mask over rounds ``1..T``: feedback lands after the horizon."""
    d = np.asarray(delays, dtype=np.int64)
    if d.shape[0] < T:
        raise ContractViolation("delay sequence shorter than horizon")
    t = np.arange(1, T + 1, dtype=np.int64)
    return t + d[:T] > T


def missing_set(delays: Sequence[int], T: int) -> set[int]:
    """Rounds ``t <= T`` whose feedback would arrive after ``T``."""
    if T <= 0:
        return set()
    return {int(i) + 1 for i in np.flatnonzero(missing_mask(delays, T))}


def arrival_csr(delays: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Group origins by arrival round for the kernels (0-indexed rounds).

    Returns ``(indptr, origins)``: origins arriving at round index ``j`` are
    ``origins[indptr[j]:indptr[j + 1]]``, ascending. Only arrivals with
    index ``< T`` are kept.
    """
    d = np.asarray(delays, dtype=np.int64)[:T]
    idx = np.arange(T, dtype=np.int64)
    arr = idx + d
    keep = arr < T
    src = idx[keep]
    dst = arr[keep]
    order = np.argsort(dst, kind="stable")
    origins = src[order].astype(np.int64)
    counts = np.bincount(dst, minlength=T) if T > 0 else np.zeros(0, dtype=np.int64)
    indptr = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(counts[:T], out=indptr[1:])
    return indptr, origins
