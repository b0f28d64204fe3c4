"""Timestamped delivery of delayed bandit feedback."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any

from .errors import ContractViolation

_COST_TOL = 1e-12


@dataclass(frozen=True)
class FeedbackEvent:
    """One cost sample: generated at ``origin_round``, visible at ``arrival_round``."""

    origin_round: int
    arrival_round: int
    cost_value: float
    action_taken: Any = None

    def __post_init__(self) -> None:
        if self.arrival_round <= self.origin_round:
            raise ContractViolation(
                f"arrival {self.arrival_round} must come after origin {self.origin_round}"
            )
        if not (-_COST_TOL <= self.cost_value <= 1.0 + _COST_TOL):
            raise ContractViolation(f"cost {self.cost_value!r} outside [0, 1]")

    @property
    def delay(self) -> int:
        return self.arrival_round - self.origin_round


@dataclass
class DeliveryQueue:
    """Pending feedback keyed by arrival round.

    ``drain(t)`` must be called with strictly increasing ``t``; events that
    share an arrival round come back in ascending origin order.
    """

    pending: dict[int, list[FeedbackEvent]] = field(default_factory=lambda: defaultdict(list))
    delivered_count: int = 0
    current_round: int = 0

    def enqueue(self, event: FeedbackEvent) -> "DeliveryQueue":
        if event.arrival_round <= self.current_round:
            raise ContractViolation(
                f"arrival round {event.arrival_round} is not after current round {self.current_round}"
            )
        self.pending[event.arrival_round].append(event)
        return self

    def drain(self, t: int) -> list[FeedbackEvent]:
        if t <= self.current_round:
            raise ContractViolation(f"drain({t}) after drain({self.current_round})")
        self.current_round = t
        batch = self.pending.pop(t, [])
        batch.sort(key=lambda e: e.origin_round)
        self.delivered_count += len(batch)
        return batch

    def pending_origins(self) -> list[int]:
        """Origins still in flight (the missing set once the horizon is reached)."""
        return sorted(e.origin_round for evs in self.pending.values() for e in evs)

    def __len__(self) -> int:
        return sum(len(v) for v in self.pending.values())


def enqueue(queue: DeliveryQueue, event: FeedbackEvent) -> DeliveryQueue:
    return queue.enqueue(event)


def drain(queue: DeliveryQueue, t: int) -> list[FeedbackEvent]:
    return queue.drain(t)
