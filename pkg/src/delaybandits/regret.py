"""Per-round trajectories and regret accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .adversary import QuadraticLosses, grid_best_fixed


@dataclass
class Trajectory:
    """Record of one single-agent run.

    ``actions`` holds arm indices (shape (T,)) or points (shape (T, n)).
    ``n_feedback_used[t-1]`` counts samples applied to the learner at round t.
    """

    actions: np.ndarray
    losses: np.ndarray
    delays: np.ndarray
    n_feedback_used: np.ndarray
    etas: np.ndarray
    probabilities: np.ndarray | None = None
    points: np.ndarray | None = None
    delta: Any = None
    discarded: np.ndarray | None = None
    telemetry: dict[str, np.ndarray] = field(default_factory=dict)
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.losses.shape[0])

    @property
    def arrival_rounds(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1, dtype=np.int64) + self.delays

    def expected_losses(self, costs: np.ndarray) -> np.ndarray:
        """``<l_t, p_t>`` per round (finite arms only)."""
        if self.probabilities is None:
            raise ValueError("trajectory has no probability record")
        return np.einsum("ij,ij->i", costs, self.probabilities)


def _played(trajectory: Trajectory, costs, expected: bool) -> np.ndarray:
    if isinstance(costs, np.ndarray) and expected:
        return trajectory.expected_losses(costs)
    return trajectory.losses


def regret(trajectory: Trajectory, costs, body=None, expected: bool = False) -> float:
    """Cumulative cost minus the best fixed action in hindsight.

    ``costs`` is a (T, K) matrix, a :class:`QuadraticLosses` family (needs
    ``body``), or a callable ``f(t, X)`` (grid comparator, needs ``body``).
    With ``expected=True`` a finite-arm run is scored by ``<l_t, p_t>``.
    """
    T = trajectory.horizon
    played = float(_played(trajectory, costs, expected)[:T].sum())
    return played - best_fixed_value(costs, T, body)


def best_fixed_value(costs, T: int, body=None, weights=None) -> float:
    if isinstance(costs, np.ndarray):
        w = np.ones(T) if weights is None else np.asarray(weights, dtype=float)
        # lowest index wins ties via argmin
        totals = w @ costs[:T]
        return float(totals[int(np.argmin(totals))])
    if isinstance(costs, QuadraticLosses):
        return costs.best_fixed(body, weights)[1]
    if callable(costs):
        return grid_best_fixed(costs, body, T, weights=weights)[1]
    raise TypeError(f"unsupported cost description {type(costs)!r}")


def cumulative_regret(trajectory: Trajectory, costs, body=None, expected: bool = False) -> np.ndarray:
    """Running regret against the best fixed action of each prefix."""
    played = np.cumsum(_played(trajectory, costs, expected))
    if isinstance(costs, np.ndarray):
        best = np.cumsum(costs[: trajectory.horizon], axis=0).min(axis=1)
    elif isinstance(costs, QuadraticLosses):
        best = costs.running_best_values(body)
    else:
        raise TypeError("running regret needs a loss matrix or a quadratic family")
    return played - best


def discounted_regret_ratio(trajectory: Trajectory, costs, etas=None, body=None, expected: bool = False) -> float:
    """Step-size weighted regret divided by the total weight.

    The comparator minimises the weighted cumulative cost.
    """
    T = trajectory.horizon
    w = np.asarray(trajectory.etas if etas is None else etas, dtype=float)[:T]
    played = float(w @ _played(trajectory, costs, expected)[:T])
    best = best_fixed_value(costs, T, body, weights=w)
    return (played - best) / float(w.sum())


def discounted_regret_ratio_prefix(played: np.ndarray, counterfactual: np.ndarray, etas: np.ndarray,
                                   checkpoints) -> np.ndarray:
    """Discounted-regret ratio at each checkpoint from per-round arrays.

    ``played[t]`` is the realized cost, ``counterfactual[t, a]`` the cost
    action ``a`` would have had.
    """
    cw = np.cumsum(etas)
    cp = np.cumsum(etas * played)
    cc = np.cumsum(etas[:, None] * counterfactual, axis=0)
    out = []
    for T in checkpoints:
        i = T - 1
        out.append((cp[i] - cc[i].min()) / cw[i])
    return np.asarray(out)


def best_arm(costs: np.ndarray, weights=None) -> int:
    w = np.ones(costs.shape[0]) if weights is None else weights
    return int(np.argmin(w @ costs))


Comparator = Callable[[int, np.ndarray], np.ndarray]
