"""Cost generation: oblivious and adaptive adversaries, test loss families.

Costs must lie in [0, 1]. Values outside by more than ``COST_TOL`` raise;
values within rounding distance are snapped onto the interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation

COST_TOL = 1e-12


def check_costs(values) -> np.ndarray:
    """Validate costs against [0, 1] and snap rounding noise."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < -COST_TOL or arr.max() > 1 + COST_TOL):
        bad = arr[~((arr >= -COST_TOL) & (arr <= 1 + COST_TOL))]
        raise ContractViolation(f"adversary produced cost outside [0, 1]: {bad.ravel()[:5]}")
    return np.clip(arr, 0.0, 1.0)


class AdversaryKind(str, Enum):
    OBLIVIOUS = "oblivious"
    ADAPTIVE = "adaptive"


class ObliviousAdversary:
    """Cost vectors fixed before play; ``losses`` has shape (T, K)."""

    kind = AdversaryKind.OBLIVIOUS

    def __init__(self, losses) -> None:
        self.losses = check_costs(losses)
        if self.losses.ndim != 2:
            raise ConfigurationError("loss matrix must be 2-D (rounds x arms)")
        self.losses.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.losses.shape[0]

    def cost_vector(self, t: int, history: Sequence[int] = ()) -> np.ndarray:
        return self.losses[t - 1]


class AdaptiveAdversary:
    """Costs chosen from the actions strictly before the current round.

    ``callback(t, past_actions)`` returns the length-K cost vector of round t.
    The adversary only ever sees a copy of ``a_1..a_{t-1}``.
    """

    kind = AdversaryKind.ADAPTIVE

    def __init__(self, callback: Callable[[int, tuple], Sequence[float]], arms: int) -> None:
        self.callback = callback
        self.arms = int(arms)
        self.losses: list[np.ndarray] = []

    def cost_vector(self, t: int, history: Sequence[int]) -> np.ndarray:
        if len(history) != t - 1:
            raise ContractViolation(f"round {t} adversary given {len(history)} past actions")
        vec = check_costs(self.callback(t, tuple(history)))
        if vec.shape != (self.arms,):
            raise ContractViolation(f"adaptive adversary returned shape {vec.shape}")
        self.losses.append(vec)
        return vec


# ---------------------------------------------------------------- finite-arm instances


def bernoulli_losses(T: int, means: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli costs with the given per-arm means."""
    means = np.asarray(means, dtype=float)
    if means.min() < 0 or means.max() > 1:
        raise ConfigurationError("Bernoulli means must lie in [0, 1]")
    return (rng.random((T, means.size)) < means).astype(np.float64)


def gap_losses(T: int, K: int, gap: float, best: int = 0) -> np.ndarray:
    """Deterministic costs: ``0.5 - gap/2`` on ``best``, ``0.5 + gap/2`` elsewhere."""
    if not 0 <= gap <= 1:
        raise ConfigurationError("gap must lie in [0, 1]")
    out = np.full((T, K), 0.5 + gap / 2.0)
    out[:, best] = 0.5 - gap / 2.0
    return out


def minimax_gap(K: int, T: int, scale: float = 12.0) -> float:
    """Gap ``min(1, scale * sqrt(K / T))``: the hardest gap at horizon T."""
    return min(1.0, scale * math.sqrt(K / T))


def switching_losses(T: int, K: int, best: int = 0) -> np.ndarray:
    """Zero costs on the first half; afterwards arm ``best`` costs 0, others 1."""
    out = np.zeros((T, K))
    half = T // 2
    out[half:, :] = 1.0
    out[half:, best] = 0.0
    return out


# ---------------------------------------------------------------- convex loss families


@dataclass
class QuadraticLosses:
    """Per-round ``l_t(x) = q_t * ||x - c_t||^2 + <v_t, x> + b_t``.

    Covers both isotropic quadratics and linear functions (``q_t = 0``).
    ``lipschitz`` is the known constant of the family over its body.
    """

    curvature: np.ndarray
    center: np.ndarray
    slope: np.ndarray
    offset: np.ndarray
    lipschitz: float

    def __post_init__(self) -> None:
        self.curvature = np.ascontiguousarray(self.curvature, dtype=np.float64)
        self.center = np.ascontiguousarray(self.center, dtype=np.float64)
        self.slope = np.ascontiguousarray(self.slope, dtype=np.float64)
        self.offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        T = self.curvature.shape[0]
        if self.center.ndim != 2 or self.center.shape[0] != T or self.slope.shape != self.center.shape:
            raise ConfigurationError("center/slope must have shape (T, n)")
        if self.offset.shape != (T,):
            raise ConfigurationError("offset must have shape (T,)")
        if np.any(self.curvature < 0):
            raise ConfigurationError("curvature must be non-negative (convexity)")

    @property
    def horizon(self) -> int:
        return self.curvature.shape[0]

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    def head(self, T: int) -> "QuadraticLosses":
        """The first ``T`` rounds as a family of their own."""
        return QuadraticLosses(self.curvature[:T], self.center[:T], self.slope[:T], self.offset[:T], self.lipschitz)

    def value(self, t: int, x) -> float:
        i = t - 1
        x = np.asarray(x, dtype=float)
        diff = x - self.center[i]
        val = self.curvature[i] * float(diff @ diff) + float(self.slope[i] @ x) + self.offset[i]
        return float(check_costs(val))

    def values(self, points: np.ndarray) -> np.ndarray:
        """Cost of round t at ``points[t-1]`` for every round, shape (T,)."""
        diff = points - self.center
        val = self.curvature * np.einsum("ij,ij->i", diff, diff) + np.einsum("ij,ij->i", self.slope, points) + self.offset
        return check_costs(val)

    def totals_at(self, x: np.ndarray, upto: int | None = None) -> float:
        """``sum_t l_t(x)`` over the first ``upto`` rounds (all by default)."""
        sl = slice(0, upto)
        diff = x[None, :] - self.center[sl]
        return float(
            (self.curvature[sl] * np.einsum("ij,ij->i", diff, diff)).sum()
            + (self.slope[sl] @ x).sum()
            + self.offset[sl].sum()
        )

    def _minimizer(self, Q, S, V, body) -> np.ndarray:
        # sum_t l_t(x) = Q ||x||^2 - 2 <x, S> + <x, V> + const
        if Q > 0:
            return body.project(((S - V / 2.0) / Q))
        return body.linear_minimizer(V)

    def best_fixed(self, body, weights: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        """Exact minimizer over ``body`` of ``sum_t w_t l_t(x)`` (unit weights by default)."""
        w = np.ones(self.horizon) if weights is None else np.asarray(weights, dtype=float)
        qw = self.curvature * w
        Q = qw.sum()
        S = qw @ self.center
        V = w @ self.slope
        x = self._minimizer(Q, S, V, body)
        diff = x[None, :] - self.center
        val = float((qw * np.einsum("ij,ij->i", diff, diff)).sum() + (w * (self.slope @ x)).sum() + (w * self.offset).sum())
        return x, val

    def running_best_values(self, body, weights: np.ndarray | None = None) -> np.ndarray:
        """``min_x sum_{s<=t} w_s l_s(x)`` for every prefix t, shape (T,)."""
        w = np.ones(self.horizon) if weights is None else np.asarray(weights, dtype=float)
        qw = self.curvature * w
        Q = np.cumsum(qw)
        S = np.cumsum(qw[:, None] * self.center, axis=0)
        V = np.cumsum(w[:, None] * self.slope, axis=0)
        C = np.cumsum(qw * np.einsum("ij,ij->i", self.center, self.center))
        B = np.cumsum(w * self.offset)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(Q[:, None] > 0, (S - V / 2.0) / np.where(Q > 0, Q, 1.0)[:, None], 0.0)
        xs = body.project_rows(m)
        lin = Q <= 0
        if np.any(lin):
            xs[lin] = body.linear_minimizer_rows(V[lin])
        return Q * np.einsum("ij,ij->i", xs, xs) - 2 * np.einsum("ij,ij->i", xs, S) + C + np.einsum("ij,ij->i", xs, V) + B


def grid_best_fixed(loss_fn: Callable[[int, np.ndarray], np.ndarray], body, T: int,
                    points_per_dim: int | None = None, weights=None) -> tuple[np.ndarray, float]:
    """Grid-search comparator for arbitrary convex losses (n <= 2).

    ``loss_fn(t, X)`` evaluates round t at every row of ``X``. Grid points
    outside the body are skipped. Defaults: 10^4 points in 1-D, 10^3 per
    axis in 2-D.
    """
    n = body.dim
    if n > 2:
        raise ConfigurationError("grid comparator supports n <= 2")
    if points_per_dim is None:
        points_per_dim = 10_000 if n == 1 else 1_000
    half = body.half_extent()
    axis = np.linspace(-half, half, points_per_dim)
    grid = axis[:, None] if n == 1 else np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    grid = grid[body.contains_rows(grid)]
    w = np.ones(T) if weights is None else np.asarray(weights, dtype=float)
    total = np.zeros(grid.shape[0])
    for t in range(1, T + 1):
        total += w[t - 1] * np.asarray(loss_fn(t, grid), dtype=float)
    k = int(np.argmin(total))
    return grid[k].copy(), float(total[k])


def quadratic_tracking_losses(T: int, n: int, rng: np.random.Generator, radius: float = 1.0) -> QuadraticLosses:
    """``||x - c_t||^2 / (2r)^2`` on Ball(r) with centers drawn in the ball.

    Centers mix a fixed anchor with per-round jitter so the comparator is
    interior but the sequence is not constant. Lipschitz constant: ``1/r``.
    """
    anchor = rng.normal(size=n)
    anchor *= 0.5 * radius / np.linalg.norm(anchor)
    jitter = rng.normal(size=(T, n))
    jitter *= (0.5 * radius * rng.random(T) ** (1.0 / n) / np.linalg.norm(jitter, axis=1))[:, None]
    centers = anchor + jitter
    scale = 1.0 / (2.0 * radius) ** 2
    return QuadraticLosses(
        curvature=np.full(T, scale),
        center=centers,
        slope=np.zeros((T, n)),
        offset=np.zeros(T),
        lipschitz=2.0 * (2.0 * radius) * scale,
    )


def linear_losses(T: int, n: int, rng: np.random.Generator, radius: float = 1.0) -> QuadraticLosses:
    """``1/2 + <theta, x> / (2r)`` with a fixed random unit ``theta``; L = 1/(2r)."""
    theta = rng.normal(size=n)
    theta /= np.linalg.norm(theta)
    slope = np.tile(theta / (2.0 * radius), (T, 1))
    return QuadraticLosses(
        curvature=np.zeros(T),
        center=np.zeros((T, n)),
        slope=slope,
        offset=np.full(T, 0.5),
        lipschitz=1.0 / (2.0 * radius),
    )


def switching_quadratic_losses(T: int, n: int, diameter: float) -> QuadraticLosses:
    """Zero on the first half, then ``||x - 1/sqrt(n)||^2 / (diam + 1)^2``.

    Built for Ball(1): the target ``(1, ..., 1)/sqrt(n)`` lies on the
    boundary, so costs stay in [0, 4/(diam+1)^2].
    """
    half = T // 2
    scale = 1.0 / (diameter + 1.0) ** 2
    curv = np.zeros(T)
    curv[half:] = scale
    target = np.full(n, 1.0 / math.sqrt(n))
    centers = np.tile(target, (T, 1))
    return QuadraticLosses(
        curvature=curv,
        center=centers,
        slope=np.zeros((T, n)),
        offset=np.zeros(T),
        lipschitz=2.0 * 2.0 * scale,
    )
