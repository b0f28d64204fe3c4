"""Multi-agent play with per-player delays, ergodic statistics and equilibrium gaps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from .bodies import ConvexBody
from .delays import DelaySchedule
from .errors import ConfigurationError, ContractViolation
from .feedback import DeliveryQueue, FeedbackEvent
from .stepsize import StepSizeSchedule

SIMPLEX_TOL = 1e-9


@dataclass
class FiniteGame:
    """``utilities[n]`` is player n's payoff tensor over joint profiles, in [0, 1]."""

    utilities: list[np.ndarray]

    def __post_init__(self) -> None:
        self.utilities = [np.asarray(u, dtype=np.float64) for u in self.utilities]
        shape = self.utilities[0].shape
        if len(shape) != len(self.utilities):
            raise ConfigurationError(f"{len(self.utilities)} players but tensor rank {len(shape)}")
        for u in self.utilities:
            if u.shape != shape:
                raise ConfigurationError("utility tensors must share a shape")
            if u.min() < 0 or u.max() > 1:
                raise ConfigurationError("utilities must lie in [0, 1]")

    @property
    def n_players(self) -> int:
        return len(self.utilities)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.utilities[0].shape

    def flat(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([u.ravel() for u in self.utilities]))

    def strides(self) -> np.ndarray:
        counts = self.action_counts
        return np.array([int(np.prod(counts[n + 1 :])) for n in range(len(counts))], dtype=np.int64)


class ZeroSumKind(str, Enum):
    MATRIX = "matrix"
    CONVEX_CONCAVE = "convex_concave"


@dataclass
class ZeroSumGame:
    """Row player pays ``u(y, z)``, column player receives it.

    Matrix games use the bilinear extension of ``U``. Convex-concave games
    carry ``u`` plus closed-form best responses when available.
    """

    kind: ZeroSumKind
    U: np.ndarray | None = None
    u: Callable[[np.ndarray, np.ndarray], float] | None = None
    body_y: ConvexBody | None = None
    body_z: ConvexBody | None = None
    best_y: Callable[[np.ndarray], np.ndarray] | None = None
    best_z: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def matrix(cls, U) -> "ZeroSumGame":
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.min() < 0 or U.max() > 1:
            raise ConfigurationError("payoff matrix must be 2-D with entries in [0, 1]")
        return cls(ZeroSumKind.MATRIX, U=U)

    @classmethod
    def convex_concave(cls, u, body_y: ConvexBody, body_z: ConvexBody, best_y=None, best_z=None,
                       check: bool = True, rng: np.random.Generator | None = None) -> "ZeroSumGame":
        game = cls(ZeroSumKind.CONVEX_CONCAVE, u=u, body_y=body_y, body_z=body_z, best_y=best_y, best_z=best_z)
        if check:
            check_convex_concave(game, rng or np.random.default_rng(0))
        return game

    def to_finite(self) -> FiniteGame:
        """Two-player finite game: row utility ``1 - U``, column utility ``U``."""
        if self.kind is not ZeroSumKind.MATRIX:
            raise ConfigurationError("only matrix games have a finite form")
        return FiniteGame([1.0 - self.U, self.U.copy()])


def check_convex_concave(game: ZeroSumGame, rng: np.random.Generator, trials: int = 200, h: float = 1e-3) -> None:
    """Finite-difference spot check: convex in y, concave in z."""
    u = game.u
    for _ in range(trials):
        y = game.body_y.project(rng.uniform(-1, 1, game.body_y.dim), 1 - 2 * h)
        z = game.body_z.project(rng.uniform(-1, 1, game.body_z.dim), 1 - 2 * h)
        dy = rng.normal(size=game.body_y.dim)
        dy *= h / np.linalg.norm(dy)
        dz = rng.normal(size=game.body_z.dim)
        dz *= h / np.linalg.norm(dz)
        cy = u(y + dy, z) + u(y - dy, z) - 2 * u(y, z)
        cz = u(y, z + dz) + u(y, z - dz) - 2 * u(y, z)
        if cy < -1e-9 or cz > 1e-9:
            raise ConfigurationError("payoff is not convex in y and concave in z")


def game_value_bilinear(U, y, z) -> float:
    y = _check_simplex(y)
    z = _check_simplex(z)
    return float(y @ np.asarray(U, dtype=float) @ z)


def _check_simplex(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.min() < -SIMPLEX_TOL or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ContractViolation(f"not a probability vector: {p}")
    return p


# ---------------------------------------------------------------- ergodic statistics


def discounted_ergodic_distribution(joint_actions: np.ndarray, etas, action_counts: Sequence[int],
                                    use_probability_weights: bool = False,
                                    probabilities: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Step-size weighted distribution over joint profiles.

    In indicator mode each round adds ``eta_t`` to the played profile; with
    probability weights it adds ``eta_t`` times the product of the players'
    mixed strategies. ``probabilities[n]`` has shape (T, K_n).
    """
    w = np.asarray(etas, dtype=float)
    T = w.shape[0]
    counts = tuple(int(k) for k in action_counts)
    if use_probability_weights:
        if probabilities is None:
            raise ContractViolation("probability weights need per-round mixed strategies")
        rho = w[:, None] * probabilities[0][:T]
        for p in probabilities[1:]:
            rho = rho[..., None] * p[:T].reshape((T,) + (1,) * (rho.ndim - 1) + (p.shape[1],))
        rho = rho.sum(axis=0)
    else:
        A = np.asarray(joint_actions, dtype=np.int64).reshape(T, len(counts))
        flat = np.ravel_multi_index(tuple(A.T), counts)
        rho = np.bincount(flat, weights=w, minlength=int(np.prod(counts))).reshape(counts)
    return rho / w.sum()


def discounted_ergodic_average(points, etas) -> np.ndarray:
    """``sum_t eta_t x_t / sum_t eta_t``."""
    P = np.asarray(points, dtype=float)
    w = np.asarray(etas, dtype=float)[: P.shape[0]]
    return np.tensordot(w, P, axes=(0, 0)) / w.sum()


def prefix_ergodic_averages(points: np.ndarray, etas: np.ndarray, checkpoints: Sequence[int]) -> np.ndarray:
    """Ergodic average at each checkpoint horizon, shape (len(checkpoints), ...)."""
    P = np.asarray(points, dtype=float)
    w = np.asarray(etas, dtype=float)
    cw = np.cumsum(w)
    cp = np.cumsum(w.reshape((-1,) + (1,) * (P.ndim - 1)) * P, axis=0)
    return np.stack([cp[T - 1] / cw[T - 1] for T in checkpoints])


# ---------------------------------------------------------------- gaps


def cce_gap(rho: np.ndarray, game: FiniteGame) -> float:
    """Largest gain any player gets from a fixed deviation under ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != game.action_counts:
        raise ContractViolation(f"rho shape {rho.shape} != action counts {game.action_counts}")
    gaps = []
    for n, u in enumerate(game.utilities):
        base = float((rho * u).sum())
        others = rho.sum(axis=n, keepdims=True)
        axes = tuple(i for i in range(u.ndim) if i != n)
        dev = (others * u).sum(axis=axes)
        gaps.append(float(dev.max()) - base)
    return max(gaps)


def ne_gap_zero_sum(game: ZeroSumGame, y_bar, z_bar, grid_points: int = 1000) -> float:
    """Exploitability ``max(u - min_y u(y, z), max_z u(y, z) - u)``."""
    if game.kind is ZeroSumKind.MATRIX:
        y = _check_simplex(y_bar)
        z = _check_simplex(z_bar)
        U = game.U
        val = float(y @ U @ z)
        return max(val - float((U @ z).min()), float((y @ U).max()) - val)
    y = np.asarray(y_bar, dtype=float)
    z = np.asarray(z_bar, dtype=float)
    if not (game.body_y.contains(y) and game.body_z.contains(z)):
        raise ContractViolation("average strategies lie outside their bodies")
    u = game.u
    val = float(u(y, z))
    if game.best_y is not None:
        lo = float(u(game.best_y(z), z))
    else:
        lo = min(float(u(g, z)) for g in _grid(game.body_y, grid_points))
    if game.best_z is not None:
        hi = float(u(y, game.best_z(y)))
    else:
        hi = max(float(u(y, g)) for g in _grid(game.body_z, grid_points))
    return max(val - lo, hi - val)


def _grid(body: ConvexBody, points: int) -> np.ndarray:
    if body.dim != 1:
        raise ConfigurationError("grid best response supports 1-D actions only")
    return np.linspace(-body.size, body.size, points)[:, None]


# ---------------------------------------------------------------- instances


def matching_pennies() -> ZeroSumGame:
    """Row player pays 1 when the coins match."""
    return ZeroSumGame.matrix(np.eye(2))


def rock_paper_scissors() -> ZeroSumGame:
    """Row player's cost: 1 for a loss, 1/2 for a draw, 0 for a win."""
    return ZeroSumGame.matrix(np.array([[0.5, 1.0, 0.0], [0.0, 0.5, 1.0], [1.0, 0.0, 0.5]]))


def chicken() -> FiniteGame:
    """Symmetric game of chicken with actions (Dare, Chicken), scaled into [0, 1]."""
    u = np.array([[0.0, 1.0], [2.0 / 7.0, 6.0 / 7.0]])
    return FiniteGame([u, u.T.copy()])


def coordination(n_players: int = 2, k: int = 2) -> FiniteGame:
    shape = (k,) * n_players
    u = np.zeros(shape)
    for a in range(k):
        u[(a,) * n_players] = 1.0
    return FiniteGame([u.copy() for _ in range(n_players)])


def quadratic_saddle() -> ZeroSumGame:
    """``1/2 + (y^2 - z^2)/2`` on [-1, 1]^2 with saddle point at the origin."""
    body = ConvexBody.box(1, 1.0)
    return ZeroSumGame.convex_concave(
        lambda y, z: 0.5 + 0.5 * (float(np.sum(y * y)) - float(np.sum(z * z))),
        body, body, best_y=lambda z: np.zeros(1), best_z=lambda y: np.zeros(1),
    )


FINITE_GAMES: dict[str, Callable[[], Any]] = {
    "matching_pennies": matching_pennies,
    "rock_paper_scissors": rock_paper_scissors,
    "chicken": chicken,
    "coordination": coordination,
}


# ---------------------------------------------------------------- joint play


@dataclass
class JointTrajectory:
    """Joint play record; per-player arrays are indexed ``[t, n]``."""

    actions: np.ndarray
    losses: np.ndarray
    etas: np.ndarray
    delays: np.ndarray
    n_feedback_used: np.ndarray
    probabilities: list[np.ndarray] | None = None
    discarded: np.ndarray | None = None
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.losses.shape[0])

    def missing_counts(self) -> np.ndarray:
        """Outstanding samples per player after each round's deliveries."""
        t = np.arange(1, self.horizon + 1)[:, None]
        arrived = np.zeros_like(self.n_feedback_used)
        T = self.horizon
        for n in range(self.delays.shape[0]):
            r = np.arange(1, T + 1) + self.delays[n, :T]
            ok = r <= T
            arrived[:, n] = np.cumsum(np.bincount(r[ok] - 1, minlength=T))
        return t - arrived


def play_multiagent(game, learners: Sequence[Any], delay_schedules: Sequence[DelaySchedule],
                    eta_schedule: StepSizeSchedule | Sequence[StepSizeSchedule], T: int,
                    rng: np.random.Generator, utility: Callable[[Sequence[Any]], Sequence[float]] | None = None
                    ) -> JointTrajectory:
    """Generic joint round loop.

    Each player acts, receives cost ``1 - u_n(a_t)`` into its own delayed
    queue, then updates from its own deliveries. ``learners`` expose
    ``act(rng)`` and ``receive(batch)``. For non-tensor games pass
    ``utility(actions) -> per-player utilities``.
    """
    N = len(learners)
    if len(delay_schedules) != N:
        raise ConfigurationError(f"{N} learners but {len(delay_schedules)} delay schedules")
    if isinstance(eta_schedule, (list, tuple)):
        if len(set(eta_schedule)) != 1:
            raise ConfigurationError("all players must share one step-size schedule")
        eta_schedule = eta_schedule[0]
    if isinstance(game, FiniteGame) and game.n_players != N:
        raise ConfigurationError(f"game has {game.n_players} players, got {N} learners")
    delays = np.stack([s.sequence(T) for s in delay_schedules])
    queues = [DeliveryQueue() for _ in range(N)]
    actions: list[list[Any]] = []
    losses = np.empty((T, N))
    used = np.zeros((T, N), dtype=np.int64)
    probs: list[list[np.ndarray]] | None = [[] for _ in range(N)] if all(hasattr(l, "probabilities") for l in learners) else None
    for t in range(1, T + 1):
        if probs is not None:
            for n, l in enumerate(learners):
                probs[n].append(l.probabilities.copy())
        acts = [l.act(rng) for l in learners]
        if utility is not None:
            util = np.asarray(utility(acts), dtype=float)
        else:
            util = np.array([u[tuple(int(a) for a in acts)] for u in game.utilities])
        cost = 1.0 - util
        losses[t - 1] = cost
        actions.append(acts)
        for n in range(N):
            r = t + int(delays[n, t - 1])
            if r <= T:
                queues[n].enqueue(FeedbackEvent(t, r, float(cost[n]), acts[n] if np.ndim(acts[n]) == 0 else None))
            used[t - 1, n] = learners[n].receive(queues[n].drain(t))
    etas = eta_schedule.values(T)
    return JointTrajectory(
        actions=np.array(actions, dtype=object if utility is not None else np.int64),
        losses=losses,
        etas=etas,
        delays=delays,
        n_feedback_used=used,
        probabilities=[np.array(p) for p in probs] if probs is not None else None,
    )
