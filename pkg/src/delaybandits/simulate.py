"""Run learners against adversaries on top of the selected kernel backend."""
from __future__ import annotations

from typing import Any, Callable

import numpy as np

from . import _backend
from .adversary import QuadraticLosses, check_costs
from .bodies import ConvexBody
from .delays import arrival_csr
from .doubling import (RegretShape, WrapperSchedule, maybe_restart, observe_round, wrapper_new,
                       wrapper_schedule)
from .errors import ConfigurationError
from .exp3 import Exp3Learner, GammaMode
from .feedback import DeliveryQueue, FeedbackEvent
from .fkm import FkmLearner, unit_rows
from .games import FiniteGame, JointTrajectory
from .regret import Trajectory
from .stepsize import EXP3_ETA_LIMIT, StepSizeSchedule


def _kernels(kernels):
    return _backend.kernels if kernels is None else kernels


def _check_exp3_etas(etas: np.ndarray) -> None:
    if etas.size and not etas.max() < EXP3_ETA_LIMIT:
        raise ConfigurationError(f"EXP3 step sizes must stay below e^-2/2, got max {etas.max():.6g}")
    if etas.size and not etas.min() > 0:
        raise ConfigurationError("step sizes must be positive")


def run_exp3(losses: np.ndarray, delays: np.ndarray, etas: np.ndarray, rng: np.random.Generator,
             gamma_mode: GammaMode | str = GammaMode.ZERO, filter_active: bool = True,
             update_scale: float = 1.0, kernels=None, uniforms: np.ndarray | None = None) -> Trajectory:
    """EXP3 against an oblivious loss matrix of shape (T, K)."""
    losses = np.ascontiguousarray(check_costs(losses))
    T = losses.shape[0]
    etas = np.ascontiguousarray(etas[:T], dtype=np.float64)
    _check_exp3_etas(etas)
    delays = np.asarray(delays[:T], dtype=np.int64)
    u = rng.random(T) if uniforms is None else np.ascontiguousarray(uniforms[:T], dtype=np.float64)
    indptr, origins = arrival_csr(delays, T)
    gamma = GammaMode(gamma_mode) is GammaMode.EQUAL_ETA
    acts, probs, used, disc, rmax, viol = _kernels(kernels).exp3_run(
        losses, indptr, origins, etas, gamma, u, bool(filter_active), float(update_scale)
    )
    return Trajectory(
        actions=acts,
        losses=losses[np.arange(T), acts],
        delays=delays,
        n_feedback_used=used,
        etas=etas,
        probabilities=probs,
        discarded=disc.astype(bool),
        stats={"max_ratio": float(rmax), "violations": int(viol), "discarded": int(disc.sum())},
    )


def run_fkm(family: QuadraticLosses, body: ConvexBody, delta: float, etas: np.ndarray, delays: np.ndarray,
            rng: np.random.Generator, kernels=None, units: np.ndarray | None = None) -> Trajectory:
    """FKM against a quadratic/linear loss family."""
    T, n = family.center.shape
    if n != body.dim:
        raise ConfigurationError(f"loss dimension {n} != body dimension {body.dim}")
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    etas = np.ascontiguousarray(etas[:T], dtype=np.float64)
    delays = np.asarray(delays[:T], dtype=np.int64)
    U = unit_rows(rng.standard_normal((T, n))) if units is None else np.ascontiguousarray(units[:T])
    indptr, origins = arrival_csr(delays, T)
    acts, xs, loss, used = _kernels(kernels).fkm_run(
        family.curvature, family.center, family.slope, family.offset, body.code, body.size,
        float(delta), etas, U, indptr, origins
    )
    return Trajectory(actions=acts, losses=loss, delays=delays, n_feedback_used=used, etas=etas,
                      points=xs, delta=float(delta))


def run_exp3_game(game: FiniteGame, delays: np.ndarray, etas: np.ndarray, rng: np.random.Generator,
                  gamma_mode: GammaMode | str = GammaMode.ZERO, filter_active: bool = True,
                  update_scale: float = 1.0, kernels=None) -> JointTrajectory:
    """All players run EXP3 with one shared step-size sequence; ``delays`` is (N, T)."""
    N = game.n_players
    delays = np.atleast_2d(np.asarray(delays, dtype=np.int64))
    if delays.shape[0] != N:
        raise ConfigurationError(f"{N} players but {delays.shape[0]} delay rows")
    etas = np.ascontiguousarray(etas, dtype=np.float64)
    T = etas.shape[0]
    _check_exp3_etas(etas)
    ips, orgs = zip(*(arrival_csr(delays[n], T) for n in range(N)))
    indptr = np.ascontiguousarray(np.stack(ips))
    offsets = np.concatenate([[0], np.cumsum([len(o) for o in orgs])]).astype(np.int64)
    origins = np.ascontiguousarray(np.concatenate(orgs).astype(np.int64))
    u = rng.random((T, N))
    counts = np.asarray(game.action_counts, dtype=np.int64)
    acts, probs, loss, used, disc, rmax, viol = _kernels(kernels).game_run(
        game.flat(), counts, game.strides(), indptr, origins, offsets, etas,
        GammaMode(gamma_mode) is GammaMode.EQUAL_ETA, u, bool(filter_active), float(update_scale)
    )
    offs = np.concatenate([[0], np.cumsum(counts)])
    return JointTrajectory(
        actions=acts, losses=loss, etas=etas, delays=delays[:, :T], n_feedback_used=used,
        probabilities=[probs[:, offs[n] : offs[n + 1]] for n in range(N)],
        discarded=disc.astype(bool),
        stats={"max_ratio": float(rmax), "violations": int(viol), "discarded": int(disc.sum())},
    )


# ---------------------------------------------------------------- wrapped runs


def _telemetry(sched: WrapperSchedule) -> dict[str, np.ndarray]:
    return {"w": sched.w, "h": sched.h, "nu": sched.nu, "m_t": sched.m,
            "missing_cumsum": sched.missing_cumsum, "restarted": sched.restarted.astype(np.int64)}


def run_wrapped_exp3(losses: np.ndarray, delays: np.ndarray, rng: np.random.Generator, shape: RegretShape,
                     param_factory, gamma_mode=GammaMode.ZERO, kernels=None,
                     schedule: WrapperSchedule | None = None) -> Trajectory:
    """EXP3 restarted per super-epoch; one kernel call per segment."""
    losses = np.ascontiguousarray(check_costs(losses))
    T = losses.shape[0]
    delays = np.asarray(delays[:T], dtype=np.int64)
    sched = schedule or wrapper_schedule(delays, T, shape, param_factory)
    u = rng.random(T)
    parts = []
    for rec in sched.segments:
        a, b = rec.start, rec.end
        if b < a:
            continue
        L = b - a + 1
        parts.append(run_exp3(losses[a - 1 : b], delays[a - 1 : b], np.full(L, rec.params.eta), rng,
                              gamma_mode, True, 1.0, kernels, uniforms=u[a - 1 : b]))
    traj = _concat(parts, delays)
    traj.probabilities = np.concatenate([p.probabilities for p in parts])
    traj.discarded = np.concatenate([p.discarded for p in parts])
    traj.telemetry = _telemetry(sched)
    traj.stats = {
        "max_ratio": max(p.stats["max_ratio"] for p in parts),
        "violations": sum(p.stats["violations"] for p in parts),
        "discarded": sum(p.stats["discarded"] for p in parts),
        "cross_discarded": sched.cross_discarded,
        "super_epochs": len(sched.segments),
    }
    return traj


def run_wrapped_fkm(family: QuadraticLosses, body: ConvexBody, delays: np.ndarray, rng: np.random.Generator,
                    shape: RegretShape, param_factory, kernels=None,
                    schedule: WrapperSchedule | None = None) -> Trajectory:
    T, n = family.center.shape
    delays = np.asarray(delays[:T], dtype=np.int64)
    sched = schedule or wrapper_schedule(delays, T, shape, param_factory)
    U = unit_rows(rng.standard_normal((T, n)))
    parts = []
    deltas = []
    for rec in sched.segments:
        a, b = rec.start, rec.end
        if b < a:
            continue
        L = b - a + 1
        sub = QuadraticLosses(family.curvature[a - 1 : b], family.center[a - 1 : b], family.slope[a - 1 : b],
                              family.offset[a - 1 : b], family.lipschitz)
        parts.append(run_fkm(sub, body, rec.params.delta, np.full(L, rec.params.eta), delays[a - 1 : b], rng,
                             kernels, units=U[a - 1 : b]))
        deltas.append(np.full(L, rec.params.delta))
    traj = _concat(parts, delays)
    traj.points = np.concatenate([p.points for p in parts])
    traj.delta = np.concatenate(deltas)
    traj.telemetry = _telemetry(sched)
    traj.stats = {"cross_discarded": sched.cross_discarded, "super_epochs": len(sched.segments)}
    return traj


def _concat(parts: list[Trajectory], delays: np.ndarray) -> Trajectory:
    return Trajectory(
        actions=np.concatenate([p.actions for p in parts]),
        losses=np.concatenate([p.losses for p in parts]),
        delays=delays,
        n_feedback_used=np.concatenate([p.n_feedback_used for p in parts]),
        etas=np.concatenate([p.etas for p in parts]),
    )


def run_wrapped_reference(T: int, delays: np.ndarray, shape: RegretShape, param_factory,
                          make_learner: Callable[[Any], Any],
                          play: Callable[[Any, int], tuple[Any, float]]) -> dict[str, Any]:
    """Round-by-round wrapper loop with object-level learners.

    ``play(learner, t)`` makes the learner act at round t and returns the
    action record and its cost. Used to validate the segmented fast path.
    """
    ws = wrapper_new(shape, param_factory)
    ws.learner = make_learner(ws.current_params)
    queue = DeliveryQueue()
    epoch_of: dict[int, int] = {}
    actions, used, cross = [], np.zeros(T, dtype=np.int64), 0
    restarts = np.zeros(T, dtype=bool)
    for t in range(1, T + 1):
        action, cost = play(ws.learner, t)
        actions.append(action)
        epoch_of[t] = ws.nu
        r = t + int(delays[t - 1])
        if r <= T:
            queue.enqueue(FeedbackEvent(t, r, float(cost), action if np.ndim(action) == 0 else None))
        batch = queue.drain(t)
        same = [e for e in batch if epoch_of[e.origin_round] == ws.nu]
        cross += len(batch) - len(same)
        observe_round(ws, t, len(same))
        # learners count rounds from the start of their own super-epoch
        shift = ws.super_epoch_start_round - 1
        local = [FeedbackEvent(e.origin_round - shift, e.arrival_round - shift, e.cost_value, e.action_taken)
                 for e in same]
        current = ws.learner
        ws, restarts[t - 1] = maybe_restart(ws, make_learner)
        used[t - 1] = current.receive(local)
    return {"actions": actions, "n_feedback_used": used, "cross_discarded": cross,
            "restarted": restarts, "segments": ws.finish()}


def exp3_reference_learner(K: int, gamma_mode=GammaMode.ZERO):
    """Factory mapping wrapper parameters to a fresh object-level EXP3 learner."""
    def make(params):
        return Exp3Learner(K, StepSizeSchedule.fixed(params.eta), gamma_mode)
    return make


def fkm_reference_learner(body: ConvexBody):
    def make(params):
        return FkmLearner(body, params.delta, StepSizeSchedule.fixed(params.eta))
    return make
