"""Seeded batch runs: resolve a config, run every seed, write CSV artifacts.

Random streams come from ``SeedSequence(root_seed, spawn_key=...)``:
``(0,)`` builds the adversary, ``(1, player)`` seeds random delay schedules
without an explicit seed, ``(2, r)`` drives the learner(s) of replicate r.
The adversary is therefore shared by all replicates.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import _backend
from .adversary import (QuadraticLosses, bernoulli_losses, gap_losses, linear_losses, minimax_gap,
                        quadratic_tracking_losses, switching_losses, switching_quadratic_losses)
from .bodies import ConvexBody
from .config import ExperimentKind as EK
from .config import RunConfig
from .delays import missing_mask
from .doubling import WrapperSchedule, preset_shape, wrapper_schedule
from .errors import ConfigurationError
from .exp3 import discard_mask, exp3_fixed_eta, exp3_regret_bound
from .fkm import (FkmLearner, fkm_fixed_params, fkm_regret_bound, parse_delay_class,
                  anytime_fkm_schedule)
from .games import (FINITE_GAMES, FiniteGame, ZeroSumGame, ZeroSumKind, game_value_bilinear, ne_gap_zero_sum,
                    play_multiagent, prefix_ergodic_averages, quadratic_saddle, cce_gap)
from .regret import discounted_regret_ratio_prefix
from .simulate import run_exp3, run_exp3_game, run_fkm, run_wrapped_exp3, run_wrapped_fkm
from .stats import SummaryStats, mean_and_se
from .stepsize import EXP3_ETA_CAP, EXP3_ETA_LIMIT, StepSizeSchedule, iterated_log

SCHEMA_VERSION = 1
WORKERS_ENV = "DELAYBANDITS_WORKERS"

EXP3_KINDS = (EK.SINGLE_AGENT_EXP3, EK.WRAPPED_EXP3, EK.PROPOSITION2)
FKM_KINDS = (EK.SINGLE_AGENT_FKM, EK.WRAPPED_FKM, EK.PROPOSITION1)
GAME_KINDS = (EK.ZERO_SUM_GAME, EK.FINITE_GAME_CCE)
CONVEX_GAMES = {"quadratic_saddle": quadratic_saddle}


def stream(root_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=key))


# ---------------------------------------------------------------- resolution


@dataclass
class Plan:
    """A fully resolved experiment: explicit config plus shared inputs."""

    config: RunConfig
    delays: np.ndarray                    # (N, T); N = 1 for single-agent kinds
    etas: np.ndarray | None = None        # shared step sizes (None for wrapped kinds)
    losses: np.ndarray | None = None      # (T, K) for EXP3 kinds
    family: QuadraticLosses | None = None
    body: ConvexBody | None = None
    delta: float | None = None
    game: FiniteGame | None = None        # tensor form used by the kernels
    zero_sum: ZeroSumGame | None = None   # matrix zero-sum game (picklable)
    schedule: WrapperSchedule | None = None
    bounds: np.ndarray | None = None      # per checkpoint
    notes: dict[str, Any] = field(default_factory=dict)
    update_scale: float = 1.0             # harness-only EXP3 sabotage knob; never read from configs

    @property
    def T(self) -> int:
        return self.config.horizon


def _delay_class_of(cfg: RunConfig, player: int = 1) -> str:
    spec = cfg.delay_for(player)
    if spec.kind == "linear":
        return "t"
    if spec.kind == "linear_log":
        return "t*log t"
    if spec.kind == "power_law":
        if spec.alpha <= 0.25:
            return "t^1/4"
        if spec.alpha <= 0.75:
            return "t^3/4"
        return "t"
    if spec.kind == "explicit":
        # growth class of an explicit list: compare its tail to t
        v = np.asarray(spec.values, dtype=float)
        t = np.arange(1, v.size + 1)
        alpha = float(np.max(np.log(np.maximum(v, 1)) / np.log(t + 1))) if v.size else 0.0
        return "t^1/4" if alpha <= 0.25 else "t^3/4" if alpha <= 0.75 else "t"
    return "t^1/4"  # bounded delays


def _delays(cfg: RunConfig, n_players: int) -> tuple[RunConfig, np.ndarray]:
    rows = []
    players = {}
    for p in range(1, n_players + 1):
        spec = cfg.delay_for(p)
        if spec.kind == "random_bounded" and spec.seed is None:
            seed = int(np.random.SeedSequence(cfg.root_seed, spawn_key=(1, p)).generate_state(1)[0])
            spec = type(spec)(**{**spec.__dict__, "seed": seed})
            players[p] = spec
        rows.append(spec.build().sequence(cfg.horizon))
    if players:
        if n_players == 1:
            cfg = cfg.replace(delay=players[1])
        else:
            merged = dict(cfg.player_delays)
            merged.update(players)
            cfg = cfg.replace(player_delays=merged)
    return cfg, np.stack(rows)


def _exp3_schedule(cfg: RunConfig, default: StepSizeSchedule | float) -> tuple[RunConfig, StepSizeSchedule]:
    """Explicit or default EXP3 step sizes, checked against the stability limit."""
    if cfg.eta == "auto":
        if isinstance(default, StepSizeSchedule):
            sched = default
        else:
            sched = StepSizeSchedule.fixed(default)
    elif cfg.eta_form == "fixed" and cfg.eta == "schedule":
        raise ConfigurationError("eta = schedule needs a time-varying eta_form")
    elif cfg.eta_form == "fixed":
        sched = StepSizeSchedule.fixed(float(cfg.eta))
    elif cfg.eta_form == "power_log":
        sched = StepSizeSchedule.power_log(cfg.eta_power, cfg.eta_c)
    else:
        sched = StepSizeSchedule.loglog(cfg.eta_c)
    if sched.cap is None and sched.first() >= EXP3_ETA_LIMIT:
        if not cfg.clamp_eta:
            raise ConfigurationError(
                f"EXP3 step size {sched.first():.6g} at t=1 is not below e^-2/2 = {EXP3_ETA_LIMIT:.6g}; "
                "lower it or set clamp_eta = true"
            )
        sched = StepSizeSchedule.fixed(EXP3_ETA_CAP) if sched.form == "fixed" else sched.capped()
    if sched.form == "fixed":
        cfg = cfg.replace(eta=sched.eta, eta_form="fixed")
    else:
        cfg = cfg.replace(eta="schedule", eta_form=sched.form, eta_c=sched.c, eta_power=sched.p,
                          clamp_eta=sched.cap is not None)
    return cfg, sched


def _fkm_schedule(cfg: RunConfig, default: StepSizeSchedule) -> tuple[RunConfig, StepSizeSchedule]:
    if cfg.eta == "auto":
        sched = default
    elif cfg.eta_form == "fixed":
        sched = StepSizeSchedule.fixed(float(cfg.eta))
    elif cfg.eta_form == "power_log":
        sched = StepSizeSchedule.power_log(cfg.eta_power, cfg.eta_c)
    else:
        sched = StepSizeSchedule.loglog(cfg.eta_c)
    if sched.form == "fixed":
        cfg = cfg.replace(eta=sched.eta, eta_form="fixed")
    else:
        cfg = cfg.replace(eta="schedule", eta_form=sched.form, eta_c=sched.c, eta_power=sched.p)
    return cfg, sched


def _exp3_losses(cfg: RunConfig, K: int) -> tuple[RunConfig, np.ndarray]:
    T = cfg.horizon
    rng = stream(cfg.root_seed, 0)
    kind = cfg.adversary
    if kind == "auto":
        kind = "switching" if cfg.kind is EK.PROPOSITION2 else "bernoulli"
    if kind == "bernoulli":
        if cfg.means in ("auto", "n/a"):
            means = tuple(float(m) for m in rng.permutation(np.linspace(0.25, 0.75, K)))
        else:
            means = tuple(cfg.means)
            if len(means) != K:
                raise ConfigurationError(f"{len(means)} means for {K} arms")
        return cfg.replace(adversary=kind, means=means), bernoulli_losses(T, means, rng)
    if kind == "gap":
        return cfg.replace(adversary=kind), gap_losses(T, K, cfg.gap)
    if kind == "minimax_gap":
        g = minimax_gap(K, T)
        return cfg.replace(adversary="gap", gap=g), gap_losses(T, K, g)
    if kind == "switching":
        return cfg.replace(adversary=kind), switching_losses(T, K)
    raise ConfigurationError(f"adversary {kind!r} does not produce arm losses")


def _fkm_family(cfg: RunConfig, body: ConvexBody) -> tuple[RunConfig, QuadraticLosses]:
    T, n = cfg.horizon, cfg.dim
    rng = stream(cfg.root_seed, 0)
    kind = cfg.adversary
    if kind == "auto":
        kind = "switching_quadratic" if cfg.kind is EK.PROPOSITION1 else "quadratic"
    if body.kind.value != "ball" and kind != "switching_quadratic":
        raise ConfigurationError("random quadratic and linear losses are defined on a ball")
    if kind == "quadratic":
        fam = quadratic_tracking_losses(T, n, rng, body.size)
    elif kind == "linear":
        fam = linear_losses(T, n, rng, body.size)
    elif kind == "switching_quadratic":
        if body.kind.value != "ball" or body.size != 1.0:
            raise ConfigurationError("switching quadratic losses need the unit ball")
        fam = switching_quadratic_losses(T, n, body.diameter)
    else:
        raise ConfigurationError(f"adversary {kind!r} does not produce convex losses")
    return cfg.replace(adversary=kind), fam


def _kept_delay_sum(d: np.ndarray, T: int) -> float:
    return float(d[:T][~missing_mask(d[:T], T)].sum())


def resolve(cfg: RunConfig) -> Plan:
    """Turn every ``auto`` into a concrete value and build shared inputs."""
    cfg = cfg.replace(checkpoints=tuple(cfg.checkpoint_list()))
    if cfg.means == "auto":
        # only the bernoulli adversary reads arm means; it overwrites this below
        cfg = cfg.replace(means="n/a")
    T = cfg.horizon
    cps = list(cfg.checkpoints)
    kind = cfg.kind

    if kind in EXP3_KINDS:
        K = cfg.arms
        if K < 2:
            raise ConfigurationError("EXP3 needs at least 2 arms")
        cfg, D = _delays(cfg, 1)
        d = D[0]
        cfg, losses = _exp3_losses(cfg, K)
        cfg = cfg.replace(delta="n/a")
        if kind is EK.WRAPPED_EXP3:
            shape, factory = preset_shape("exp3", K=K)
            sched = wrapper_schedule(d, T, shape, factory)
            cfg = cfg.replace(eta="doubling", eta_form="fixed")
            bounds = np.array([exp3_regret_bound(K, c, exp3_fixed_eta(K, c, _kept_delay_sum(d, c)), d)["bound"]
                               for c in cps])
            return Plan(cfg, D, losses=losses, schedule=sched, bounds=bounds,
                        notes={"shape": shape, "bound_kind": "known-horizon EXP3 ceiling"})
        if kind is EK.PROPOSITION2:
            default: Any = StepSizeSchedule.power_log(1.0).capped()
        else:
            default = exp3_fixed_eta(K, T, _kept_delay_sum(d, T))
        cfg, es = _exp3_schedule(cfg, default)
        etas = es.values(T)
        if es.form == "fixed":
            bounds = np.array([exp3_regret_bound(K, c, es.eta, d)["bound"] for c in cps])
        else:
            bounds = np.full(len(cps), np.nan)
        return Plan(cfg, D, etas=etas, losses=losses, bounds=bounds, notes={"schedule": es.describe()})

    if kind in FKM_KINDS:
        body = ConvexBody.ball(cfg.dim, cfg.body_size) if cfg.body == "ball" else ConvexBody.box(cfg.dim, cfg.body_size)
        cfg, D = _delays(cfg, 1)
        d = D[0]
        cfg, fam = _fkm_family(cfg, body)
        n, diam, L = cfg.dim, body.diameter, fam.lipschitz
        if kind is EK.WRAPPED_FKM:
            shape, factory = preset_shape("fkm", n=n, diameter=diam, delta0=cfg.delta0, lipschitz=L)
            sched = wrapper_schedule(d, T, shape, factory)
            cfg = cfg.replace(eta="doubling", eta_form="fixed", delta="doubling")
            bounds = []
            for c in cps:
                e, dl = fkm_fixed_params(n, c, _kept_delay_sum(d, c), diam)
                bounds.append(fkm_regret_bound(n, c, e, dl, diam, L, d)["bound"])
            return Plan(cfg, D, family=fam, body=body, schedule=sched, bounds=np.array(bounds),
                        notes={"shape": shape, "bound_kind": "known-horizon FKM ceiling"})
        if kind is EK.PROPOSITION1:
            default = StepSizeSchedule.power_log(1.0)
            auto_delta = min(1.0 - 1e-6, float(iterated_log(T, 2)) ** (-1.0 / 3.0) / L)
        else:
            eta0, auto_delta = fkm_fixed_params(n, T, _kept_delay_sum(d, T), diam)
            default = StepSizeSchedule.fixed(eta0)
        cfg, es = _fkm_schedule(cfg, default)
        delta = auto_delta if cfg.delta == "auto" else float(cfg.delta)
        if not 0 < delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        cfg = cfg.replace(delta=delta)
        if es.form == "fixed":
            bounds = np.array([fkm_regret_bound(n, c, es.eta, delta, diam, L, d)["bound"] for c in cps])
        else:
            bounds = np.full(len(cps), np.nan)
        return Plan(cfg, D, etas=es.values(T), family=fam, body=body, delta=delta, bounds=bounds,
                    notes={"schedule": es.describe()})

    # games
    name = cfg.game
    if name in CONVEX_GAMES:
        if kind is not EK.ZERO_SUM_GAME:
            raise ConfigurationError(f"{name} is a zero-sum game")
        cfg, D = _delays(cfg, 2)
        es_default, dl = anytime_fkm_schedule(parse_delay_class(_delay_class_of(cfg)), T)
        cfg, es = _fkm_schedule(cfg, es_default)
        delta = dl if cfg.delta == "auto" else float(cfg.delta)
        cfg = cfg.replace(delta=delta, adversary="n/a")
        return Plan(cfg, D, etas=es.values(T), delta=delta, bounds=np.full(len(cps), np.nan),
                    notes={"schedule": es.describe()})
    if name not in FINITE_GAMES:
        raise ConfigurationError(f"unknown game {name!r}")
    g = FINITE_GAMES[name]()
    zs = None
    if isinstance(g, ZeroSumGame):
        zs, g = g, g.to_finite()
    if kind is EK.ZERO_SUM_GAME and zs is None:
        raise ConfigurationError(f"{name} is not a zero-sum game")
    cfg, D = _delays(cfg, g.n_players)
    es_default = anytime_fkm_schedule(parse_delay_class(_delay_class_of(cfg)), 2)[0].capped()
    cfg, es = _exp3_schedule(cfg, es_default)
    cfg = cfg.replace(delta="n/a", adversary="n/a")
    return Plan(cfg, D, etas=es.values(T), game=g, zero_sum=zs, bounds=np.full(len(cps), np.nan),
                notes={"schedule": es.describe()})


# ---------------------------------------------------------------- per-seed work


@dataclass
class SeedResult:
    index: int
    columns: dict[str, np.ndarray]
    metrics: dict[str, np.ndarray]
    stats: dict[str, Any] = field(default_factory=dict)


def _prefix_regret(played: np.ndarray, counterfactual: np.ndarray, cps: list[int]) -> np.ndarray:
    cp = np.cumsum(played)
    cc = np.cumsum(counterfactual, axis=0).min(axis=1)
    return np.array([cp[c - 1] - cc[c - 1] for c in cps])


def _running_regret(played: np.ndarray, counterfactual: np.ndarray) -> np.ndarray:
    return np.cumsum(played) - np.cumsum(counterfactual, axis=0).min(axis=1)


def _exp3_seed(plan: Plan, r: int) -> SeedResult:
    cfg, T = plan.config, plan.T
    cps = list(cfg.checkpoints)
    rng = stream(cfg.root_seed, 2, r)
    d = plan.delays[0]
    L = plan.losses
    if plan.schedule is not None:
        tr = run_wrapped_exp3(L, d, rng, plan.notes["shape"], None, cfg.gamma_mode, schedule=plan.schedule)
    else:
        tr = run_exp3(L, d, plan.etas, rng, cfg.gamma_mode, cfg.filter, plan.update_scale)
    expected = tr.expected_losses(L)
    cum = _running_regret(expected, L)
    etas = tr.etas
    cols = {
        "action": tr.actions, "loss": tr.losses, "expected_loss": expected,
        "p_action": tr.probabilities[np.arange(T), tr.actions], "eta": etas,
        "discarded": tr.discarded.astype(np.int64), "n_feedback_used": tr.n_feedback_used, "cum_regret": cum,
    }
    cols.update(tr.telemetry)
    metrics = {
        "regret": cum[np.asarray(cps) - 1],
        "drr": discounted_regret_ratio_prefix(expected, L, etas, cps),
    }
    return SeedResult(r, cols, metrics, dict(tr.stats))


def _fkm_seed(plan: Plan, r: int) -> SeedResult:
    cfg, T = plan.config, plan.T
    cps = list(cfg.checkpoints)
    rng = stream(cfg.root_seed, 2, r)
    d = plan.delays[0]
    fam, body = plan.family, plan.body
    if plan.schedule is not None:
        tr = run_wrapped_fkm(fam, body, d, rng, plan.notes["shape"], None, schedule=plan.schedule)
    else:
        tr = run_fkm(fam, body, plan.delta, plan.etas, d, rng)
    cum = np.cumsum(tr.losses) - fam.running_best_values(body)
    drr = []
    for c in cps:
        w = tr.etas[:c]
        best = fam.head(c).best_fixed(body, weights=w)[1]
        drr.append((float(w @ tr.losses[:c]) - best) / float(w.sum()))
    cols: dict[str, np.ndarray] = {}
    for j in range(fam.dim):
        cols[f"a{j + 1}"] = tr.actions[:, j]
    for j in range(fam.dim):
        cols[f"x{j + 1}"] = tr.points[:, j]
    cols["loss"] = tr.losses
    cols["n_feedback_used"] = tr.n_feedback_used
    cols["eta"] = tr.etas
    cols["cum_regret"] = cum
    cols.update(tr.telemetry)
    return SeedResult(r, cols, {"regret": cum[np.asarray(cps) - 1], "drr": np.array(drr)}, dict(tr.stats))


def _counterfactual(game: FiniteGame, A: np.ndarray, n: int) -> np.ndarray:
    """Cost player n would have paid for each own action, others fixed; (T, K_n)."""
    u = np.moveaxis(game.utilities[n], n, -1)
    idx = tuple(A[:, m] for m in range(A.shape[1]) if m != n)
    return 1.0 - u[idx]


def _finite_game_seed(plan: Plan, r: int) -> SeedResult:
    cfg, T, g = plan.config, plan.T, plan.game
    cps = list(cfg.checkpoints)
    rng = stream(cfg.root_seed, 2, r)
    jt = run_exp3_game(g, plan.delays, plan.etas, rng, cfg.gamma_mode, cfg.filter, plan.update_scale)
    A, etas = jt.actions, plan.etas
    N = g.n_players
    cols: dict[str, np.ndarray] = {}
    regrets, drrs = [], []
    for n in range(N):
        cf = _counterfactual(g, A, n)
        cols[f"action_p{n + 1}"] = A[:, n]
        cols[f"loss_p{n + 1}"] = jt.losses[:, n]
        cols[f"n_feedback_used_p{n + 1}"] = jt.n_feedback_used[:, n]
        cols[f"cum_regret_p{n + 1}"] = _running_regret(jt.losses[:, n], cf)
        regrets.append(_prefix_regret(jt.losses[:, n], cf, cps))
        drrs.append(discounted_regret_ratio_prefix(jt.losses[:, n], cf, etas, cps))
    cols["eta"] = etas
    metrics = {"regret": np.max(regrets, axis=0), "drr_players": np.array(drrs)}
    prob = cfg.weights == "probability"
    if plan.zero_sum is not None:
        K0, K1 = g.action_counts
        Y = jt.probabilities[0] if prob else np.eye(K0)[A[:, 0]]
        Z = jt.probabilities[1] if prob else np.eye(K1)[A[:, 1]]
        ys = prefix_ergodic_averages(Y, etas, cps)
        zs = prefix_ergodic_averages(Z, etas, cps)
        metrics["ne_gap"] = np.array([ne_gap_zero_sum(plan.zero_sum, y, z) for y, z in zip(ys, zs)])
        metrics["value"] = np.array([game_value_bilinear(plan.zero_sum.U, y, z) for y, z in zip(ys, zs)])
        metrics["y_bar"] = ys
        metrics["z_bar"] = zs
    # prefix joint distributions for the CCE gap
    counts = g.action_counts
    if prob:
        P = jt.probabilities
        joint = P[0]
        for p in P[1:]:
            joint = (joint[:, :, None] * p[:, None, :]).reshape(T, -1)
    else:
        flat = np.ravel_multi_index(tuple(A.T), counts)
        joint = np.zeros((T, int(np.prod(counts))))
        joint[np.arange(T), flat] = 1.0
    metrics["rho"] = prefix_ergodic_averages(joint, etas, cps).reshape((len(cps),) + tuple(counts))
    return SeedResult(r, cols, metrics, dict(jt.stats))


def _convex_game_seed(plan: Plan, r: int) -> SeedResult:
    cfg, T = plan.config, plan.T
    cps = list(cfg.checkpoints)
    rng = stream(cfg.root_seed, 2, r)
    game = CONVEX_GAMES[cfg.game]()
    es = StepSizeSchedule.fixed(float(cfg.eta)) if cfg.eta_form == "fixed" else (
        StepSizeSchedule.power_log(cfg.eta_power, cfg.eta_c) if cfg.eta_form == "power_log"
        else StepSizeSchedule.loglog(cfg.eta_c))
    learners = [FkmLearner(game.body_y, plan.delta, es), FkmLearner(game.body_z, plan.delta, es)]
    schedules = [cfg.delay_for(1).build(), cfg.delay_for(2).build()]

    def utility(acts):
        v = game.u(acts[0], acts[1])
        return (1.0 - v, v)

    jt = play_multiagent(None, learners, schedules, es, T, rng, utility=utility)
    Y = np.array([np.asarray(a[0], dtype=float) for a in jt.actions])
    Z = np.array([np.asarray(a[1], dtype=float) for a in jt.actions])
    etas = jt.etas
    ys = prefix_ergodic_averages(Y, etas, cps)
    zs = prefix_ergodic_averages(Z, etas, cps)
    # deviation costs on a grid of the 1-D action interval
    grid = np.linspace(-game.body_y.size, game.body_y.size, 201)
    cf_y = np.array([[game.u(np.array([g]), z) for g in grid] for z in Z])
    cf_z = np.array([[1.0 - game.u(y, np.array([g])) for g in grid] for y in Y])
    regrets = [_prefix_regret(jt.losses[:, 0], cf_y, cps), _prefix_regret(jt.losses[:, 1], cf_z, cps)]
    drrs = [discounted_regret_ratio_prefix(jt.losses[:, 0], cf_y, etas, cps),
            discounted_regret_ratio_prefix(jt.losses[:, 1], cf_z, etas, cps)]
    cols = {"y": Y[:, 0], "z": Z[:, 0], "loss_p1": jt.losses[:, 0], "loss_p2": jt.losses[:, 1],
            "n_feedback_used_p1": jt.n_feedback_used[:, 0], "n_feedback_used_p2": jt.n_feedback_used[:, 1],
            "eta": etas}
    metrics = {
        "regret": np.max(regrets, axis=0), "drr_players": np.array(drrs),
        "ne_gap": np.array([ne_gap_zero_sum(game, y, z) for y, z in zip(ys, zs)]),
        "value": np.array([game.u(y, z) for y, z in zip(ys, zs)]),
    }
    return SeedResult(r, cols, metrics)


def run_seed(plan: Plan, r: int) -> SeedResult:
    kind = plan.config.kind
    if kind in EXP3_KINDS:
        return _exp3_seed(plan, r)
    if kind in FKM_KINDS:
        return _fkm_seed(plan, r)
    if plan.game is None:
        return _convex_game_seed(plan, r)
    return _finite_game_seed(plan, r)


def _run_seed_args(args):
    return run_seed(*args)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1")
    return n


def run_seeds(plan: Plan, workers: int | None = None) -> list[SeedResult]:
    n = worker_count() if workers is None else workers
    jobs = [(plan, r) for r in range(plan.config.seeds)]
    if n <= 1 or len(jobs) <= 1:
        return [run_seed(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
        results = list(pool.map(_run_seed_args, jobs))
    return sorted(results, key=lambda s: s.index)


# ---------------------------------------------------------------- aggregation


def summarize(plan: Plan, results: list[SeedResult]) -> SummaryStats:
    cfg = plan.config
    cps = list(cfg.checkpoints)
    reg = np.stack([s.metrics["regret"] for s in results])
    m, se = mean_and_se(reg)
    extra: dict[str, np.ndarray] = {}
    if "drr" in results[0].metrics:
        drr = mean_and_se(np.stack([s.metrics["drr"] for s in results]))[0]
    else:
        per = np.stack([s.metrics["drr_players"] for s in results])  # (S, N, C)
        pm, pse = mean_and_se(per)
        k = np.argmax(pm, axis=0)
        drr = pm[k, np.arange(len(cps))]
        extra["max_drr_se"] = pse[k, np.arange(len(cps))]
    if "ne_gap" in results[0].metrics:
        gm, gse = mean_and_se(np.stack([s.metrics["ne_gap"] for s in results]))
        vals = np.stack([s.metrics["value"] for s in results])
        extra["ne_gap"] = gm
        extra["ne_gap_se"] = gse
        extra["game_value"] = vals.mean(axis=0)
    if "rho" in results[0].metrics:
        rho = np.mean([s.metrics["rho"] for s in results], axis=0)
        extra["cce_gap"] = np.array([cce_gap(rho[i], plan.game) for i in range(len(cps))])
    stats = SummaryStats(cps, m, se, plan.bounds, drr, extra)
    stats.fit()
    return stats


def realized(plan: Plan) -> dict[str, Any]:
    """Delay statistics of the run: per player D, |M| and the EXP3 discard count."""
    T = plan.T
    out: dict[str, Any] = {}
    for p, d in enumerate(plan.delays, start=1):
        mm = missing_mask(d, T)
        tag = "" if plan.delays.shape[0] == 1 else f"_p{p}"
        out[f"delay_sum{tag}"] = int(d[~mm].sum())
        out[f"missing{tag}"] = int(mm.sum())
        if plan.etas is not None and (plan.losses is not None or plan.game is not None):
            out[f"discarded{tag}"] = int(discard_mask(d, plan.etas, T).sum()) if plan.config.filter else 0
    return out


# ---------------------------------------------------------------- writing


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema-version: {SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Inverse of :func:`write_csv` (comment lines skipped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _trajectory_rows(plan: Plan, res: SeedResult) -> tuple[list[str], list[list[Any]]]:
    T = plan.T
    t = np.arange(1, T + 1)
    data: dict[str, np.ndarray] = {"t": t}
    if plan.delays.shape[0] == 1:
        d = plan.delays[0]
        data.update(delay=d, arrival_round=t + d)
        data.update(res.columns)
        header = ["t"] + (["action"] if "action" in data else [])
        header += ["loss", "delay", "arrival_round", "n_feedback_used", "cum_regret"]
    else:
        header = ["t"] + list(res.columns)
        for p, d in enumerate(plan.delays, start=1):
            data[f"delay_p{p}"] = d
            data[f"arrival_round_p{p}"] = t + d
        data.update(res.columns)
    header += [k for k in data if k not in header]
    if plan.config.trajectories == "checkpoints":
        idx = np.asarray(plan.config.checkpoints) - 1
    else:
        idx = np.arange(T)
    arrays = [np.asarray(data[h]) for h in header]
    rows = [[a[i] for a in arrays] for i in idx]
    return header, rows


@dataclass
class RunResult:
    output_dir: Path
    plan: Plan
    summary: SummaryStats
    seeds: list[SeedResult]
    wall_time: float


def manifest_text(plan: Plan, summary: SummaryStats, wall_time: float, results: list[SeedResult]) -> str:
    cp = plan.config.to_parser()
    cp.add_section("resolved")
    cp.set("resolved", "backend", _backend.BACKEND)
    for k, v in plan.notes.items():
        if k == "shape":
            for f in ("k1", "k2", "k3", "a", "b", "c", "d"):
                cp.set("resolved", f"shape_{f}", repr(float(getattr(v, f))))
        else:
            cp.set("resolved", k, str(v))
    cp.add_section("realized")
    for k, v in realized(plan).items():
        cp.set("realized", k, str(v))
    viol = [s.stats.get("violations") for s in results if "violations" in s.stats]
    if viol:
        cp.set("realized", "ratio_violations", str(int(sum(viol))))
        cp.set("realized", "max_ratio", repr(max(float(s.stats["max_ratio"]) for s in results)))
    if plan.schedule is not None:
        cp.set("realized", "cross_discarded", str(plan.schedule.cross_discarded))
        cp.set("realized", "final_w", str(plan.schedule.final_w))
        cp.set("realized", "final_h", str(plan.schedule.final_h))
        cp.add_section("super_epochs")
        for i, rec in enumerate(plan.schedule.segments):
            params = ", ".join(f"{k}={float(v)!r}" for k, v in rec.params.__dict__.items())
            key = ":".join(str(x) for x in rec.key)
            cp.set("super_epochs", f"s{i}", f"rounds {rec.start}-{rec.end}; key {key}; {params}")
    cp.add_section("summary")
    cp.set("summary", "fitted_exponent", "" if summary.exponent is None else repr(summary.exponent))
    cp.set("summary", "wall_time_seconds", f"{wall_time:.3f}")
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_from_manifest(path: str | Path) -> RunConfig:
    """Explicit config stored in a manifest (extra sections ignored)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read(path, encoding="utf-8")
    for sec in ("resolved", "realized", "super_epochs", "summary"):
        cp.remove_section(sec)
    return RunConfig.from_parser(cp)


def run_experiment(cfg: RunConfig, output_dir: str | Path | None = None, workers: int | None = None) -> RunResult:
    """Run all seeds of ``cfg`` and write its artifacts; returns the output directory and summary."""
    start = time.perf_counter()
    out = Path(output_dir or cfg.output_dir)
    plan = resolve(cfg)
    if output_dir is not None:
        plan.config = plan.config.replace(output_dir=str(out))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    results = run_seeds(plan, workers)
    summary = summarize(plan, results)
    header, rows = summary.rows()
    header.append("fitted_exponent")
    rows = [row + [summary.exponent if summary.exponent is not None else float("nan")] for row in rows]
    write_csv(out / "summary.csv", header, rows)
    if cfg.trajectories != "none":
        for res in results:
            h, r = _trajectory_rows(plan, res)
            name = "trajectory" if plan.delays.shape[0] == 1 else "joint_trajectory"
            write_csv(out / f"{name}_seed{res.index:03d}.csv", h, r)
    wall = time.perf_counter() - start
    (out / "manifest.ini").write_text(manifest_text(plan, summary, wall, results), encoding="utf-8")
    return RunResult(out, plan, summary, results, wall)


def sweep(cfg: RunConfig, param: str, values: list[str], output_dir: str | Path | None = None,
          workers: int | None = None) -> tuple[Path, list[RunResult]]:
    """One run per value of ``param``; writes ``sweep.csv`` with the final-checkpoint summary."""
    base = Path(output_dir or cfg.output_dir)
    results = []
    rows = []
    for raw in values:
        sub = cfg.with_param(param, raw)
        res = run_experiment(sub, base / f"{param.replace('.', '_')}={raw.strip()}", workers)
        s = res.summary
        rows.append([raw.strip(), s.checkpoints[-1], s.mean_regret[-1], s.std_error[-1], s.bound[-1], s.drr[-1]])
        results.append(res)
    header = ["value", "T", "mean_regret", "std_error", "bound", "discounted_regret_ratio"]
    base.mkdir(parents=True, exist_ok=True)
    write_csv(base / "sweep.csv", header, rows)
    return base, results
