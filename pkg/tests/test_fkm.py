"""Bandit gradient descent with delayed feedback."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delaybandits import (ConfigurationError, ContractViolation, ConvexBody, FeedbackEvent, FkmLearner,
                          StepSizeSchedule, fkm_act, fkm_fixed_params, fkm_new, fkm_update, gradient_estimate,
                          project_shrunk, sample_unit_sphere, anytime_fkm_schedule)
from delaybandits.adversary import QuadraticLosses
from delaybandits.config import RunConfig
from delaybandits.fkm import check_schedule_conditions, unit_rows
from delaybandits.runner import resolve, run_seeds, summarize
from delaybandits.simulate import run_fkm
from delaybandits.stepsize import iterated_log


def test_sphere_one_dimensional(rng):
    draws = np.array([sample_unit_sphere(1, rng)[0] for _ in range(100_000)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    assert 0.49 <= (draws > 0).mean() <= 0.51


def test_sphere_three_dimensional_centered(rng):
    U = np.array([sample_unit_sphere(3, rng) for _ in range(100_000)])
    # each coordinate has variance 1/3 on the 2-sphere
    se = math.sqrt(1 / 3 / len(U))
    assert np.all(np.abs(U.mean(0)) <= 4 * se)
    assert np.allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_sphere_unit_norm(n, seed):
    u = sample_unit_sphere(n, np.random.default_rng(seed))
    assert abs(np.linalg.norm(u) - 1) < 1e-12


def test_gradient_estimate_examples():
    assert np.array_equal(gradient_estimate(0.0, np.array([0.6, 0.8]), 2, 0.5), np.zeros(2))
    assert np.allclose(gradient_estimate(1.0, np.array([1.0, 0.0]), 2, 0.5), [4.0, 0.0], atol=0)


@given(st.floats(0, 1), st.integers(1, 6), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_gradient_norm_identity(loss, n, delta, seed):
    u = sample_unit_sphere(n, np.random.default_rng(seed))
    g = gradient_estimate(loss, u, n, delta)
    assert np.linalg.norm(g) == pytest.approx(n / delta * loss, rel=1e-12, abs=1e-15)


def test_gradient_estimate_contract():
    with pytest.raises(ContractViolation):
        gradient_estimate(1.2, np.array([1.0]), 1, 0.5)
    with pytest.raises(ContractViolation):
        gradient_estimate(0.5, np.array([1.0]), 1, 1.0)


def test_project_shrunk_examples():
    assert np.allclose(project_shrunk(ConvexBody.ball(2), [2.0, 0.0], 0.2), [0.8, 0.0], atol=1e-15)
    assert np.array_equal(project_shrunk(ConvexBody.box(2), [0.7, -3.0], 0.5), [0.5, -0.5])
    x = np.array([0.1, -0.3])
    assert np.array_equal(project_shrunk(ConvexBody.ball(2), x, 0.2), x)


_vec = arrays(np.float64, 3, elements=st.floats(-5, 5))


@given(_vec, _vec, st.sampled_from(["ball", "box"]), st.floats(1.0, 3.0), st.floats(0.01, 0.99))
def test_projection_idempotent_and_nonexpansive(y, z, kind, size, delta):
    body = ConvexBody.ball(3, size) if kind == "ball" else ConvexBody.box(3, size)
    py, pz = project_shrunk(body, y, delta), project_shrunk(body, z, delta)
    assert np.allclose(project_shrunk(body, py, delta), py, atol=1e-12)
    assert np.linalg.norm(py - pz) <= np.linalg.norm(y - z) + 1e-12
    assert body.contains(py, 1 - delta)


def test_body_geometry():
    assert ConvexBody.ball(3, 2.0).diameter == 4.0
    assert ConvexBody.box(4, 1.0).diameter == pytest.approx(4.0)
    with pytest.raises(ConfigurationError):
        ConvexBody.ball(2, 0.5)


def test_act_affine_form():
    s = fkm_new(ConvexBody.ball(2), 0.3, StepSizeSchedule.fixed(0.1))
    a, u = fkm_act(s, u=np.array([0.0, 1.0]))
    assert np.allclose(a, [0.0, 0.3]) and s.x.tolist() == [0.0, 0.0]
    assert np.linalg.norm(a - s.x) == pytest.approx(0.3)


def test_update_empty_batch():
    s = fkm_new(ConvexBody.ball(2), 0.3, StepSizeSchedule.fixed(0.1))
    fkm_update(s, [])
    assert s.x.tolist() == [0.0, 0.0]


def test_update_hand_example():
    s = fkm_new(ConvexBody.ball(1), 0.5, StepSizeSchedule.fixed(0.1))
    fkm_act(s, u=np.array([1.0]))
    fkm_update(s, [FeedbackEvent(1, 2, 0.5)])
    assert s.x[0] == pytest.approx(-0.1, abs=1e-15)


def test_update_order_matters_when_projection_binds():
    def run(order):
        s = fkm_new(ConvexBody.ball(1), 0.5, StepSizeSchedule.fixed(0.1), eta_table=np.array([0.1, 0.3]))
        fkm_act(s, u=np.array([1.0]))
        fkm_act(s, u=np.array([-1.0]))
        evs = {1: FeedbackEvent(1, 3, 0.5), 2: FeedbackEvent(2, 3, 1.0)}
        fkm_update(s, [evs[i] for i in order])
        return s.x[0]

    # in order: -0.1, then +0.6 clipped to 0.5; reversed: 0.6 clipped to 0.5, then -0.1
    assert run([1, 2]) == pytest.approx(0.5, abs=1e-15)
    assert run([2, 1]) == pytest.approx(0.4, abs=1e-15)


def test_update_without_record_fails():
    s = fkm_new(ConvexBody.ball(1), 0.5, StepSizeSchedule.fixed(0.1))
    with pytest.raises(ContractViolation):
        fkm_update(s, [FeedbackEvent(1, 2, 0.5)])


def test_retention_drops_old_records():
    s = fkm_new(ConvexBody.ball(2), 0.2, StepSizeSchedule.fixed(0.1), retention=3)
    for _ in range(10):
        fkm_act(s, np.random.default_rng(0))
    assert sorted(s.perturbation_log) == [8, 9, 10]


def _random_family(rng, T, n, size):
    # every point of Ball(size) or Box(size) lies within size * (sqrt(n) + 1) of the centers
    reach = size * (math.sqrt(n) + 1)
    slope = rng.normal(size=(T, n))
    slope *= 0.1 / (reach * np.linalg.norm(slope, axis=1))[:, None]
    return QuadraticLosses(rng.random(T) * 0.5 / reach**2, rng.uniform(-size, size, (T, n)) / math.sqrt(n),
                           slope, np.full(T, 0.3), 1.0)


@pytest.mark.parametrize("n", [1, 2, 5])
@pytest.mark.parametrize("body", [ConvexBody.ball(1), ConvexBody.ball(1, 3.0), ConvexBody.box(1)],
                         ids=["ball1", "ball3", "box1"])
def test_feasibility_long_run(n, body):
    rng = np.random.default_rng(n)
    body = ConvexBody(body.kind, body.size, n)
    T = 100_000
    fam = _random_family(rng, T, n, body.size)
    delta = 0.15
    tr = run_fkm(fam, body, delta, np.full(T, 0.05), rng.integers(1, 40, T), rng)
    assert body.contains_rows(tr.points, 1 - delta).all()
    assert body.contains_rows(tr.actions).all()
    assert np.allclose(np.linalg.norm(tr.actions - tr.points, axis=1), delta)


@given(st.integers(1, 4), st.sampled_from(["ball", "box"]), st.integers(0, 2**32 - 1))
def test_feasibility_object_level(n, kind, seed):
    rng = np.random.default_rng(seed)
    body = ConvexBody.ball(n, 1.5) if kind == "ball" else ConvexBody.box(n)
    delta = float(rng.uniform(0.01, 0.9))
    s = fkm_new(body, delta, StepSizeSchedule.fixed(float(rng.uniform(0.01, 2.0))))
    for t in range(1, 60):
        a, _ = fkm_act(s, rng)
        assert body.contains(a) and body.contains(s.x, 1 - delta)
        fkm_update(s, [FeedbackEvent(t, t + 1, float(rng.random()))])
        assert body.contains(s.x, 1 - delta)


def test_estimator_unbiased_against_smoothed_gradient():
    rng = np.random.default_rng(77)
    n, delta, N, h = 2, 0.1, 1_000_000, 1e-3
    x = np.array([0.2, -0.1])

    def loss(P):
        return 0.25 * (P * P).sum(1) + 0.25

    U = unit_rows(rng.standard_normal((N, n)))
    G = gradient_estimate(loss(x + delta * U), U, n, delta)
    g_mean = G.mean(0)
    g_se = G.std(0, ddof=1) / math.sqrt(N)
    V = unit_rows(rng.standard_normal((N, n)))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        diffs = (loss(x + e + delta * V) - loss(x - e + delta * V)) / (2 * h)
        fd, fd_se = diffs.mean(), diffs.std(ddof=1) / math.sqrt(N)
        assert abs(g_mean[i] - fd) <= 4 * math.hypot(g_se[i], fd_se)
    assert np.allclose(g_mean, x / 2, atol=4 * g_se.max())


def test_fixed_params_delay_free_branch():
    eta, delta = fkm_fixed_params(3, 4096, 0.0, 2.0)
    assert eta == pytest.approx(2.0 / (3 * 4096**0.75), rel=1e-14)
    assert delta == pytest.approx(4096**-0.25, rel=1e-14)


def test_fixed_params_numeric_example():
    # branch values: 0.5e-3 vs (1/sqrt 2) 1e-3; both radius branches equal 0.1
    eta, delta = fkm_fixed_params(2, 10_000, 1e5, 2.0)
    assert eta == pytest.approx(1.0e-3, rel=1e-12)
    assert delta == pytest.approx(0.1, rel=1e-12)
    eta2, _ = fkm_fixed_params(2, 10_000, 1e6, 2.0)
    assert eta2 == pytest.approx(2 / math.sqrt(2) * 10_000 ** (-1 / 3) * 1e6 ** (-1 / 3), rel=1e-12)


def test_fixed_params_horizon_one_clamped():
    _, delta = fkm_fixed_params(2, 1, 0.0, 2.0)
    assert delta == 1 - 1e-6


def test_anytime_schedules():
    sched, delta = anytime_fkm_schedule("t^1/4", 10**6)
    assert (sched.form, sched.p) == ("power_log", 5 / 8)
    assert delta == pytest.approx(1e6 ** (-3 / 16), rel=1e-14)
    sched, delta = anytime_fkm_schedule("t*log t", 10**6)
    assert sched.form == "loglog"
    # the triple log of 10^6 is clamped up to 1, so the radius hits its upper clamp
    assert iterated_log(10**6, 3) == 1.0
    assert delta == 1 - 1e-6
    _, delta = anytime_fkm_schedule("t*log t", 1e300)
    assert delta == pytest.approx(math.log(math.log(math.log(1e300))) ** (-1 / 3), rel=1e-14)
    _, delta = anytime_fkm_schedule("t", 10**6)
    assert delta == pytest.approx(0.7249, abs=1e-4)


def test_schedule_condition_warnings():
    T = 4096
    lin = np.arange(1, T + 1)
    assert len(check_schedule_conditions(np.full(T, 0.05), lin)) == 2
    ones = np.ones(T, dtype=int)
    assert check_schedule_conditions(1 / np.sqrt(lin), ones) == ["sum eta_t^2 d_t does not appear to converge"]
    assert check_schedule_conditions(1 / lin, ones) == []
    assert check_schedule_conditions(anytime_fkm_schedule("t", T)[0].values(T), lin) == []


def test_learner_adapter_counts_applied():
    learner = FkmLearner(ConvexBody.ball(2), 0.2, StepSizeSchedule.fixed(0.05))
    learner.act(np.random.default_rng(0))
    assert learner.receive([FeedbackEvent(1, 2, 0.4)]) == 1
    assert learner.state.applied == 1


def test_delayed_regret_lower_bound_with_vanishing_discounted_ratio():
    """Linear delays with the anytime schedule: regret stays linear while the
    step-weighted ratio shrinks."""
    floor = 1 / (4 * (2 + 1) ** 2)  # unit ball has diameter 2
    ratios = []
    for k in (12, 14, 16):
        plan = resolve(RunConfig(kind="proposition1", horizon=2**k, seeds=5))
        s = summarize(plan, run_seeds(plan, 1))
        ratios.append(s.drr[-1])
        if k == 16:
            assert s.mean_regret[-1] / 2**k >= floor
    assert max(ratios) < 0.2
    assert ratios[0] > ratios[1] > ratios[2]
