"""Delay schedules, feedback delivery, step sizes, adversaries and regret."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delaybandits import (AdaptiveAdversary, ConfigurationError, ContractViolation, DelaySchedule,
                          DeliveryQueue, FeedbackEvent, ObliviousAdversary, StepSizeSchedule, Trajectory,
                          discounted_regret_ratio, drain, effective_delay_sum, enqueue, generate_delay,
                          missing_set, regret, step_size)
from delaybandits.adversary import check_costs, grid_best_fixed, quadratic_tracking_losses
from delaybandits.delays import arrival_csr, missing_mask
from delaybandits.fkm import anytime_exp3_schedule
from delaybandits.stepsize import EXP3_ETA_CAP, EXP3_ETA_LIMIT
from delaybandits.bodies import ConvexBody

# ---------------------------------------------------------------- delays


def test_generate_delay_constant():
    assert generate_delay(DelaySchedule.constant(3), 7) == 3


def test_generate_delay_power_law_one():
    assert generate_delay(DelaySchedule.power_law(1.0), 5) == 5


def test_generate_delay_linear_log():
    # 10 ln 10 = 23.03
    assert generate_delay(DelaySchedule.linear_log(), 10) == 24


def test_power_law_exact_powers_do_not_round_up():
    # 16**0.75 is 8.000000000000002 in floating point
    assert generate_delay(DelaySchedule.power_law(0.75), 16) == 8
    assert DelaySchedule.power_law(0.75).sequence(16)[-1] == 8


def test_generate_delay_rejects_round_zero():
    with pytest.raises(ContractViolation):
        generate_delay(DelaySchedule.constant(1), 0)


def test_explicit_list_too_short():
    sched = DelaySchedule.explicit([1, 2, 3])
    with pytest.raises(ContractViolation):
        sched.sequence(4)
    with pytest.raises(ContractViolation):
        generate_delay(sched, 4)


@pytest.mark.parametrize("bad", [
    lambda: DelaySchedule.constant(0),
    lambda: DelaySchedule.explicit([1, 0, 2]),
    lambda: DelaySchedule.random_bounded(0, 1),
    lambda: DelaySchedule.power_law(-0.5),
])
def test_invalid_schedules(bad):
    with pytest.raises(ConfigurationError):
        bad()


def test_random_bounded_replayable_and_prefix_stable():
    a = DelaySchedule.random_bounded(9, seed=4).sequence(10_000)
    b = DelaySchedule.random_bounded(9, seed=4)
    short = b.sequence(100)
    assert np.array_equal(a, DelaySchedule.random_bounded(9, seed=4).sequence(10_000))
    assert np.array_equal(a[:100], short)
    assert a.min() >= 1 and a.max() <= 9
    assert generate_delay(b, 5000) == a[4999]


def _schedules():
    return st.one_of(
        st.integers(1, 20).map(DelaySchedule.constant),
        st.floats(0.0, 1.0).map(DelaySchedule.power_law),
        st.just(DelaySchedule.linear()),
        st.just(DelaySchedule.linear_log()),
        st.tuples(st.integers(1, 15), st.integers(0, 2**31)).map(lambda p: DelaySchedule.random_bounded(*p)),
        st.lists(st.integers(1, 30), min_size=60, max_size=60).map(DelaySchedule.explicit),
    )


@given(_schedules(), st.integers(1, 60))
def test_sequence_matches_pointwise_generation(sched, T):
    seq = sched.sequence(T)
    assert seq.min() >= 1
    assert [generate_delay(sched, t) for t in range(1, T + 1)] == seq.tolist()


@pytest.mark.parametrize("delays,T,expected", [
    ([1] * 5, 5, 5),
    ([1, 2, 3, 4], 4, 6),
    ([10, 10], 2, 3),
])
def test_effective_delay_sum_examples(delays, T, expected):
    assert effective_delay_sum(delays, T) == expected


@pytest.mark.parametrize("delays,T,expected", [
    ([1] * 5, 5, {5}),
    ([1, 2, 3, 4], 4, {3, 4}),
    ([], 0, set()),
])
def test_missing_set_examples(delays, T, expected):
    assert missing_set(delays, T) == expected


@given(st.lists(st.integers(1, 40), min_size=1, max_size=80))
def test_effective_delay_sum_decomposition(delays):
    T = len(delays)
    M = missing_set(delays, T)
    kept = sum(d for t, d in enumerate(delays, 1) if t not in M)
    tails = sum(T - t + 1 for t in M)
    assert kept + tails == effective_delay_sum(delays, T)


# ---------------------------------------------------------------- delivery


def test_feedback_event_contract():
    with pytest.raises(ContractViolation):
        FeedbackEvent(3, 3, 0.5)
    with pytest.raises(ContractViolation):
        FeedbackEvent(1, 2, 1.5)
    assert FeedbackEvent(2, 7, 0.0).delay == 5


def test_single_event_round_trip():
    q = DeliveryQueue()
    enqueue(q, FeedbackEvent(1, 4, 0.3))
    assert [drain(q, t) for t in (1, 2, 3)] == [[], [], []]
    out = drain(q, 4)
    assert [e.origin_round for e in out] == [1]


def test_same_round_arrivals_fifo_by_origin():
    q = DeliveryQueue()
    q.enqueue(FeedbackEvent(5, 6, 0.1))
    q.enqueue(FeedbackEvent(2, 6, 0.2))
    assert [e.origin_round for e in q.drain(6)] == [2, 5]


def test_far_arrival_never_drained():
    q = DeliveryQueue()
    q.enqueue(FeedbackEvent(1, 10**9, 0.5))
    got = [e for t in range(1, 101) for e in q.drain(t)]
    assert got == [] and q.pending_origins() == [1]


def test_drain_empty_queue():
    assert DeliveryQueue().drain(1) == []


def test_arrival_partition():
    q = DeliveryQueue()
    for s, r in ((1, 3), (2, 3), (4, 7)):
        q.enqueue(FeedbackEvent(s, r, 0.5))
    sizes = {t: len(q.drain(t)) for t in range(1, 8)}
    assert sizes[3] == 2 and sizes[7] == 1 and sum(sizes.values()) == 3


def test_constant_delay_two():
    q = DeliveryQueue()
    for t in range(1, 30):
        q.enqueue(FeedbackEvent(t, t + 2, 0.5))
        batch = q.drain(t)
        assert [e.origin_round for e in batch] == ([t - 2] if t >= 3 else [])


def test_drain_must_advance_and_enqueue_must_be_future():
    q = DeliveryQueue()
    q.drain(3)
    with pytest.raises(ContractViolation):
        q.drain(3)
    with pytest.raises(ContractViolation):
        q.enqueue(FeedbackEvent(1, 3, 0.5))


@given(_schedules(), st.integers(1, 60))
def test_delivery_completeness_and_timing(sched, T):
    d = sched.sequence(T)
    q = DeliveryQueue()
    seen = []
    for t in range(1, T + 1):
        r = t + int(d[t - 1])
        q.enqueue(FeedbackEvent(t, r, 0.5))
        for ev in q.drain(t):
            assert ev.arrival_round == t == ev.origin_round + d[ev.origin_round - 1]
            seen.append(ev.origin_round)
    never = set(q.pending_origins())
    assert len(seen) == len(set(seen))
    assert set(seen) | never == set(range(1, T + 1)) and not (set(seen) & never)
    assert never == missing_set(d, T)


@given(st.lists(st.integers(1, 12), min_size=1, max_size=50))
def test_arrival_csr_matches_queue(delays):
    T = len(delays)
    indptr, origins = arrival_csr(np.array(delays), T)
    q = DeliveryQueue()
    for t in range(1, T + 1):
        q.enqueue(FeedbackEvent(t, t + delays[t - 1], 0.0))
        expect = [e.origin_round - 1 for e in q.drain(t)]
        assert origins[indptr[t - 1]:indptr[t]].tolist() == expect
    assert int((~missing_mask(delays, T)).sum()) == indptr[-1]


# ---------------------------------------------------------------- step sizes


def test_step_size_fixed():
    assert step_size(StepSizeSchedule.fixed(0.01), 99) == 0.01


def test_step_size_quarter_class_first_round_and_cap():
    raw = StepSizeSchedule.power_log(5 / 8)
    assert step_size(raw, 1) == pytest.approx(1 / math.log(2), rel=1e-12)
    capped = anytime_exp3_schedule("t^1/4")
    assert step_size(capped, 1) == EXP3_ETA_CAP
    assert EXP3_ETA_CAP == pytest.approx(math.exp(-2) / 2 * (1 - 1e-9), rel=1e-15)
    assert step_size(capped, 1) < EXP3_ETA_LIMIT


def test_step_size_linear_class_t10():
    assert step_size(StepSizeSchedule.power_log(1.0), 10) == pytest.approx(0.04170, abs=5e-6)


@pytest.mark.parametrize("sched", [
    StepSizeSchedule.fixed(0.2),
    StepSizeSchedule.power_log(5 / 8),
    StepSizeSchedule.power_log(7 / 8),
    StepSizeSchedule.power_log(1.0),
    StepSizeSchedule.loglog(),
    StepSizeSchedule.power_log(0.5).capped(),
])
def test_step_sizes_positive_non_increasing(sched):
    v = sched.values(10**6)
    assert v.min() > 0
    assert np.all(np.diff(v) <= 0)
    for t in (1, 2, 17, 999_999):
        assert v[t - 1] == pytest.approx(step_size(sched, t), rel=1e-12)


def test_step_size_validation():
    with pytest.raises(ConfigurationError):
        StepSizeSchedule.fixed(0.0)
    with pytest.raises(ConfigurationError):
        step_size(StepSizeSchedule.fixed(0.1), 0)


# ---------------------------------------------------------------- adversaries


def test_cost_range_is_hard_error():
    with pytest.raises(ContractViolation):
        check_costs([0.2, 1.01])
    with pytest.raises(ContractViolation):
        ObliviousAdversary([[0.1, -0.5]])
    assert check_costs([1 + 1e-13])[0] == 1.0


def test_oblivious_costs_ignore_actions():
    L = np.random.default_rng(0).random((20, 3))
    adv = ObliviousAdversary(L)
    a = [adv.cost_vector(t, [0] * (t - 1)).copy() for t in range(1, 21)]
    b = [adv.cost_vector(t, [2] * (t - 1)).copy() for t in range(1, 21)]
    assert np.array_equal(np.array(a), np.array(b))


def test_adaptive_adversary_sees_only_past_actions():
    seen = []

    def cb(t, past):
        seen.append(past)
        return [1.0 if (past and past[-1] == 0) else 0.0, 0.5]

    adv = AdaptiveAdversary(cb, arms=2)
    assert adv.cost_vector(1, ()).tolist() == [0.0, 0.5]
    assert adv.cost_vector(2, (0,)).tolist() == [1.0, 0.5]
    assert seen == [(), (0,)]
    with pytest.raises(ContractViolation):
        adv.cost_vector(3, (0,))


# ---------------------------------------------------------------- regret


def _traj(actions, costs, etas=None, probs=None):
    costs = np.asarray(costs, dtype=float)
    T = costs.shape[0]
    a = np.asarray(actions)
    return Trajectory(actions=a, losses=costs[np.arange(T), a], delays=np.ones(T, dtype=np.int64),
                      n_feedback_used=np.zeros(T, dtype=np.int64),
                      etas=np.ones(T) if etas is None else np.asarray(etas, dtype=float), probabilities=probs)


def test_regret_constant_losses_zero():
    assert regret(_traj([0, 1, 1, 0], np.full((4, 2), 0.5)), np.full((4, 2), 0.5)) == 0.0


def test_regret_hand_example():
    costs = np.array([[0, 1], [0, 1], [0, 1]], dtype=float)
    assert regret(_traj([1, 1, 0], costs), costs) == 2.0


def test_regret_single_round_argmin():
    costs = np.array([[0.7, 0.2]])
    assert regret(_traj([1], costs), costs) == 0.0


def test_discounted_ratio_hand_example():
    costs = np.array([[0, 1], [1, 0]], dtype=float)
    tr = _traj([1, 0], costs, etas=[1.0, 0.5])
    assert discounted_regret_ratio(tr, costs) == pytest.approx(1.0 / 1.5, abs=1e-12)


def test_discounted_ratio_constant_eta_is_average_regret():
    rng = np.random.default_rng(3)
    costs = rng.random((50, 3))
    tr = _traj(rng.integers(0, 3, 50), costs, etas=np.full(50, 0.3))
    assert discounted_regret_ratio(tr, costs) == pytest.approx(regret(tr, costs) / 50, rel=1e-12)


def test_discounted_ratio_identical_arms_zero():
    costs = np.tile(np.linspace(0, 1, 10)[:, None], (1, 3))
    tr = _traj(np.arange(10) % 3, costs, etas=1 / np.arange(1, 11))
    assert discounted_regret_ratio(tr, costs) == pytest.approx(0.0, abs=1e-15)


def test_quadratic_comparator_matches_grid(rng):
    fam = quadratic_tracking_losses(40, 1, rng)
    body = ConvexBody.ball(1)
    x, val = fam.best_fixed(body)
    gx, gval = grid_best_fixed(lambda t, X: fam.curvature[t - 1] * ((X - fam.center[t - 1]) ** 2).sum(1), body, 40)
    assert abs(x[0] - gx[0]) < 2.5e-4
    assert val <= gval + 1e-12 and gval - val < 1e-6
