"""Multi-agent play, ergodic statistics and equilibrium gaps."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delaybandits import (ConfigurationError, ContractViolation, ConvexBody, DelaySchedule, DeliveryQueue,
                          Exp3Learner, FeedbackEvent, FiniteGame, StepSizeSchedule, ZeroSumGame, cce_gap,
                          discounted_ergodic_average, discounted_ergodic_distribution, ne_gap_zero_sum,
                          play_multiagent)
from delaybandits.games import (chicken, coordination, game_value_bilinear, matching_pennies,
                                quadratic_saddle, rock_paper_scissors)
from delaybandits.simulate import run_exp3_game

ETA = StepSizeSchedule.fixed(0.02)


def _learners(game, eta=ETA):
    return [Exp3Learner(k, eta) for k in game.action_counts]


def test_single_player_reduces_to_single_agent_loop():
    u = np.array([0.2, 0.9, 0.5])
    game = FiniteGame([u])
    sched = DelaySchedule.constant(3)
    T = 500
    joint = play_multiagent(game, _learners(game), [sched], ETA, T, np.random.default_rng(7))
    learner = Exp3Learner(3, ETA)
    rng = np.random.default_rng(7)
    q = DeliveryQueue()
    acts = []
    for t in range(1, T + 1):
        a = learner.act(rng)
        acts.append(a)
        if t + 3 <= T:
            q.enqueue(FeedbackEvent(t, t + 3, 1.0 - u[a], a))
        learner.receive(q.drain(t))
    assert joint.actions[:, 0].tolist() == acts
    assert np.allclose(joint.losses[:, 0], 1.0 - u[acts])


def test_joint_play_replayable():
    g = matching_pennies().to_finite()
    s = [DelaySchedule.constant(1)] * 2
    a = play_multiagent(g, _learners(g), s, ETA, 400, np.random.default_rng(3))
    b = play_multiagent(g, _learners(g), s, ETA, 400, np.random.default_rng(3))
    assert np.array_equal(a.actions, b.actions) and np.array_equal(a.losses, b.losses)


def test_heterogeneous_delays_delivered_per_player():
    g = matching_pennies().to_finite()
    scheds = [DelaySchedule.constant(1), DelaySchedule.power_law(0.25)]
    T = 600
    joint = play_multiagent(g, _learners(g), scheds, ETA, T, np.random.default_rng(1))
    for n, s in enumerate(scheds):
        d = s.sequence(T)
        arr = np.arange(1, T + 1) + d
        expect = np.bincount(arr[arr <= T] - 1, minlength=T)
        # the discard filter never fires at these delays and step size
        assert np.array_equal(joint.n_feedback_used[:, n], expect)


def test_joint_play_configuration_errors():
    g = matching_pennies().to_finite()
    with pytest.raises(ConfigurationError):
        play_multiagent(g, _learners(g), [DelaySchedule.constant(1)], ETA, 10, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        play_multiagent(g, _learners(g), [DelaySchedule.constant(1)] * 2,
                        [ETA, StepSizeSchedule.fixed(0.01)], 10, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        play_multiagent(g, _learners(g) * 2, [DelaySchedule.constant(1)] * 4, ETA, 10, np.random.default_rng(0))


def test_kernel_game_matches_object_loop():
    g = chicken()
    T = 800
    scheds = [DelaySchedule.constant(2), DelaySchedule.power_law(0.5)]
    d = np.stack([s.sequence(T) for s in scheds])
    etas = ETA.values(T)
    fast = run_exp3_game(g, d, etas, np.random.default_rng(4))
    u = np.random.default_rng(4).random((T, 2))
    ls = _learners(g)
    qs = [DeliveryQueue(), DeliveryQueue()]
    for t in range(1, T + 1):
        acts = [ls[n].act(u=u[t - 1, n]) for n in range(2)]
        for n in range(2):
            assert acts[n] == fast.actions[t - 1, n]
            r = t + int(d[n, t - 1])
            if r <= T:
                qs[n].enqueue(FeedbackEvent(t, r, 1.0 - g.utilities[n][tuple(acts)], acts[n]))
            ls[n].receive(qs[n].drain(t))


# ---------------------------------------------------------------- ergodic statistics


def test_ergodic_point_mass():
    rho = discounted_ergodic_distribution(np.tile([1, 0], (20, 1)), np.linspace(1, 0.1, 20), (2, 2))
    assert rho[1, 0] == 1.0 and rho.sum() == 1.0


def test_ergodic_frequency_with_constant_eta():
    rho = discounted_ergodic_distribution(np.array([[0], [0], [1], [0]]), np.full(4, 0.3), (2,))
    assert np.allclose(rho, [0.75, 0.25], atol=1e-15)


def test_ergodic_weighted():
    rho = discounted_ergodic_distribution(np.array([[0], [1], [0]]), [1.0, 0.5, 0.25], (2,))
    assert rho[0] == pytest.approx(1.25 / 1.75, abs=1e-15)
    assert rho[0] == pytest.approx(0.7143, abs=5e-5)


def test_ergodic_average_examples():
    assert np.allclose(discounted_ergodic_average(np.tile([0.3, -0.2], (5, 1)), np.arange(5, 0, -1)), [0.3, -0.2])
    assert discounted_ergodic_average([0.0, 1.0, 0.0, 1.0], np.full(4, 0.1)) == pytest.approx(0.5)
    assert discounted_ergodic_average([0.0, 3.0, 3.0], [2.0, 1.0, 1.0]) == pytest.approx(1.5, abs=1e-15)


@given(st.integers(1, 200), st.integers(0, 2**32 - 1), st.booleans())
def test_ergodic_normalisation_and_support(T, seed, prob_mode):
    rng = np.random.default_rng(seed)
    counts = (2, 3)
    A = np.stack([rng.integers(0, k, T) for k in counts], 1)
    P = [rng.dirichlet(np.ones(k), T) for k in counts]
    P[1][:, 2] = 0.0
    P[1] /= P[1].sum(1, keepdims=True)
    etas = np.sort(rng.random(T) + 0.01)[::-1]
    rho = discounted_ergodic_distribution(A, etas, counts, prob_mode, P)
    assert abs(rho.sum() - 1) <= 1e-12 and rho.min() >= 0
    if prob_mode:
        assert np.all(rho[:, 2] == 0)
    else:
        seen = np.zeros(counts, bool)
        seen[A[:, 0], A[:, 1]] = True
        assert np.all(rho[~seen] == 0) and np.all(rho[seen] > 0)


@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_ergodic_average_stays_in_body(T, seed):
    rng = np.random.default_rng(seed)
    body = ConvexBody.ball(3)
    P = body.project_rows(rng.normal(size=(T, 3)))
    avg = discounted_ergodic_average(P, rng.random(T) + 1e-3)
    assert body.contains(avg)


def test_weight_modes_agree_in_expectation():
    g = chicken()
    T, runs = 1000, 200
    d = np.ones((2, T), dtype=np.int64)
    etas = StepSizeSchedule.power_log(5 / 8).capped().values(T)
    diffs = []
    for r in range(runs):
        j = run_exp3_game(g, d, etas, np.random.default_rng(1000 + r))
        ind = discounted_ergodic_distribution(j.actions, etas, (2, 2))
        prob = discounted_ergodic_distribution(j.actions, etas, (2, 2), True, j.probabilities)
        diffs.append(ind - prob)
    diffs = np.array(diffs)
    se = diffs.std(0, ddof=1) / math.sqrt(runs)
    assert np.all(np.abs(diffs.mean(0)) <= 3 * se)


# ---------------------------------------------------------------- gaps


def test_cce_gap_pure_nash_of_coordination():
    g = coordination(3, 2)
    rho = np.zeros((2, 2, 2))
    rho[1, 1, 1] = 1.0
    assert cce_gap(rho, g) <= 0


def test_cce_gap_matching_pennies_uniform():
    rho = np.full((2, 2), 0.25)
    assert cce_gap(rho, matching_pennies().to_finite()) == pytest.approx(0.0, abs=1e-15)


def test_cce_gap_non_equilibrium_point_mass():
    rho = np.zeros((2, 2))
    rho[0, 0] = 1.0
    assert cce_gap(rho, matching_pennies().to_finite()) == pytest.approx(1.0)


def test_cce_gap_shape_mismatch():
    with pytest.raises(ContractViolation):
        cce_gap(np.full(3, 1 / 3), matching_pennies().to_finite())


def test_ne_gap_matrix_examples():
    mp = matching_pennies()
    assert ne_gap_zero_sum(mp, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    assert ne_gap_zero_sum(mp, [1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ContractViolation):
        ne_gap_zero_sum(mp, [0.7, 0.7], [0.5, 0.5])


def test_convex_concave_instances():
    body = ConvexBody.box(1)
    with pytest.raises(ConfigurationError):
        ZeroSumGame.convex_concave(lambda y, z: float(((y - z) ** 2).sum()) / 4, body, body)
    g = quadratic_saddle()
    assert ne_gap_zero_sum(g, [0.0], [0.0]) == pytest.approx(0.0, abs=1e-15)
    assert ne_gap_zero_sum(g, [0.5], [0.0]) == pytest.approx(0.125, abs=1e-15)
    # grid best responses agree with the closed forms
    grid = ZeroSumGame.convex_concave(g.u, body, body)
    for y, z in ((0.3, -0.2), (-0.9, 0.6), (0.0, 0.0)):
        assert ne_gap_zero_sum(grid, [y], [z], grid_points=1001) == pytest.approx(
            ne_gap_zero_sum(g, [y], [z]), abs=1e-12)
    with pytest.raises(ContractViolation):
        ne_gap_zero_sum(g, [1.5], [0.0])


def test_game_value_examples():
    U = np.array([[0.1, 0.7], [0.4, 0.2]])
    assert game_value_bilinear(U, [0, 1], [1, 0]) == 0.4
    assert game_value_bilinear(matching_pennies().U, [0.5, 0.5], [0.5, 0.5]) == 0.5
    assert game_value_bilinear(rock_paper_scissors().U, np.full(3, 1 / 3), np.full(3, 1 / 3)) == pytest.approx(0.5)
    with pytest.raises(ContractViolation):
        game_value_bilinear(U, [0.6, 0.6], [1, 0])


def test_utilities_validated():
    with pytest.raises(ConfigurationError):
        FiniteGame([np.array([[0.0, 1.2], [0.0, 0.0]]), np.zeros((2, 2))])
    with pytest.raises(ConfigurationError):
        FiniteGame([np.zeros((2, 2))])


@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_cce_gap_equals_ne_gap_on_product_distributions(k1, k2, seed):
    rng = np.random.default_rng(seed)
    game = ZeroSumGame.matrix(rng.random((k1, k2)))
    y, z = rng.dirichlet(np.ones(k1)), rng.dirichlet(np.ones(k2))
    assert cce_gap(np.outer(y, z), game.to_finite()) == pytest.approx(ne_gap_zero_sum(game, y, z), abs=1e-9)
