"""Pure-Python kernels with the same signatures as the compiled ones.

They run the object-level learners and the delivery queue round by round,
so they double as the reference implementation in equivalence tests.
"""
from __future__ import annotations

import numpy as np

from .adversary import QuadraticLosses
from .bodies import BodyKind, ConvexBody
from .exp3 import GammaMode, exp3_act, exp3_filter, exp3_new, exp3_update
from .feedback import DeliveryQueue, FeedbackEvent
from .fkm import FkmLearner
from .stepsize import StepSizeSchedule


def _arrival_of(indptr: np.ndarray, origins: np.ndarray, T: int) -> np.ndarray:
    arr = np.full(T, -1, dtype=np.int64)
    for j in range(T):
        arr[origins[indptr[j] : indptr[j + 1]]] = j
    return arr


def _exp3_receive(state, batch, filter_active, disc) -> int:
    n = 0
    for ev in batch:
        if filter_active and not exp3_filter(ev, state.eta):
            state.origin_record.pop(ev.origin_round, None)
            state.discarded += 1
            disc[ev.origin_round - 1] = 1
            continue
        exp3_update(state, [ev], keep_snapshots=False)
        n += 1
    return n


def exp3_run(losses, indptr, origins, etas, gamma_eta, uniforms, filter_active, update_scale):
    losses = np.asarray(losses)
    T, K = losses.shape
    etas = np.asarray(etas, dtype=np.float64)
    arrival = _arrival_of(indptr, origins, T)
    mode = GammaMode.EQUAL_ETA if gamma_eta else GammaMode.ZERO
    st = exp3_new(K, StepSizeSchedule.fixed(float(etas[0])), mode, eta_table=etas)
    st.update_scale = float(update_scale)
    queue = DeliveryQueue()
    actions = np.empty(T, dtype=np.int64)
    probs = np.empty((T, K))
    used = np.zeros(T, dtype=np.int64)
    disc = np.zeros(T, dtype=np.uint8)
    for t in range(1, T + 1):
        probs[t - 1] = st.probabilities
        a = exp3_act(st, u=float(uniforms[t - 1]))
        actions[t - 1] = a
        if arrival[t - 1] >= 0:
            queue.enqueue(FeedbackEvent(t, int(arrival[t - 1]) + 1, float(losses[t - 1, a]), a))
        used[t - 1] = _exp3_receive(st, queue.drain(t), filter_active, disc)
    return actions, probs, used, disc, float(st.max_ratio), int(st.violations)


def fkm_run(curv, center, slope, offset, body_code, body_size, delta, etas, units, indptr, origins):
    family = QuadraticLosses(curv, center, slope, offset, lipschitz=0.0)
    T, n = family.center.shape
    body = ConvexBody(BodyKind.BALL if body_code == 0 else BodyKind.BOX, float(body_size), n)
    etas = np.asarray(etas, dtype=np.float64)
    learner = FkmLearner(body, float(delta), StepSizeSchedule.fixed(float(etas[0])), eta_table=etas)
    arrival = _arrival_of(indptr, origins, T)
    queue = DeliveryQueue()
    actions = np.empty((T, n))
    xs = np.empty((T, n))
    loss = np.empty(T)
    used = np.zeros(T, dtype=np.int64)
    for t in range(1, T + 1):
        xs[t - 1] = learner.x
        a = learner.act(u=units[t - 1])
        actions[t - 1] = a
        try:
            loss[t - 1] = family.value(t, a)
        except Exception as exc:
            raise ValueError(f"loss at round {t} outside [0, 1]") from exc
        if arrival[t - 1] >= 0:
            queue.enqueue(FeedbackEvent(t, int(arrival[t - 1]) + 1, float(loss[t - 1]), None))
        used[t - 1] = learner.receive(queue.drain(t))
    return actions, xs, loss, used


def game_run(util, counts, strides, indptr, origins, origin_offsets, etas, gamma_eta, uniforms,
             filter_active, update_scale):
    util = np.asarray(util)
    counts = np.asarray(counts)
    N = counts.shape[0]
    etas = np.asarray(etas, dtype=np.float64)
    T = etas.shape[0]
    mode = GammaMode.EQUAL_ETA if gamma_eta else GammaMode.ZERO
    states = []
    for k in counts:
        st = exp3_new(int(k), StepSizeSchedule.fixed(float(etas[0])), mode, eta_table=etas)
        st.update_scale = float(update_scale)
        states.append(st)
    arrivals = [
        _arrival_of(indptr[n], origins[origin_offsets[n] : origin_offsets[n + 1]], T) for n in range(N)
    ]
    queues = [DeliveryQueue() for _ in range(N)]
    offs = np.concatenate([[0], np.cumsum(counts)])
    actions = np.empty((T, N), dtype=np.int64)
    probs = np.empty((T, int(offs[-1])))
    loss = np.empty((T, N))
    used = np.zeros((T, N), dtype=np.int64)
    disc = np.zeros((N, T), dtype=np.uint8)
    for t in range(1, T + 1):
        j = 0
        for n, st in enumerate(states):
            probs[t - 1, offs[n] : offs[n + 1]] = st.probabilities
            a = exp3_act(st, u=float(uniforms[t - 1, n]))
            actions[t - 1, n] = a
            j += a * int(strides[n])
        for n in range(N):
            loss[t - 1, n] = 1.0 - util[n, j]
        for n, st in enumerate(states):
            if arrivals[n][t - 1] >= 0:
                a = int(actions[t - 1, n])
                queues[n].enqueue(FeedbackEvent(t, int(arrivals[n][t - 1]) + 1, float(loss[t - 1, n]), a))
            used[t - 1, n] = _exp3_receive(st, queues[n].drain(t), filter_active, disc[n])
    rmax = max(st.max_ratio for st in states)
    viol = sum(st.violations for st in states)
    return actions, probs, loss, used, disc, float(rmax), int(viol)
