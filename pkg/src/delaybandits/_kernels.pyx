# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled round loops.

Every kernel takes pre-drawn randomness and arrival lists grouped by
round (0-indexed), so the pure-Python fallback can reproduce it exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double E2 = 7.38905609893065
cdef double RATIO_LIMIT = E2 * (1.0 + 1e-9)
cdef double COST_TOL = 1e-12


cdef inline void _softmax(double[::1] lw, double[::1] p, Py_ssize_t off, Py_ssize_t K) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = lw[off]
    cdef double s = 0.0
    for i in range(off + 1, off + K):
        if lw[i] > m:
            m = lw[i]
    for i in range(off, off + K):
        p[i] = exp(lw[i] - m)
        s += p[i]
    for i in range(off, off + K):
        p[i] = p[i] / s


cdef inline Py_ssize_t _sample(double[::1] p, Py_ssize_t K, double u) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(K):
        acc += p[i]
        if u < acc:
            return i
    return K - 1


def exp3_run(double[:, ::1] losses, cnp.int64_t[::1] indptr, cnp.int64_t[::1] origins,
             double[::1] etas, bint gamma_eta, double[::1] uniforms, bint filter_active,
             double update_scale):
    cdef Py_ssize_t T = losses.shape[0]
    cdef Py_ssize_t K = losses.shape[1]
    actions_a = np.empty(T, dtype=np.int64)
    probs_a = np.empty((T, K), dtype=np.float64)
    used_a = np.zeros(T, dtype=np.int64)
    disc_a = np.zeros(T, dtype=np.uint8)
    cdef cnp.int64_t[::1] actions = actions_a
    cdef double[:, ::1] probs = probs_a
    cdef cnp.int64_t[::1] used = used_a
    cdef cnp.uint8_t[::1] disc = disc_a
    cdef double[::1] lw = np.zeros(K)
    cdef double[::1] p = np.full(K, 1.0 / K)
    cdef Py_ssize_t t, i, k, s, arm
    cdef double eta_s, r, rmax = 1.0, gamma, inc
    cdef long long violations = 0
    with nogil:
        for t in range(T):
            for i in range(K):
                probs[t, i] = p[i]
            actions[t] = _sample(p, K, uniforms[t])
            for k in range(indptr[t], indptr[t + 1]):
                s = origins[k]
                eta_s = etas[s]
                if filter_active and (t - s) > 1.0 / (E2 * eta_s) - 1.0:
                    disc[s] = 1
                    continue
                r = 0.0
                for i in range(K):
                    if p[i] / probs[s, i] > r:
                        r = p[i] / probs[s, i]
                if r > rmax:
                    rmax = r
                if r > RATIO_LIMIT:
                    violations += 1
                arm = actions[s]
                gamma = eta_s if gamma_eta else 0.0
                inc = eta_s * update_scale * losses[s, arm] / (probs[s, arm] + gamma)
                lw[arm] -= inc
                _softmax(lw, p, 0, K)
                used[t] += 1
    return actions_a, probs_a, used_a, disc_a, rmax, violations


def fkm_run(double[::1] curv, double[:, ::1] center, double[:, ::1] slope, double[::1] offset,
            int body_code, double body_size, double delta, double[::1] etas, double[:, ::1] units,
            cnp.int64_t[::1] indptr, cnp.int64_t[::1] origins):
    cdef Py_ssize_t T = curv.shape[0]
    cdef Py_ssize_t n = center.shape[1]
    actions_a = np.empty((T, n), dtype=np.float64)
    xs_a = np.empty((T, n), dtype=np.float64)
    loss_a = np.empty(T, dtype=np.float64)
    used_a = np.zeros(T, dtype=np.int64)
    cdef double[:, ::1] actions = actions_a
    cdef double[:, ::1] xs = xs_a
    cdef double[::1] loss = loss_a
    cdef cnp.int64_t[::1] used = used_a
    cdef double[::1] x = np.zeros(n)
    cdef Py_ssize_t t, i, k, s
    cdef double val, diff, sq, lin, coef, nrm, lim = (1.0 - delta) * body_size
    cdef bint bad = False
    cdef Py_ssize_t bad_t = -1
    with nogil:
        for t in range(T):
            sq = 0.0
            lin = 0.0
            for i in range(n):
                xs[t, i] = x[i]
                actions[t, i] = x[i] + delta * units[t, i]
                diff = actions[t, i] - center[t, i]
                sq += diff * diff
                lin += slope[t, i] * actions[t, i]
            val = curv[t] * sq + lin + offset[t]
            if not (val >= -COST_TOL and val <= 1.0 + COST_TOL):
                bad = True
                bad_t = t
                break
            if val < 0.0:
                val = 0.0
            elif val > 1.0:
                val = 1.0
            loss[t] = val
            for k in range(indptr[t], indptr[t + 1]):
                s = origins[k]
                coef = (n / delta) * loss[s]
                for i in range(n):
                    x[i] = x[i] - etas[s] * (coef * units[s, i])
                if body_code == 0:
                    nrm = 0.0
                    for i in range(n):
                        nrm += x[i] * x[i]
                    nrm = sqrt(nrm)
                    if nrm > lim:
                        for i in range(n):
                            x[i] = x[i] * (lim / nrm)
                else:
                    for i in range(n):
                        if x[i] > lim:
                            x[i] = lim
                        elif x[i] < -lim:
                            x[i] = -lim
                used[t] += 1
    if bad:
        raise ValueError(f"loss at round {bad_t + 1} outside [0, 1]")
    return actions_a, xs_a, loss_a, used_a


def game_run(double[:, ::1] util, cnp.int64_t[::1] counts, cnp.int64_t[::1] strides,
             cnp.int64_t[:, ::1] indptr, cnp.int64_t[::1] origins, cnp.int64_t[::1] origin_offsets,
             double[::1] etas, bint gamma_eta, double[:, ::1] uniforms, bint filter_active,
             double update_scale):
    cdef Py_ssize_t N = counts.shape[0]
    cdef Py_ssize_t T = etas.shape[0]
    cdef Py_ssize_t n, i, k, s, t, arm, j, off, K
    offs_a = np.zeros(N + 1, dtype=np.int64)
    offs_a[1:] = np.cumsum(counts)
    cdef cnp.int64_t[::1] offs = offs_a
    cdef Py_ssize_t total = offs[N]
    actions_a = np.empty((T, N), dtype=np.int64)
    probs_a = np.empty((T, total), dtype=np.float64)
    loss_a = np.empty((T, N), dtype=np.float64)
    used_a = np.zeros((T, N), dtype=np.int64)
    disc_a = np.zeros((N, T), dtype=np.uint8)
    cdef cnp.int64_t[:, ::1] actions = actions_a
    cdef double[:, ::1] probs = probs_a
    cdef double[:, ::1] loss = loss_a
    cdef cnp.int64_t[:, ::1] used = used_a
    cdef cnp.uint8_t[:, ::1] disc = disc_a
    cdef double[::1] lw = np.zeros(total)
    cdef double[::1] p = np.empty(total)
    for n in range(N):
        for i in range(counts[n]):
            p[offs[n] + i] = 1.0 / counts[n]
    cdef double eta_s, r, rmax = 1.0, gamma, inc, acc, u
    cdef long long violations = 0
    with nogil:
        for t in range(T):
            j = 0
            for n in range(N):
                off = offs[n]
                K = counts[n]
                for i in range(K):
                    probs[t, off + i] = p[off + i]
                u = uniforms[t, n]
                acc = 0.0
                arm = K - 1
                for i in range(K):
                    acc += p[off + i]
                    if u < acc:
                        arm = i
                        break
                actions[t, n] = arm
                j += arm * strides[n]
            for n in range(N):
                loss[t, n] = 1.0 - util[n, j]
            for n in range(N):
                off = offs[n]
                K = counts[n]
                for k in range(indptr[n, t], indptr[n, t + 1]):
                    s = origins[origin_offsets[n] + k]
                    eta_s = etas[s]
                    if filter_active and (t - s) > 1.0 / (E2 * eta_s) - 1.0:
                        disc[n, s] = 1
                        continue
                    r = 0.0
                    for i in range(K):
                        if p[off + i] / probs[s, off + i] > r:
                            r = p[off + i] / probs[s, off + i]
                    if r > rmax:
                        rmax = r
                    if r > RATIO_LIMIT:
                        violations += 1
                    arm = actions[s, n]
                    gamma = eta_s if gamma_eta else 0.0
                    inc = eta_s * update_scale * loss[s, n] / (probs[s, off + arm] + gamma)
                    lw[off + arm] -= inc
                    _softmax(lw, p, off, K)
                    used[t, n] += 1
    return actions_a, probs_a, loss_a, used_a, disc_a, rmax, violations
