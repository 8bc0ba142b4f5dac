# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def backward_induction(const double[:, ::1] p, const double[::1] reward,
                       const double[::1] bonus, Py_ssize_t horizon,
                       Py_ssize_t num_actions, bint clip):
    cdef Py_ssize_t sa_count = p.shape[0]
    cdef Py_ssize_t num_states = p.shape[1]
    cdef Py_ssize_t h, s, a, sa, j
    cdef double acc, vmax, q, best, cap

    q_arr = np.zeros((horizon, num_states, num_actions), dtype=np.float64)
    v_arr = np.zeros((horizon + 1, num_states), dtype=np.float64)
    c_arr = np.zeros((horizon, num_states, num_actions), dtype=np.bool_)
    cdef double[:, :, ::1] qv = q_arr
    cdef double[:, ::1] vv = v_arr
    cdef cnp.npy_bool[:, :, ::1] cv = c_arr

    if sa_count != num_states * num_actions:
        raise ValueError("transition rows must equal num_states * num_actions")

    for h in range(horizon - 1, -1, -1):
        vmax = 0.0
        for j in range(num_states):
            if fabs(vv[h + 1, j]) > vmax:
                vmax = fabs(vv[h + 1, j])
        cap = <double>(horizon - h)
        for s in range(num_states):
            best = 0.0
            for a in range(num_actions):
                sa = s * num_actions + a
                acc = 0.0
                for j in range(num_states):
                    acc += p[sa, j] * vv[h + 1, j]
                q = reward[sa] + acc + bonus[sa] * vmax
                if clip:
                    if q > cap:
                        q = cap
                        cv[h, s, a] = 1
                    elif q < 0.0:
                        q = 0.0
                        cv[h, s, a] = 1
                qv[h, s, a] = q
                if a == 0 or q > best:
                    best = q
            vv[h, s] = best
    return q_arr, v_arr, c_arr


def rollout(const double[:, ::1] p, const double[::1] reward,
            const double[:, :, ::1] q, Py_ssize_t start, const double[::1] uniforms):
    cdef Py_ssize_t horizon = q.shape[0]
    cdef Py_ssize_t num_states = q.shape[1]
    cdef Py_ssize_t num_actions = q.shape[2]
    cdef Py_ssize_t h, a, best_a, sa, j, nxt, s
    cdef double best, cum, u

    states_arr = np.empty(horizon + 1, dtype=np.int64)
    actions_arr = np.empty(horizon, dtype=np.int64)
    rewards_arr = np.empty(horizon, dtype=np.float64)
    cdef cnp.int64_t[::1] st = states_arr
    cdef cnp.int64_t[::1] ac = actions_arr
    cdef double[::1] rw = rewards_arr

    s = start
    st[0] = s
    for h in range(horizon):
        best_a = 0
        best = q[h, s, 0]
        for a in range(1, num_actions):
            if q[h, s, a] > best:
                best = q[h, s, a]
                best_a = a
        sa = s * num_actions + best_a
        ac[h] = best_a
        rw[h] = reward[sa]
        u = uniforms[h]
        cum = 0.0
        nxt = -1
        for j in range(num_states):
            cum += p[sa, j]
            if cum > u:
                nxt = j
                break
        if nxt < 0:
            # u landed in the rounding gap above the last partial sum
            nxt = num_states - 1
            while nxt > 0 and p[sa, nxt] <= 0.0:
                nxt -= 1
        s = nxt
        st[h + 1] = s
    return states_arr, actions_arr, rewards_arr


def sherman_morrison_update(double[:, ::1] vinv, const double[::1] phi):
    cdef Py_ssize_t d = phi.shape[0]
    cdef Py_ssize_t i, j
    cdef double denom = 1.0
    cdef double[::1] u = np.empty(d, dtype=np.float64)
    for i in range(d):
        u[i] = 0.0
        for j in range(d):
            u[i] += vinv[i, j] * phi[j]
    for i in range(d):
        denom += phi[i] * u[i]
    for i in range(d):
        for j in range(d):
            vinv[i, j] -= u[i] * u[j] / denom
    return denom


cdef double _quad(double[:, ::1] a, const double[::1] x, Py_ssize_t d) nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(d):
        row = 0.0
        for j in range(d):
            row += a[i, j] * x[j]
        acc += x[i] * row
    return acc


def feature_potentials(const double[:, :, ::1] phis, double lam):
    cdef Py_ssize_t n_ep = phis.shape[0]
    cdef Py_ssize_t horizon = phis.shape[1]
    cdef Py_ssize_t d = phis.shape[2]
    cdef Py_ssize_t n, h, i
    frozen_arr = np.empty((n_ep, horizon), dtype=np.float64)
    step_arr = np.empty((n_ep, horizon), dtype=np.float64)
    cdef double[:, ::1] fr = frozen_arr
    cdef double[:, ::1] sp = step_arr
    step_inv_arr = np.eye(d, dtype=np.float64) / lam
    frozen_inv_arr = step_inv_arr.copy()
    cdef double[:, ::1] step_inv = step_inv_arr
    cdef double[:, ::1] frozen_inv = frozen_inv_arr
    for n in range(n_ep):
        frozen_inv[:, :] = step_inv
        for h in range(horizon):
            fr[n, h] = _quad(frozen_inv, phis[n, h], d)
            sp[n, h] = _quad(step_inv, phis[n, h], d)
            sherman_morrison_update(step_inv, phis[n, h])
    return frozen_arr, step_arr
