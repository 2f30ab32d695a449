# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: segment means, fused linear attention, row softmax
and routing argmax.

Same contracts as ``adamra._pykernels``. Loops accumulate row-major, left to
right, so results are reproducible run to run.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def segment_bounds(Py_ssize_t n, Py_ssize_t landmarks):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] b = np.empty(landmarks + 1, dtype=np.int64)
    cdef Py_ssize_t s
    for s in range(landmarks + 1):
        b[s] = (s * n) // landmarks
    return b


def segment_mean(const double[:, ::1] m, Py_ssize_t landmarks):
    cdef Py_ssize_t n = m.shape[0], d = m.shape[1]
    cdef Py_ssize_t s, i, j, lo, hi
    cdef double inv
    out_arr = np.zeros((landmarks, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if landmarks == n:
        for i in range(n):
            for j in range(d):
                out[i, j] = m[i, j]
        return out_arr
    for s in range(landmarks):
        lo = (s * n) // landmarks
        hi = ((s + 1) * n) // landmarks
        for i in range(lo, hi):
            for j in range(d):
                out[s, j] += m[i, j]
        inv = 1.0 / <double>(hi - lo)
        for j in range(d):
            out[s, j] = out[s, j] * inv
    return out_arr


def segment_mean_adjoint(const double[:, ::1] g, Py_ssize_t n):
    cdef Py_ssize_t landmarks = g.shape[0], d = g.shape[1]
    cdef Py_ssize_t s, i, j, lo, hi
    cdef double inv
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for s in range(landmarks):
        lo = (s * n) // landmarks
        hi = ((s + 1) * n) // landmarks
        inv = 1.0 / <double>(hi - lo)
        for i in range(lo, hi):
            for j in range(d):
                out[i, j] = g[s, j] * inv
    return out_arr


def softmax_rows(const double[:, ::1] m):
    cdef Py_ssize_t r = m.shape[0], c = m.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, total
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        mx = m[i, 0]
        for j in range(1, c):
            if m[i, j] > mx:
                mx = m[i, j]
        total = 0.0
        for j in range(c):
            out[i, j] = exp(m[i, j] - mx)
            total += out[i, j]
        for j in range(c):
            out[i, j] = out[i, j] / total
    return out_arr


def linear_attention(const double[:, ::1] phi_q, const double[:, ::1] phi_k,
                     const double[:, ::1] v, double eps):
    cdef Py_ssize_t r = phi_q.shape[0], f = phi_q.shape[1]
    cdef Py_ssize_t m = phi_k.shape[0], dv = v.shape[1]
    cdef Py_ssize_t i, j, a, b
    cdef double w, acc, inv
    kv_arr = np.zeros((f, dv), dtype=np.float64)
    ksum_arr = np.zeros(f, dtype=np.float64)
    den_arr = np.empty(r, dtype=np.float64)
    out_arr = np.zeros((r, dv), dtype=np.float64)
    cdef double[:, ::1] kv = kv_arr
    cdef double[::1] ksum = ksum_arr
    cdef double[::1] den = den_arr
    cdef double[:, ::1] out = out_arr

    # key/value summary, accumulated once and shared by every query
    for j in range(m):
        for a in range(f):
            w = phi_k[j, a]
            if w == 0.0:
                continue
            ksum[a] += w
            for b in range(dv):
                kv[a, b] += w * v[j, b]

    for i in range(r):
        acc = 0.0
        for a in range(f):
            w = phi_q[i, a]
            if w == 0.0:
                continue
            acc += w * ksum[a]
            for b in range(dv):
                out[i, b] += w * kv[a, b]
        acc += eps
        den[i] = acc
        inv = 1.0 / acc
        for b in range(dv):
            out[i, b] = out[i, b] * inv
    return out_arr, kv_arr, ksum_arr, den_arr


def linear_attention_backward(const double[:, ::1] phi_q, const double[:, ::1] phi_k,
                              const double[:, ::1] v, const double[:, ::1] kv,
                              const double[::1] ksum, const double[::1] den,
                              const double[:, ::1] out, const double[:, ::1] g_out):
    cdef Py_ssize_t r = phi_q.shape[0], f = phi_q.shape[1]
    cdef Py_ssize_t m = phi_k.shape[0], dv = v.shape[1]
    cdef Py_ssize_t i, j, a, b
    cdef double gd, w, acc, inv
    g_phi_q_arr = np.empty((r, f), dtype=np.float64)
    g_phi_k_arr = np.empty((m, f), dtype=np.float64)
    g_v_arr = np.zeros((m, dv), dtype=np.float64)
    g_kv_arr = np.zeros((f, dv), dtype=np.float64)
    g_ksum_arr = np.zeros(f, dtype=np.float64)
    g_num_arr = np.empty(dv, dtype=np.float64)
    cdef double[:, ::1] g_phi_q = g_phi_q_arr
    cdef double[:, ::1] g_phi_k = g_phi_k_arr
    cdef double[:, ::1] g_v = g_v_arr
    cdef double[:, ::1] g_kv = g_kv_arr
    cdef double[::1] g_ksum = g_ksum_arr
    cdef double[::1] g_num = g_num_arr

    for i in range(r):
        inv = 1.0 / den[i]
        gd = 0.0
        for b in range(dv):
            g_num[b] = g_out[i, b] * inv
            gd += g_out[i, b] * out[i, b]
        gd = -gd * inv
        for a in range(f):
            acc = 0.0
            for b in range(dv):
                acc += g_num[b] * kv[a, b]
            g_phi_q[i, a] = acc + gd * ksum[a]
            w = phi_q[i, a]
            if w == 0.0:
                continue
            g_ksum[a] += w * gd
            for b in range(dv):
                g_kv[a, b] += w * g_num[b]

    for j in range(m):
        for a in range(f):
            acc = 0.0
            for b in range(dv):
                acc += v[j, b] * g_kv[a, b]
            g_phi_k[j, a] = acc + g_ksum[a]
            w = phi_k[j, a]
            if w == 0.0:
                continue
            for b in range(dv):
                g_v[j, b] += w * g_kv[a, b]
    return g_phi_q_arr, g_phi_k_arr, g_v_arr


def route_argmax(const double[:, ::1] probs):
    cdef Py_ssize_t n = probs.shape[0], h = probs.shape[1]
    cdef Py_ssize_t i, k, best
    head_arr = np.empty(n, dtype=np.int64)
    gate_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] head_of = head_arr
    cdef double[::1] gate = gate_arr
    for i in range(n):
        best = 0
        for k in range(1, h):
            if probs[i, k] > probs[i, best]:
                best = k
        head_of[i] = best
        gate[i] = probs[i, best]
    return head_arr, gate_arr
