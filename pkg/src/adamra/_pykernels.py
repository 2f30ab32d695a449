"""Pure numpy implementations of the hot kernels.

Mirrors the compiled ``_kernels`` module function for function. Inputs are
assumed validated (float64, C-contiguous, conforming shapes); the public
wrappers in :mod:`adamra.numkernel` do the checking.
"""

import numpy as np

NAME = "numpy"


def segment_bounds(n, landmarks):
    s = np.arange(landmarks + 1, dtype=np.int64)
    return (s * n) // landmarks


def segment_mean(m, landmarks):
    n = m.shape[0]
    if landmarks == n:
        return m.copy()
    bounds = segment_bounds(n, landmarks)
    sums = np.add.reduceat(m, bounds[:-1], axis=0)
    counts = np.diff(bounds).astype(np.float64)
    return sums / counts[:, None]


def segment_mean_adjoint(g, n):
    landmarks = g.shape[0]
    if landmarks == n:
        return g.copy()
    bounds = segment_bounds(n, landmarks)
    counts = np.diff(bounds)
    return np.repeat(g / counts[:, None].astype(np.float64), counts, axis=0)


def softmax_rows(m):
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def linear_attention(phi_q, phi_k, v, eps):
    kv = phi_k.T @ v
    ksum = phi_k.sum(axis=0)
    den = phi_q @ ksum + eps
    out = (phi_q @ kv) / den[:, None]
    return out, kv, ksum, den


def linear_attention_backward(phi_q, phi_k, v, kv, ksum, den, out, g_out):
    g_num = g_out / den[:, None]
    g_den = -np.einsum("ij,ij->i", g_out, out) / den
    g_phi_q = g_num @ kv.T + np.outer(g_den, ksum)
    g_kv = phi_q.T @ g_num
    g_ksum = phi_q.T @ g_den
    g_phi_k = v @ g_kv.T + g_ksum[None, :]
    g_v = phi_k @ g_kv
    return g_phi_q, g_phi_k, g_v


def route_argmax(probs):
    head_of = np.argmax(probs, axis=1).astype(np.int64)
    gate = probs[np.arange(probs.shape[0]), head_of].copy()
    return head_of, gate
