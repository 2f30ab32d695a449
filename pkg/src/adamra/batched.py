"""Batched multi-resolution layer for training.

Works on ``(B, n, d)`` arrays. Instead of gathering each head's routed
queries it evaluates every head on every token and masks the result, which
is the same function (non-routed rows are zeroed) with fixed shapes. A
head's subhead projections are applied as one concatenated matrix, and
segment means become a dense ``(m, n)`` averaging matrix, which is cheap at
training lengths.
"""

import numpy as np

from .layer import AdamraParams
from .numkernel import feature_map, segment_bounds


def averaging_matrix(n, landmarks):
    bounds = segment_bounds(n, landmarks)
    m = np.zeros((landmarks, n))
    for s in range(landmarks):
        lo, hi = bounds[s], bounds[s + 1]
        m[s, lo:hi] = 1.0 / (hi - lo)
    return m


def _softmax_last(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(a, S):
    """(B, r, S*dh) -> (B, S, r, dh)"""
    B, r, w = a.shape
    return a.reshape(B, r, S, w // S).transpose(0, 2, 1, 3)


def _merge_heads(a):
    """(B, S, r, dh) -> (B, r, S*dh)"""
    B, S, r, dh = a.shape
    return a.transpose(0, 2, 1, 3).reshape(B, r, S * dh)


def _cat(ws):
    return np.concatenate(ws, axis=1)


def _flat(a):
    return a.reshape(-1, a.shape[-1])


def forward(x, p, cfg, seed=0):
    """Returns ``(y, cache)`` for input of shape (B, n, d)."""
    B, n, d = x.shape
    H, S = cfg.heads, cfg.subheads
    x2 = _flat(x)
    q = (x2 @ p.qkv.w_q).reshape(B, n, d)
    k = (x2 @ p.qkv.w_k).reshape(B, n, d)
    v = (x2 @ p.qkv.w_v).reshape(B, n, d)
    avg = [averaging_matrix(n, m) for m in cfg.landmarks(n)]

    if cfg.routing == "learned":
        probs = _softmax_last(q @ p.w_router)
        head_of = probs.argmax(axis=-1)
        gate = np.take_along_axis(probs, head_of[..., None], axis=-1)[..., 0]
    else:
        rng = np.random.default_rng(seed)
        head_of = rng.integers(0, H, size=(B, n))
        probs = np.full((B, n, H), 1.0 / H)
        gate = np.ones((B, n))
    if not cfg.gate_scaling:
        gate = np.ones((B, n))
    masks = [(head_of == h).astype(np.float64)[..., None] for h in range(H)]

    z = np.zeros((B, n, S * cfg.d_head))
    heads = []
    for h in range(H):
        k_t = avg[h] @ k
        v_t = avg[h] @ v
        qh = _split_heads(q @ _cat(p.w_q[h]), S)
        kh = _split_heads(k_t @ _cat(p.w_k[h]), S)
        vh = _split_heads(v_t @ _cat(p.w_v[h]), S)
        out, c = _attend(qh, kh, vh, cfg)
        z += _merge_heads(out) * masks[h]
        heads.append((k_t, v_t, c))
    zg = z * gate[..., None]
    y = zg @ p.w_o
    cache = (x, p, cfg, q, k, v, avg, probs, head_of, gate, masks, z, zg, heads)
    return y, cache


def _features(x, phi):
    if phi == "relu":
        return np.maximum(x, 0.0)
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def _attend(qh, kh, vh, cfg):
    if cfg.attention_mode == "softmax":
        scale = 1.0 / np.sqrt(qh.shape[-1])
        a = _softmax_last(scale * (qh @ kh.swapaxes(-1, -2)))
        return a @ vh, ("softmax", qh, kh, vh, scale, a)
    fq, fk = _features(qh, cfg.phi), _features(kh, cfg.phi)
    kv = fk.swapaxes(-1, -2) @ vh
    ksum = fk.sum(axis=-2)
    den = (fq @ ksum[..., None])[..., 0] + cfg.eps
    out = (fq @ kv) / den[..., None]
    return out, ("kernel", qh, kh, vh, fq, fk, kv, ksum, den, out)


def _attend_backward(c, g_out, cfg):
    if c[0] == "softmax":
        _, qh, kh, vh, scale, a = c
        g_v = a.swapaxes(-1, -2) @ g_out
        g_a = g_out @ vh.swapaxes(-1, -2)
        g_sc = a * (g_a - np.sum(g_a * a, axis=-1, keepdims=True)) * scale
        return g_sc @ kh, g_sc.swapaxes(-1, -2) @ qh, g_v
    _, qh, kh, vh, fq, fk, kv, ksum, den, out = c
    _, dmap = feature_map(cfg.phi)
    g_num = g_out / den[..., None]
    g_den = -np.sum(g_out * out, axis=-1) / den
    g_fq = g_num @ kv.swapaxes(-1, -2) + g_den[..., None] * ksum[..., None, :]
    g_kv = fq.swapaxes(-1, -2) @ g_num
    g_ksum = (fq.swapaxes(-1, -2) @ g_den[..., None])[..., 0]
    g_fk = vh @ g_kv.swapaxes(-1, -2) + g_ksum[..., None, :]
    g_vh = fk @ g_kv
    return g_fq * dmap(qh), g_fk * dmap(kh), g_vh


def _split_cols(g, S):
    return np.split(g, S, axis=1)


def backward(cache, g_y):
    """Returns ``(AdamraParams gradients summed over the batch, g_x)``."""
    x, p, cfg, q, k, v, avg, probs, head_of, gate, masks, z, zg, heads = cache
    B, n, d = x.shape
    H, S = cfg.heads, cfg.subheads
    grads = AdamraParams.zeros(cfg)

    grads.w_o = _flat(zg).T @ _flat(g_y)
    g_zg = g_y @ p.w_o.T
    g_z = g_zg * gate[..., None]

    g_q = np.zeros_like(q)
    if cfg.gate_scaling and cfg.routing == "learned":
        g_gate = np.sum(g_zg * z, axis=-1)
        g_probs = np.zeros_like(probs)
        np.put_along_axis(g_probs, head_of[..., None], g_gate[..., None], axis=-1)
        g_logits = probs * (g_probs - np.sum(g_probs * probs, axis=-1, keepdims=True))
        grads.w_router = _flat(q).T @ _flat(g_logits)
        g_q += g_logits @ p.w_router.T

    g_k = np.zeros_like(k)
    g_v = np.zeros_like(v)
    q2 = _flat(q)
    for h in range(H):
        k_t, v_t, c = heads[h]
        g_out = _split_heads(g_z * masks[h], S)
        g_qh, g_kh, g_vh = _attend_backward(c, g_out, cfg)
        g_qh, g_kh, g_vh = _merge_heads(g_qh), _merge_heads(g_kh), _merge_heads(g_vh)
        grads.w_q[h] = _split_cols(q2.T @ _flat(g_qh), S)
        grads.w_k[h] = _split_cols(_flat(k_t).T @ _flat(g_kh), S)
        grads.w_v[h] = _split_cols(_flat(v_t).T @ _flat(g_vh), S)
        g_q += g_qh @ _cat(p.w_q[h]).T
        g_k += avg[h].T @ (g_kh @ _cat(p.w_k[h]).T)
        g_v += avg[h].T @ (g_vh @ _cat(p.w_v[h]).T)

    x2 = _flat(x)
    grads.qkv.w_q = x2.T @ _flat(g_q)
    grads.qkv.w_k = x2.T @ _flat(g_k)
    grads.qkv.w_v = x2.T @ _flat(g_v)
    g_x = g_q @ p.qkv.w_q.T + g_k @ p.qkv.w_k.T + g_v @ p.qkv.w_v.T
    return grads, g_x


def utilization(cache, heads):
    head_of = cache[8]
    counts = np.bincount(head_of.ravel(), minlength=heads)
    return counts / counts.sum()
