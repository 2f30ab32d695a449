"""Reference attention: quadratic softmax attention, linearized kernel
attention and vanilla multi-head attention.

These are the oracles and the speed/memory comparison targets for the
multi-resolution layer. Every forward has a matching backward so the
baselines can be gradient-checked the same way as the layer itself.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .numkernel import ShapeError, as_matrix, feature_map, init_uniform

DEFAULT_EPS = 1e-6


@dataclass
class QkvParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v"):
            w = getattr(self, name)
            if w.shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {w.shape}")

    @property
    def d(self):
        return self.w_q.shape[0]

    @classmethod
    def init(cls, d, rng):
        return cls(*(init_uniform(rng, d, d) for _ in range(3)))

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.eye(d), np.eye(d))


@dataclass
class MultiHeadParams:
    w_q: list
    w_k: list
    w_v: list
    w_o: np.ndarray

    def __post_init__(self):
        heads = len(self.w_q)
        if not heads or len(self.w_k) != heads or len(self.w_v) != heads:
            raise ShapeError("need the same nonzero number of q/k/v head projections")
        d, d_k = self.w_q[0].shape
        d_v = self.w_v[0].shape[1]
        if heads * d_k != d or heads * d_v != d:
            raise ShapeError(f"{heads} heads of width {d_k}/{d_v} do not tile d={d}")
        for h in range(heads):
            if self.w_q[h].shape != (d, d_k) or self.w_k[h].shape != (d, d_k):
                raise ShapeError(f"head {h}: query/key projections must be {d}x{d_k}")
            if self.w_v[h].shape != (d, d_v):
                raise ShapeError(f"head {h}: value projection must be {d}x{d_v}")
        if self.w_o.shape != (heads * d_v, d):
            raise ShapeError(f"w_o must be {heads * d_v}x{d}, got {self.w_o.shape}")

    @property
    def heads(self):
        return len(self.w_q)

    def blocks(self):
        for h in range(self.heads):
            yield f"mh.w_q[{h}]", self.w_q[h]
            yield f"mh.w_k[{h}]", self.w_k[h]
            yield f"mh.w_v[{h}]", self.w_v[h]
        yield "mh.w_o", self.w_o

    @classmethod
    def init(cls, d, heads, rng):
        if d % heads:
            raise ShapeError(f"d={d} not divisible by {heads} heads")
        dh = d // heads
        return cls(
            [init_uniform(rng, d, dh) for _ in range(heads)],
            [init_uniform(rng, d, dh) for _ in range(heads)],
            [init_uniform(rng, d, dh) for _ in range(heads)],
            init_uniform(rng, d, d),
        )


def project_qkv(x, p):
    x = as_matrix(x, "x")
    if x.shape[1] != p.d:
        raise ShapeError(f"input width {x.shape[1]} does not match projection width {p.d}")
    return x @ p.w_q, x @ p.w_k, x @ p.w_v


def _check_qkv(q, k, v):
    q, k, v = as_matrix(q, "q"), as_matrix(k, "k"), as_matrix(v, "v")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query width {q.shape[1]} != key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"{k.shape[0]} keys but {v.shape[0]} values")
    if k.shape[0] == 0:
        raise ShapeError("attention over an empty key set")
    return q, k, v


# ---------------------------------------------------------------------------
# softmax attention
# ---------------------------------------------------------------------------


def softmax_attention_fwd(q, k, v, scale=None):
    q, k, v = _check_qkv(q, k, v)
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[1])
    a = _backend.kernels.softmax_rows(np.ascontiguousarray(scale * (q @ k.T)))
    return a @ v, (q, k, v, scale, a)


def softmax_attention_bwd(cache, g_out):
    q, k, v, scale, a = cache
    g_v = a.T @ g_out
    g_a = g_out @ v.T
    g_s = a * (g_a - np.einsum("ij,ij->i", g_a, a)[:, None]) * scale
    return g_s @ k, g_s.T @ q, g_v


def softmax_attention(q, k, v, scale=None):
    """softmax(scale * Q K^T) V; ``scale`` defaults to 1/sqrt(d_k)."""
    return softmax_attention_fwd(q, k, v, scale)[0]


# ---------------------------------------------------------------------------
# kernel (linearized) attention
# ---------------------------------------------------------------------------


def kernel_attention_fwd(q, k, v, phi="relu", eps=DEFAULT_EPS):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    fmap, _ = feature_map(phi)
    q, k, v = _check_qkv(q, k, v)
    phi_q, phi_k = fmap(q), fmap(k)
    out, kv, ksum, den = _backend.kernels.linear_attention(phi_q, phi_k, v, float(eps))
    return out, (q, k, v, phi, phi_q, phi_k, kv, ksum, den, out)


def kernel_attention_bwd(cache, g_out):
    q, k, v, phi, phi_q, phi_k, kv, ksum, den, out = cache
    _, dmap = feature_map(phi)
    g_phi_q, g_phi_k, g_v = _backend.kernels.linear_attention_backward(
        phi_q, phi_k, v, kv, ksum, den, out, np.ascontiguousarray(g_out, dtype=np.float64)
    )
    return g_phi_q * dmap(q), g_phi_k * dmap(k), g_v


def kernel_attention(q, k, v, phi="relu", eps=DEFAULT_EPS):
    """phi(Q_i)^T S / (phi(Q_i)^T z + eps) with S = sum_j phi(K_j) V_j^T and
    z = sum_j phi(K_j) accumulated once for all queries.

    A query whose features are all zero gets a zero output row.
    """
    return kernel_attention_fwd(q, k, v, phi, eps)[0]


def attention_fwd(q, k, v, mode="kernel", phi="relu", eps=DEFAULT_EPS, scale=None):
    if mode == "softmax":
        return softmax_attention_fwd(q, k, v, scale)
    if mode == "kernel":
        return kernel_attention_fwd(q, k, v, phi, eps)
    raise ValueError(f"unknown attention mode {mode!r}")


def attention_bwd(mode, cache, g_out):
    if mode == "softmax":
        return softmax_attention_bwd(cache, g_out)
    return kernel_attention_bwd(cache, g_out)


# ---------------------------------------------------------------------------
# vanilla multi-head attention
# ---------------------------------------------------------------------------


def multi_head_attention_fwd(x, p, mode="softmax", phi="relu", eps=DEFAULT_EPS, keep_cache=True):
    """Forward pass returning ``(output, cache)``.

    ``keep_cache=False`` drops each head's intermediates as soon as its
    output is formed (cache is then None); timing uses this so the softmax
    baseline holds one score matrix at a time.
    """
    x = as_matrix(x, "x")
    d = p.w_o.shape[1]
    if x.shape[1] != d:
        raise ShapeError(f"input width {x.shape[1]} does not match model width {d}")
    heads, caches = [], []
    for h in range(p.heads):
        out, cache = attention_fwd(x @ p.w_q[h], x @ p.w_k[h], x @ p.w_v[h], mode, phi, eps)
        heads.append(out)
        if keep_cache:
            caches.append(cache)
        del cache
    concat = np.concatenate(heads, axis=1)
    return concat @ p.w_o, ((x, p, mode, concat, caches) if keep_cache else None)


def multi_head_attention_bwd(cache, g_out):
    """Gradients as ``(MultiHeadParams, g_x)``."""
    x, p, mode, concat, caches = cache
    g_w_o = concat.T @ g_out
    g_concat = g_out @ p.w_o.T
    d_v = p.w_v[0].shape[1]
    g_x = np.zeros_like(x)
    g_wq, g_wk, g_wv = [], [], []
    for h in range(p.heads):
        gq, gk, gv = attention_bwd(mode, caches[h], g_concat[:, h * d_v:(h + 1) * d_v])
        g_wq.append(x.T @ gq)
        g_wk.append(x.T @ gk)
        g_wv.append(x.T @ gv)
        g_x += gq @ p.w_q[h].T + gk @ p.w_k[h].T + gv @ p.w_v[h].T
    return MultiHeadParams(g_wq, g_wk, g_wv, g_w_o), g_x


def multi_head_attention(x, p, mode="softmax", phi="relu", eps=DEFAULT_EPS):
    """Concat(head_1..head_H) W^O, each head attending in its own subspace."""
    return multi_head_attention_fwd(x, p, mode, phi, eps)[0]
