"""Adaptive multi-resolution attention layer.

Each head attends over keys/values compressed by segment means at its own
rate; every query is routed to exactly one head by a learned softmax
router; heads split into subheads that share the head's compressed memory.
Per-token outputs are scattered back (disjointly, so the sum over heads is a
scatter) and projected by ``w_o``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from . import _backend
from .attention import DEFAULT_EPS, QkvParams, attention_bwd, attention_fwd, project_qkv
from .numkernel import (
    ShapeError,
    as_matrix,
    init_uniform,
    segment_mean,
    segment_mean_adjoint,
)

PHIS = ("relu", "elu1", "softmax")
ROUTINGS = ("learned", "random")


def parse_rate(value):
    """A compression rate as an exact fraction: ``"1/8"``, ``0.125`` or ``Fraction``."""
    if isinstance(value, Fraction):
        rate = value
    elif isinstance(value, str):
        rate = Fraction(value.strip())
    elif isinstance(value, float):
        rate = Fraction(value).limit_denominator(1 << 20)
    else:
        rate = Fraction(value)
    if not 0 < rate <= 1:
        raise ValueError(f"compression rate must lie in (0, 1], got {value}")
    return rate


def landmark_count(n, rate):
    """m = max(1, round(n * c)) with halves rounded up, never above n."""
    m = math.floor(Fraction(n) * rate + Fraction(1, 2))
    return min(n, max(1, m))


@dataclass(frozen=True)
class AdamraConfig:
    d: int = 64
    heads: int = 3
    subheads: int = 2
    rates: tuple = (Fraction(1, 2), Fraction(1, 8), Fraction(1, 32))
    phi: str = "relu"
    eps: float = DEFAULT_EPS
    routing: str = "learned"
    gate_scaling: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(parse_rate(c) for c in self.rates))
        if self.heads < 1 or self.subheads < 1:
            raise ValueError("heads and subheads must be at least 1")
        if len(self.rates) != self.heads:
            raise ValueError(f"{self.heads} heads but {len(self.rates)} compression rates")
        if self.d < 1 or self.d % self.subheads:
            raise ValueError(f"d={self.d} is not divisible by {self.subheads} subheads")
        if self.phi not in PHIS:
            raise ValueError(f"unknown feature function {self.phi!r}; expected one of {PHIS}")
        if self.routing not in ROUTINGS:
            raise ValueError(f"unknown routing mode {self.routing!r}; expected one of {ROUTINGS}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def d_head(self):
        """Subhead width d_k = d_v = d / S."""
        return self.d // self.subheads

    @property
    def attention_mode(self):
        return "softmax" if self.phi == "softmax" else "kernel"

    @property
    def multi_resolution(self):
        return len(set(self.rates)) == len(self.rates)

    def landmarks(self, n):
        if n < 1:
            raise ValueError(f"sequence length must be >= 1, got {n}")
        return tuple(landmark_count(n, c) for c in self.rates)

    def replace(self, **changes):
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return AdamraConfig(**values)


@dataclass
class AdamraParams:
    qkv: QkvParams
    w_router: np.ndarray
    w_q: list  # [head][subhead] -> d x d_k
    w_k: list
    w_v: list
    w_o: np.ndarray

    @classmethod
    def init(cls, cfg, rng):
        d, dh = cfg.d, cfg.d_head
        qkv = QkvParams.init(d, rng)
        w_router = init_uniform(rng, d, cfg.heads)
        w_q, w_k, w_v = [], [], []
        for _ in range(cfg.heads):
            w_q.append([init_uniform(rng, d, dh) for _ in range(cfg.subheads)])
            w_k.append([init_uniform(rng, d, dh) for _ in range(cfg.subheads)])
            w_v.append([init_uniform(rng, d, dh) for _ in range(cfg.subheads)])
        w_o = init_uniform(rng, cfg.subheads * dh, d)
        return cls(qkv, w_router, w_q, w_k, w_v, w_o)

    @classmethod
    def zeros(cls, cfg):
        d, dh, H, S = cfg.d, cfg.d_head, cfg.heads, cfg.subheads
        z = lambda r, c: np.zeros((r, c))  # noqa: E731
        return cls(
            QkvParams(z(d, d), z(d, d), z(d, d)),
            z(d, H),
            [[z(d, dh) for _ in range(S)] for _ in range(H)],
            [[z(d, dh) for _ in range(S)] for _ in range(H)],
            [[z(d, dh) for _ in range(S)] for _ in range(H)],
            z(S * dh, d),
        )

    def blocks(self):
        """``(name, array)`` pairs in declaration order."""
        yield "qkv.w_q", self.qkv.w_q
        yield "qkv.w_k", self.qkv.w_k
        yield "qkv.w_v", self.qkv.w_v
        yield "w_router", self.w_router
        for h in range(len(self.w_q)):
            for s in range(len(self.w_q[h])):
                yield f"w_q[{h}][{s}]", self.w_q[h][s]
                yield f"w_k[{h}][{s}]", self.w_k[h][s]
                yield f"w_v[{h}][{s}]", self.w_v[h][s]
        yield "w_o", self.w_o

    def check(self, cfg):
        expected = dict(AdamraParams.zeros(cfg).blocks())
        got = dict(self.blocks())
        if expected.keys() != got.keys():
            raise ShapeError("parameter blocks do not match the configuration")
        for name, ref in expected.items():
            if got[name].shape != ref.shape:
                raise ShapeError(f"{name}: expected shape {ref.shape}, got {got[name].shape}")


def parameter_count(d, heads, subheads):
    dh = d // subheads
    return 3 * d * d + d * heads + heads * subheads * 3 * d * dh + subheads * dh * d


@dataclass
class CompressedMemory:
    k_tilde: list
    v_tilde: list
    landmarks: tuple


@dataclass
class RoutingAssignment:
    probs: np.ndarray
    head_of: np.ndarray
    gate: np.ndarray

    def groups(self, heads):
        """Token indices routed to each head, in token order."""
        return [np.flatnonzero(self.head_of == h) for h in range(heads)]

    def utilization(self, heads):
        counts = np.bincount(self.head_of, minlength=heads)
        return counts / counts.sum()


@dataclass
class ForwardTrace:
    cfg: AdamraConfig
    params: AdamraParams
    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    memory: CompressedMemory
    routing: RoutingAssignment
    groups: list
    z: np.ndarray
    gate: np.ndarray
    caches: dict = field(default_factory=dict)  # (h, s) -> attention cache


def compress_memory(k, v, cfg):
    k, v = as_matrix(k, "k"), as_matrix(v, "v")
    n = k.shape[0]
    if n < 1 or v.shape[0] != n:
        raise ShapeError(f"keys/values must share a nonzero row count, got {k.shape} and {v.shape}")
    ms = cfg.landmarks(n)
    return CompressedMemory(
        [segment_mean(k, m) for m in ms],
        [segment_mean(v, m) for m in ms],
        ms,
    )


def route(q, w_router, mode="learned", seed=0):
    q, w_router = as_matrix(q, "q"), as_matrix(w_router, "w_router")
    if q.shape[1] != w_router.shape[0]:
        raise ShapeError(f"router expects width {w_router.shape[0]}, queries have {q.shape[1]}")
    n, heads = q.shape[0], w_router.shape[1]
    if mode == "learned":
        probs = _backend.kernels.softmax_rows(q @ w_router)
        head_of, gate = _backend.kernels.route_argmax(probs)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        head_of = rng.integers(0, heads, size=n).astype(np.int64)
        probs = np.full((n, heads), 1.0 / heads)
        gate = np.ones(n)
    else:
        raise ValueError(f"unknown routing mode {mode!r}")
    return RoutingAssignment(probs, head_of, gate)


def adamra_forward(x, p, cfg, seed=0):
    """One layer forward pass; returns ``(output, trace)``.

    ``seed`` only matters for random routing.
    """
    x = as_matrix(x, "x")
    n = x.shape[0]
    if n < 1:
        raise ShapeError("empty input sequence")
    if x.shape[1] != cfg.d:
        raise ShapeError(f"input width {x.shape[1]} != d={cfg.d}")
    p.check(cfg)

    q, k, v = project_qkv(x, p.qkv)
    memory = compress_memory(k, v, cfg)
    routing = route(q, p.w_router, cfg.routing, seed)
    groups = routing.groups(cfg.heads)

    dh, mode = cfg.d_head, cfg.attention_mode
    z = np.zeros((n, cfg.subheads * dh))
    caches = {}
    for h, idx in enumerate(groups):
        if idx.size == 0:
            continue
        q_h = q[idx]
        for s in range(cfg.subheads):
            out, cache = attention_fwd(
                q_h @ p.w_q[h][s],
                memory.k_tilde[h] @ p.w_k[h][s],
                memory.v_tilde[h] @ p.w_v[h][s],
                mode, cfg.phi, cfg.eps,
            )
            z[idx, s * dh:(s + 1) * dh] = out
            caches[h, s] = cache

    gate = routing.gate if cfg.gate_scaling else np.ones(n)
    y = (z * gate[:, None]) @ p.w_o
    return y, ForwardTrace(cfg, p, x, q, k, v, memory, routing, groups, z, gate, caches)


def adamra_backward(trace, upstream):
    """Reverse-mode gradients ``(AdamraParams, g_x)`` of a forward pass.

    The routing decision is treated as constant; with gate scaling on the
    router is trained through the winning probability.
    """
    t = trace
    cfg, p = t.cfg, t.params
    g_y = as_matrix(upstream, "upstream")
    n = t.x.shape[0]
    if g_y.shape != (n, cfg.d):
        raise ShapeError(f"upstream shape {g_y.shape} != forward output shape {(n, cfg.d)}")
    grads = AdamraParams.zeros(cfg)
    dh = cfg.d_head

    zg = t.z * t.gate[:, None]
    grads.w_o = zg.T @ g_y
    g_zg = g_y @ p.w_o.T
    g_z = g_zg * t.gate[:, None]

    g_q = np.zeros_like(t.q)
    if cfg.gate_scaling and cfg.routing == "learned":
        g_gate = np.einsum("ij,ij->i", g_zg, t.z)
        probs = t.routing.probs
        g_probs = np.zeros_like(probs)
        g_probs[np.arange(n), t.routing.head_of] = g_gate
        g_logits = probs * (g_probs - np.einsum("ij,ij->i", g_probs, probs)[:, None])
        grads.w_router = t.q.T @ g_logits
        g_q += g_logits @ p.w_router.T

    g_k = np.zeros_like(t.k)
    g_v = np.zeros_like(t.v)
    for h, idx in enumerate(t.groups):
        if idx.size == 0:
            continue
        q_h = t.q[idx]
        k_t, v_t = t.memory.k_tilde[h], t.memory.v_tilde[h]
        g_qh = np.zeros_like(q_h)
        g_kt = np.zeros_like(k_t)
        g_vt = np.zeros_like(v_t)
        for s in range(cfg.subheads):
            g_qs, g_ks, g_vs = attention_bwd(
                cfg.attention_mode, t.caches[h, s], g_z[idx, s * dh:(s + 1) * dh]
            )
            grads.w_q[h][s] = q_h.T @ g_qs
            grads.w_k[h][s] = k_t.T @ g_ks
            grads.w_v[h][s] = v_t.T @ g_vs
            g_qh += g_qs @ p.w_q[h][s].T
            g_kt += g_ks @ p.w_k[h][s].T
            g_vt += g_vs @ p.w_v[h][s].T
        g_q[idx] += g_qh
        g_k += segment_mean_adjoint(g_kt, n)
        g_v += segment_mean_adjoint(g_vt, n)

    grads.qkv = QkvParams(t.x.T @ g_q, t.x.T @ g_k, t.x.T @ g_v)
    g_x = g_q @ p.qkv.w_q.T + g_k @ p.qkv.w_k.T + g_v @ p.qkv.w_v.T
    return grads, g_x


def router_margin(q, w_router):
    """Smallest gap between the top two router logits over all tokens."""
    logits = as_matrix(q) @ as_matrix(w_router)
    if logits.shape[1] < 2:
        return np.inf
    top2 = np.sort(logits, axis=1)[:, -2:]
    return float(np.min(top2[:, 1] - top2[:, 0]))
