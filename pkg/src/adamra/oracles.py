"""Straight-line reference evaluations.

Everything here is scalar Python loops over nested lists: no kernel
backend, no numpy linear algebra. Slow by design; used as the independent
side of equivalence checks on small instances.
"""

from fractions import Fraction
import math


def _rows(m):
    return [[float(x) for x in row] for row in m]


def matmul(a, b):
    a, b = _rows(a), _rows(b)
    n, k, m = len(a), len(b), len(b[0])
    if len(a[0]) != k:
        raise ValueError("inner dimensions differ")
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return out


def softmax_row(xs):
    top = max(xs)
    es = [math.exp(x - top) for x in xs]
    total = math.fsum(es)
    return [e / total for e in es]


def feature(phi, x):
    if phi == "relu":
        return x if x > 0 else 0.0
    if phi == "elu1":
        return x + 1.0 if x > 0 else math.exp(x)
    raise ValueError(phi)


def dot(u, w):
    return math.fsum(a * b for a, b in zip(u, w))


def generalized_attention(q, k, v, sim, eps=0.0):
    """sum_j sim(q_i, k_j) v_j / (sum_j sim(q_i, k_j) + eps), row by row."""
    q, k, v = _rows(q), _rows(k), _rows(v)
    out = []
    for qi in q:
        weights = [sim(qi, kj) for kj in k]
        den = math.fsum(weights) + eps
        out.append([math.fsum(w * vj[c] for w, vj in zip(weights, v)) / den
                    for c in range(len(v[0]))])
    return out


def kernel_sim(phi):
    def sim(qi, kj):
        return dot([feature(phi, x) for x in qi], [feature(phi, x) for x in kj])
    return sim


def softmax_sim(scale):
    def sim(qi, kj):
        return math.exp(scale * dot(qi, kj))
    return sim


def segment_means(m, landmarks):
    m = _rows(m)
    n = len(m)
    out = []
    for s in range(landmarks):
        lo = (s * n) // landmarks
        hi = ((s + 1) * n) // landmarks
        out.append([math.fsum(m[i][c] for i in range(lo, hi)) / (hi - lo)
                    for c in range(len(m[0]))])
    return out


def landmarks_for(n, rate):
    m = math.floor(n * Fraction(rate) + Fraction(1, 2))
    return min(n, max(1, m))


def adamra_layer(x, p, cfg, head_of=None):
    """Loop-level forward of the multi-resolution layer.

    ``head_of`` overrides routing (used for random routing, whose draw is
    not part of the math being checked).
    """
    x = _rows(x)
    n, d = len(x), len(x[0])
    H, S, dh = cfg.heads, cfg.subheads, d // cfg.subheads
    q = matmul(x, p.qkv.w_q)
    k = matmul(x, p.qkv.w_k)
    v = matmul(x, p.qkv.w_v)

    logits = matmul(q, p.w_router)
    probs = [softmax_row(row) for row in logits]
    if head_of is None:
        head_of = []
        for row in probs:
            best = 0
            for h in range(1, H):
                if row[h] > row[best]:
                    best = h
            head_of.append(best)
        gates = [probs[i][head_of[i]] for i in range(n)]
    else:
        head_of = [int(h) for h in head_of]
        gates = [1.0] * n
    if not cfg.gate_scaling:
        gates = [1.0] * n

    if cfg.phi == "softmax":
        sim = softmax_sim(1.0 / math.sqrt(dh))
        eps = 0.0
    else:
        sim = kernel_sim(cfg.phi)
        eps = cfg.eps

    z = [[0.0] * (S * dh) for _ in range(n)]
    for h in range(H):
        m_h = landmarks_for(n, cfg.rates[h])
        k_t = segment_means(k, m_h)
        v_t = segment_means(v, m_h)
        routed = [i for i in range(n) if head_of[i] == h]
        if not routed:
            continue
        for s in range(S):
            keys = matmul(k_t, p.w_k[h][s])
            vals = matmul(v_t, p.w_v[h][s])
            queries = matmul([q[i] for i in routed], p.w_q[h][s])
            outs = generalized_attention(queries, keys, vals, sim, eps)
            for row, i in zip(outs, routed):
                for c in range(dh):
                    z[i][s * dh + c] += row[c]
    zg = [[gates[i] * val for val in z[i]] for i in range(n)]
    return matmul(zg, p.w_o)
