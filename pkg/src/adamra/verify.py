"""Seeded property suite behind ``adamra verify``.

Each property draws its own random instances from ``seed + i`` and reports
the first failing seed. ``fault="drop-eps"`` evaluates kernel attention
without the denominator stabilizer, which must break the zero-feature
property; it exists to show the suite can fail.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _backend, oracles
from .attention import kernel_attention, softmax_attention
from .layer import AdamraConfig, AdamraParams, adamra_forward, route
from .numkernel import feature_map, segment_mean, softmax_rows

FAULTS = (None, "drop-eps")


@dataclass
class PropertyResult:
    name: str
    passed: bool
    instances: int
    worst: float = 0.0
    seed: int = None
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name:<28} instances={self.instances:<5} worst={self.worst:.3e}"
        if not self.passed:
            text += f" counterexample seed={self.seed}"
            if self.detail:
                text += f" ({self.detail})"
        return text


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _kernel(q, k, v, phi, eps, fault):
    if fault == "drop-eps":
        fmap, _ = feature_map(phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _backend.kernels.linear_attention(fmap(q), fmap(k), v, 0.0)[0]
    return kernel_attention(q, k, v, phi, eps)


class _Check:
    def __init__(self, name, tol):
        self.name, self.tol = name, tol
        self.count, self.worst, self.bad = 0, 0.0, None

    def record(self, seed, err, detail=""):
        self.count += 1
        if not np.isfinite(err):
            err = np.inf
        self.worst = max(self.worst, err)
        if err > self.tol and self.bad is None:
            self.bad = (seed, detail)

    def result(self):
        seed, detail = self.bad if self.bad else (None, "")
        return PropertyResult(self.name, self.bad is None, self.count, self.worst, seed, detail)


def check_linearization(seeds, base_seed=0, fault=None):
    chk = _Check("linearization identity", 1e-10)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, m, f, dv = rng.integers(1, 33), rng.integers(1, 33), rng.integers(1, 9), rng.integers(1, 9)
        q = rng.standard_normal((n, f))
        k = rng.standard_normal((m, f))
        v = rng.standard_normal((m, dv))
        for phi in ("relu", "elu1"):
            got = _kernel(q, k, v, phi, 1e-6, fault)
            want = oracles.generalized_attention(q, k, v, oracles.kernel_sim(phi), 1e-6)
            chk.record(seed, _rel(got, want), phi)
    return chk.result()


def check_zero_feature(seeds, base_seed=0, fault=None):
    """Queries whose features vanish must give finite zero rows."""
    chk = _Check("zero-feature denominator", 0.0)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, m, f = rng.integers(2, 17), rng.integers(1, 17), rng.integers(1, 9)
        q = rng.standard_normal((n, f))
        q[0] = -np.abs(q[0]) - 0.1
        k = rng.standard_normal((m, f))
        v = rng.standard_normal((m, 3))
        out = _kernel(q, k, v, "relu", 1e-6, fault)
        err = np.inf if not np.isfinite(out).all() else float(np.max(np.abs(out[0])))
        chk.record(seed, err, "non-finite row" if not np.isfinite(err) else "")
    return chk.result()


def check_convex_hull(seeds, base_seed=0, fault=None):
    chk = _Check("convex hull", 1e-12)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, m, f = rng.integers(1, 33), rng.integers(1, 33), rng.integers(1, 9)
        q, k = rng.standard_normal((n, f)), rng.standard_normal((m, f))
        v = rng.standard_normal((m, 4))
        for phi in ("relu", "elu1"):
            fmap, _ = feature_map(phi)
            den = fmap(q) @ fmap(k).sum(axis=0)
            out = _kernel(q, k, v, phi, 1e-6, fault)
            # the stabilizer pulls each row toward zero by a factor den / (den + eps)
            slack = (np.abs(v).max() * 1e-6 / (den + 1e-6))[:, None]
            lo, hi = v.min(axis=0), v.max(axis=0)
            over = np.maximum(lo - out, out - hi) - slack
            chk.record(seed, float(max(np.max(over), 0.0)), phi)
    return chk.result()


def _random_layer(rng, max_n=16, max_d=8, max_heads=3, max_sub=2, phi=None):
    S = int(rng.integers(1, max_sub + 1))
    d = S * int(rng.integers(1, max_d // S + 1))
    H = int(rng.integers(1, max_heads + 1))
    n = int(rng.integers(1, max_n + 1))
    denoms = rng.choice(np.arange(1, 9), size=H, replace=False)
    rates = tuple(Fraction(1, int(x)) for x in denoms)
    cfg = AdamraConfig(d=d, heads=H, subheads=S, rates=rates,
                       phi=phi or str(rng.choice(["relu", "elu1"])),
                       gate_scaling=bool(rng.integers(2)))
    return cfg, AdamraParams.init(cfg, rng), rng.standard_normal((n, d))


def check_oracle_equivalence(seeds, base_seed=0, fault=None):
    chk = _Check("layer oracle equivalence", 1e-10)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        cfg, p, x = _random_layer(rng)
        y, _ = adamra_forward(x, p, cfg)
        want = oracles.adamra_layer(x, p, cfg)
        chk.record(seed, _rel(y, want), f"n={x.shape[0]} d={cfg.d} H={cfg.heads} S={cfg.subheads}")
    return chk.result()


def check_collapse(seeds, base_seed=0, fault=None):
    chk = _Check("collapse identity", 1e-12)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 17)), int(rng.integers(1, 9))
        cfg = AdamraConfig(d=d, heads=1, subheads=1, rates=(1,))
        p = AdamraParams.init(cfg, rng)
        p.w_q[0][0], p.w_k[0][0], p.w_v[0][0] = np.eye(d), np.eye(d), np.eye(d)
        p.w_o = np.eye(d)
        x = rng.standard_normal((n, d))
        y, _ = adamra_forward(x, p, cfg)
        q, k, v = x @ p.qkv.w_q, x @ p.qkv.w_k, x @ p.qkv.w_v
        chk.record(seed, _rel(y, _kernel(q, k, v, "relu", cfg.eps, fault)))
    return chk.result()


def check_routing(seeds, base_seed=0, fault=None):
    chk = _Check("routing invariants", 1e-12)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, d, H = int(rng.integers(1, 33)), int(rng.integers(1, 9)), int(rng.integers(1, 6))
        q = rng.standard_normal((n, d))
        w = rng.standard_normal((d, H))
        r = route(q, w)
        counts = np.bincount(r.head_of, minlength=H)
        if counts.sum() != n or sum(len(g) for g in r.groups(H)) != n:
            chk.record(seed, np.inf, "partition")
            continue
        err = float(np.max(np.abs(r.probs.sum(axis=1) - 1.0)))
        if (r.probs < 0).any() or (r.probs > 1).any():
            err = np.inf
        # argmax of logits shifted by a per-row constant is unchanged
        shift = rng.standard_normal((n, 1)) * 10
        shifted = np.argmax(softmax_rows(q @ w + shift), axis=1)
        if not np.array_equal(shifted, r.head_of):
            chk.record(seed, np.inf, "shift invariance")
            continue
        # exact ties resolve to the lowest head index
        tied = route(q, np.zeros((d, H)))
        if not (tied.head_of == 0).all():
            chk.record(seed, np.inf, "tie-break")
            continue
        if not np.allclose(r.gate, r.probs[np.arange(n), r.head_of], rtol=0, atol=0):
            err = np.inf
        chk.record(seed, err)
    return chk.result()


def check_segment_mean(seeds, base_seed=0, fault=None):
    chk = _Check("segment mean", 1e-12)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 33)), int(rng.integers(1, 6))
        x = rng.standard_normal((n, d))
        err = 0.0 if np.array_equal(segment_mean(x, n), x) else np.inf
        m = int(rng.integers(1, n + 1))
        err = max(err, _rel(segment_mean(x, m), oracles.segment_means(x, m)))
        divisors = [L for L in range(1, n + 1) if n % L == 0]
        L = int(rng.choice(divisors))
        err = max(err, _rel(segment_mean(x, L).mean(axis=0), x.mean(axis=0)))
        chk.record(seed, err)
    return chk.result()


def check_softmax(seeds, base_seed=0, fault=None):
    chk = _Check("softmax attention", 1e-10)
    for i in range(seeds):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        n, m, f = rng.integers(1, 17), rng.integers(1, 17), rng.integers(1, 9)
        q, k, v = rng.standard_normal((n, f)), rng.standard_normal((m, f)), rng.standard_normal((m, 3))
        scale = 1.0 / np.sqrt(f)
        got = softmax_attention(q, k, v)
        want = oracles.generalized_attention(q, k, v, oracles.softmax_sim(scale))
        err = _rel(got, want)
        # shifting every key by a vector c shifts row i's scores by q_i . c
        c = rng.standard_normal(f)
        err = max(err, _rel(softmax_attention(q, k + c, v), got))
        chk.record(seed, err)
    return chk.result()


PROPERTIES = (
    check_linearization,
    check_zero_feature,
    check_convex_hull,
    check_oracle_equivalence,
    check_collapse,
    check_routing,
    check_segment_mean,
    check_softmax,
)


def run_suite(seeds=100, base_seed=0, fault=None):
    if fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS[1:]}")
    return [prop(seeds, base_seed, fault) for prop in PROPERTIES]
