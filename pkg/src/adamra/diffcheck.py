"""Finite-difference oracle for the hand-written backward passes.

Parameters are flattened into a :class:`ParamVector` in declaration order,
perturbed one coordinate at a time with central differences, and compared to
the analytic gradient by relative error, overall and per parameter block.
"""

from dataclasses import dataclass
import re

import numpy as np

from .attention import (
    MultiHeadParams,
    QkvParams,
    multi_head_attention_bwd,
    multi_head_attention_fwd,
)
from .layer import AdamraParams, adamra_backward, adamra_forward, router_margin


@dataclass
class ParamVector:
    values: np.ndarray
    layout: list  # (name, rows, cols)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        expected = sum(r * c for _, r, c in self.layout)
        if self.values.size != expected:
            raise ValueError(f"{self.values.size} values for a layout of {expected}")

    def with_values(self, values):
        return ParamVector(np.array(values, dtype=np.float64), list(self.layout))

    def blocks(self):
        """``(name, flat view)`` per layout entry."""
        offset = 0
        for name, r, c in self.layout:
            yield name, self.values[offset:offset + r * c]
            offset += r * c


def flatten(p):
    layout, parts = [], []
    for name, block in p.blocks():
        layout.append((name, *block.shape))
        parts.append(np.ravel(block))
    values = np.concatenate(parts) if parts else np.zeros(0)
    return ParamVector(values, layout)


_INDEXED = re.compile(r"^(mh\.)?(w_q|w_k|w_v)((?:\[\d+\])+)$")


def unflatten(vec):
    """Rebuild :class:`AdamraParams` (or :class:`MultiHeadParams`) from a vector."""
    blocks = {
        name: flat.reshape(r, c).copy()
        for (name, flat), (_, r, c) in zip(vec.blocks(), vec.layout)
    }
    if not blocks:
        raise ValueError("cannot rebuild parameters from an empty layout")
    if "mh.w_o" in blocks:
        heads = {"w_q": [], "w_k": [], "w_v": []}
        for name, block in blocks.items():
            m = _INDEXED.match(name)
            if m:
                heads[m.group(2)].append(block)
        return MultiHeadParams(heads["w_q"], heads["w_k"], heads["w_v"], blocks["mh.w_o"])
    try:
        qkv = QkvParams(blocks.pop("qkv.w_q"), blocks.pop("qkv.w_k"), blocks.pop("qkv.w_v"))
        w_router = blocks.pop("w_router")
        w_o = blocks.pop("w_o")
    except KeyError as exc:
        raise ValueError(f"layout is missing block {exc}") from None
    sub = {"w_q": {}, "w_k": {}, "w_v": {}}
    for name, block in blocks.items():
        m = _INDEXED.match(name)
        if not m or m.group(1):
            raise ValueError(f"unexpected block {name!r} in layout")
        h, s = map(int, re.findall(r"\d+", m.group(3)))
        sub[m.group(2)][h, s] = block
    H = 1 + max(h for h, _ in sub["w_q"])
    S = 1 + max(s for _, s in sub["w_q"])
    nested = {
        key: [[table[h, s] for s in range(S)] for h in range(H)] for key, table in sub.items()
    }
    return AdamraParams(qkv, w_router, nested["w_q"], nested["w_k"], nested["w_v"], w_o)


def finite_diff_grad(loss, theta, h=1e-5):
    """Central differences of ``loss(ParamVector) -> float`` at ``theta``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    base = theta.values
    grad = np.empty_like(base)
    work = base.copy()
    for i in range(base.size):
        work[i] = base[i] + h
        f_plus = loss(theta.with_values(work))
        work[i] = base[i] - h
        f_minus = loss(theta.with_values(work))
        work[i] = base[i]
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError(f"non-finite loss when perturbing coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2 * h)
    return theta.with_values(grad)


def grad_rel_error(a, b):
    if [tuple(x) for x in a.layout] != [tuple(x) for x in b.layout]:
        raise ValueError("gradient layouts differ")
    return _rel(a.values, b.values)


def _rel(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def block_errors(analytic, numeric):
    """Per-block ``(name, rel_error, |analytic|, |numeric|)`` rows."""
    rows = []
    for (name, a), (_, b) in zip(analytic.blocks(), numeric.blocks()):
        rows.append((name, _rel(a, b), float(np.linalg.norm(a)), float(np.linalg.norm(b))))
    return rows


@dataclass
class GradCheckResult:
    label: str
    rel_error: float
    x_rel_error: float
    blocks: list

    @property
    def max_error(self):
        return max(self.rel_error, self.x_rel_error)


def _sum_sq_loss(target):
    return lambda y: 0.5 * float(np.sum((y - target) ** 2))


def check_adamra(cfg, n, seed, h=1e-5, min_margin=1e-3, max_tries=100):
    """Gradient-check one layer instance; instances whose router logit margin
    falls below ``min_margin`` are resampled."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        p = AdamraParams.init(cfg, rng)
        x = rng.standard_normal((n, cfg.d))
        target = rng.standard_normal((n, cfg.d))
        if cfg.heads == 1 or cfg.routing == "random":
            break
        if router_margin(x @ p.qkv.w_q, p.w_router) >= min_margin:
            break
    else:
        raise RuntimeError(f"no instance with router margin >= {min_margin} in {max_tries} tries")

    loss_of_y = _sum_sq_loss(target)
    y, trace = adamra_forward(x, p, cfg, seed)
    grads, g_x = adamra_backward(trace, y - target)
    analytic = flatten(grads)
    theta = flatten(p)
    numeric = finite_diff_grad(lambda v: loss_of_y(adamra_forward(x, unflatten(v), cfg, seed)[0]), theta, h)

    x_vec = ParamVector(x, [("x", *x.shape)])
    numeric_x = finite_diff_grad(
        lambda v: loss_of_y(adamra_forward(v.values.reshape(x.shape), p, cfg, seed)[0]), x_vec, h
    )
    return GradCheckResult(
        f"adamra n={n} seed={seed}",
        grad_rel_error(analytic, numeric),
        _rel(g_x.ravel(), numeric_x.values),
        block_errors(analytic, numeric),
    )


def check_multi_head(d, heads, n, seed, mode="softmax", phi="relu", h=1e-5):
    rng = np.random.default_rng(seed)
    p = MultiHeadParams.init(d, heads, rng)
    x = rng.standard_normal((n, d))
    target = rng.standard_normal((n, d))
    loss_of_y = _sum_sq_loss(target)

    y, cache = multi_head_attention_fwd(x, p, mode, phi)
    grads, g_x = multi_head_attention_bwd(cache, y - target)
    analytic = flatten(grads)
    numeric = finite_diff_grad(
        lambda v: loss_of_y(multi_head_attention_fwd(x, unflatten(v), mode, phi)[0]), flatten(p), h
    )
    x_vec = ParamVector(x, [("x", *x.shape)])
    numeric_x = finite_diff_grad(
        lambda v: loss_of_y(multi_head_attention_fwd(v.values.reshape(x.shape), p, mode, phi)[0]),
        x_vec, h,
    )
    return GradCheckResult(
        f"{mode} multi-head n={n} seed={seed}",
        grad_rel_error(analytic, numeric),
        _rel(g_x.ravel(), numeric_x.values),
        block_errors(analytic, numeric),
    )


def format_table(result):
    lines = [f"{'block':<14} {'rel_error':>11} {'|analytic|':>11} {'|numeric|':>11}"]
    for name, err, na, nn in result.blocks:
        lines.append(f"{name:<14} {err:11.3e} {na:11.3e} {nn:11.3e}")
    lines.append(f"{'x':<14} {result.x_rel_error:11.3e}")
    return "\n".join(lines)
