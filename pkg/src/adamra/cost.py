"""Analytic multiply-add and peak-float counts for one forward pass.

Counts follow the implementations in this package: the multi-resolution
layer gathers each head's routed queries, so the query side is paid once per
token, while the softmax baseline materializes an n x n score matrix per
head. Peak floats count every array alive at the end of a forward pass that
retains its backward trace, plus the output.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class CostEstimate:
    model: str
    n: int
    flops: dict
    floats: dict

    @property
    def total_flops(self):
        return sum(self.flops.values())

    @property
    def peak_floats(self):
        return sum(self.floats.values())


def adamra_cost(cfg, n):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d, H, S, dh = cfg.d, cfg.heads, cfg.subheads, cfg.d_head
    ms = cfg.landmarks(n)
    total_m = sum(ms)
    flops = {
        "projection": 3 * n * d * d,
        "compression": 2 * H * n * d,
        "routing": n * d * H + 2 * n * H,
        # K~W^K, V~W^V and the phi(K)^T V summary, per subhead
        "memory": sum(S * (2 * m * d * dh + m * dh * dh) for m in ms),
        # per token: its head's S query projections, numerator and denominator
        "query": n * S * (d * dh + dh * dh + dh),
        "output": n * d + n * S * dh * d,
    }
    floats = {
        "qkv": 3 * n * d,
        "memory": 2 * d * total_m,
        "routing": n * H + 2 * n,
        # projected keys/values, features, summaries: per (head, subhead)
        "memory_trace": sum(S * (3 * m * dh + dh * dh + dh) for m in ms),
        # projected queries, features, denominators and outputs, per token
        "query_trace": n * S * (3 * dh + 1),
        "scatter": 2 * n * S * dh,
        "output": n * d,
    }
    return CostEstimate("adamra", n, flops, floats)


def softmax_mha_cost(d, heads, n):
    dh = d // heads
    flops = {
        "projection": 3 * n * d * d,
        "scores": heads * n * n * dh,
        "softmax": 2 * heads * n * n,
        "weighted_values": heads * n * n * dh,
        "output": n * d * d,
    }
    floats = {
        "qkv": 3 * n * d,
        "scores": heads * n * n,
        "heads": n * d,
        "output": n * d,
    }
    return CostEstimate("softmax", n, flops, floats)


def kernel_mha_cost(d, heads, n):
    dh = d // heads
    flops = {
        "projection": 3 * n * d * d,
        "summary": heads * n * (dh * dh + dh),
        "query": heads * n * (dh * dh + dh),
        "output": n * d * d,
    }
    floats = {
        "qkv": 3 * n * d,
        "features": 2 * n * d,
        "summary": heads * (dh * dh + dh),
        "heads": n * d + heads * n,
        "output": n * d,
    }
    return CostEstimate("kernel", n, flops, floats)
