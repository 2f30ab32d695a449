"""Forward-pass timing, log-log scaling fits and SMAT scoring."""

from dataclasses import dataclass
from fractions import Fraction
import csv
import gc
import io
import math
import time
import tracemalloc

import numpy as np

from . import _backend
from .attention import MultiHeadParams, multi_head_attention_fwd
from .cost import adamra_cost, kernel_mha_cost, softmax_mha_cost
from .layer import AdamraConfig, AdamraParams, adamra_forward

MODELS = ("softmax", "kernel", "adamra")
TABLE2_RATES = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 32))

TIMING_FIELDS = ["model", "n", "trials", "median_s", "min_s", "analytic_floats"]
SMAT_FIELDS = ["model", "speed", "mem_mb", "acc", "s_norm", "m_norm", "acc_norm", "smat"]


@dataclass(frozen=True)
class TimingStats:
    model: str
    n: int
    trials: int
    median_s: float
    min_s: float
    analytic_floats: int
    alloc_bytes: int = None

    def __post_init__(self):
        if self.trials < 5:
            raise ValueError(f"need at least 5 trials, got {self.trials}")
        if not self.median_s >= self.min_s > 0:
            raise ValueError("timings must satisfy median >= min > 0")


@dataclass(frozen=True)
class SmatRecord:
    model: str
    speed: float
    mem_mb: float
    acc: float

    def __post_init__(self):
        if not (self.speed > 0 and self.mem_mb > 0 and self.acc > 0):
            raise ValueError(f"{self.model}: speed, memory and accuracy must be positive")


def _fmt(x):
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------


def bench_config(d=64, rates=TABLE2_RATES, subheads=2):
    return AdamraConfig(d=d, heads=len(rates), subheads=subheads, rates=rates)


def make_model(model, n, seed=0, d=64, heads=4, rates=TABLE2_RATES):
    """Return ``(forward, analytic_cost)`` for a seeded instance of ``model``.

    ``forward()`` runs one single-sequence forward pass on fixed input.
    ``heads`` applies to the baselines; the layer has one head per rate.
    """
    rng = np.random.default_rng(seed)
    if model == "adamra":
        cfg = bench_config(d, rates)
        p = AdamraParams.init(cfg, rng)
        x = rng.standard_normal((n, d))
        return (lambda: adamra_forward(x, p, cfg)[0]), adamra_cost(cfg, n)
    if model in ("softmax", "kernel"):
        p = MultiHeadParams.init(d, heads, rng)
        x = rng.standard_normal((n, d))
        cost = (softmax_mha_cost if model == "softmax" else kernel_mha_cost)(d, heads, n)
        return (lambda: multi_head_attention_fwd(x, p, model, keep_cache=False)[0]), cost
    raise ValueError(f"unknown model tag {model!r}; expected one of {MODELS}")


def time_forward(model, n, trials=5, seed=0, warmup=3, d=64, heads=4, rates=TABLE2_RATES):
    """Median and minimum wall time of ``trials`` forward passes, batch 1."""
    if n < 64:
        raise ValueError(f"benchmark lengths start at 64, got {n}")
    forward, cost = make_model(model, n, seed, d, heads, rates)
    for _ in range(warmup):
        forward()
    times = []
    for _ in range(trials):
        gc.collect()
        t0 = time.perf_counter()
        forward()
        times.append(time.perf_counter() - t0)
    return TimingStats(model, n, trials, float(np.median(times)), float(min(times)), cost.peak_floats)


def measure_peak_bytes(model, n, seed=0, d=64, heads=4, rates=TABLE2_RATES):
    """Peak bytes allocated during one forward pass, via tracemalloc."""
    forward, _ = make_model(model, n, seed, d, heads, rates)
    gc.collect()
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        forward()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak - base


def run_grid(models, ns, trials=5, seed=0, warmup=3, d=64, heads=4, rates=TABLE2_RATES, log=None):
    stats = []
    for model in models:
        for n in ns:
            s = time_forward(model, n, trials, seed, warmup, d, heads, rates)
            if log:
                log(f"{model:>8} n={n:<6} median {s.median_s * 1e3:10.2f} ms")
            stats.append(s)
    return stats


def compare_backends(ns, trials=5, seed=0, warmup=3, backends=None, log=None):
    """Time the multi-resolution layer under each available kernel backend."""
    rows = []
    for name in backends or _backend.available_backends():
        with _backend.use_backend(name):
            for n in ns:
                s = time_forward("adamra", n, trials, seed, warmup)
                rows.append((name, s))
                if log:
                    log(f"{name:>7} n={n:<6} median {s.median_s * 1e3:10.2f} ms")
    return rows


def timings_csv(stats):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_FIELDS)
    for s in stats:
        w.writerow([s.model, s.n, s.trials, _fmt(s.median_s), _fmt(s.min_s), s.analytic_floats])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


def scaling_fit(series, return_residuals=False):
    """Least-squares slope of log(time) against log(n)."""
    pts = [(float(n), float(t)) for n, t in series]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points, got {len(pts)}")
    ns = np.array([n for n, _ in pts])
    ts = np.array([t for _, t in pts])
    if (ns <= 0).any() or (ts <= 0).any():
        raise ValueError("lengths and times must be positive")
    if ns.max() / ns.min() < 8:
        raise ValueError("lengths must span at least a factor of 8")
    lx, ly = np.log(ns), np.log(ts)
    a = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, ly, rcond=None)
    if return_residuals:
        return float(slope), ly - (slope * lx + intercept)
    return float(slope)


def memory_ratios(ns, d=64, heads=4, rates=TABLE2_RATES):
    """Analytic peak floats of the softmax baseline over the layer, per n."""
    cfg = bench_config(d, rates)
    return [softmax_mha_cost(d, heads, n).peak_floats / adamra_cost(cfg, n).peak_floats for n in ns]


# ---------------------------------------------------------------------------
# SMAT
# ---------------------------------------------------------------------------


def minmax_norm(xs):
    xs = [float(x) for x in xs]
    if len(xs) < 2:
        raise ValueError("min-max scaling needs at least two values")
    lo, hi = min(xs), max(xs)
    if not hi > lo:
        raise ValueError("min-max scaling of a constant column is undefined")
    return [(x - lo) / (hi - lo) for x in xs]


def smat(records):
    """``(model, s_norm, m_norm, acc_norm, smat)`` per record, in input order."""
    records = list(records)
    if len(records) < 2:
        raise ValueError("SMAT needs at least two records")
    cols = {}
    for name, attr in (("speed", "speed"), ("mem_mb", "mem_mb"), ("acc", "acc")):
        try:
            cols[name] = minmax_norm([getattr(r, attr) for r in records])
        except ValueError:
            raise ValueError(f"column {name!r} is constant; cannot normalize") from None
    out = []
    for i, r in enumerate(records):
        s, m, a = cols["speed"][i], cols["mem_mb"][i], cols["acc"][i]
        out.append((r.model, s, m, a, s + (1.0 - m) + a))
    return out


def read_smat_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("SMAT input has no rows")
    fields = rows[0].keys()
    mem_key = "mem_mb" if "mem_mb" in fields else "mem"
    missing = {"model", "speed", "acc"} - set(fields)
    if missing or mem_key not in fields:
        raise ValueError("SMAT input needs model, speed, mem (or mem_mb) and acc columns")
    return [
        SmatRecord(r["model"].strip(), float(r["speed"]), float(r[mem_key]), float(r["acc"]))
        for r in rows
    ]


def smat_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SMAT_FIELDS)
    for r, (_, s, m, a, score) in zip(records, smat(records)):
        w.writerow([r.model, _fmt(r.speed), _fmt(r.mem_mb), _fmt(r.acc),
                    _fmt(s), _fmt(m), _fmt(a), _fmt(score)])
    return buf.getvalue()


def log_slopes(stats):
    """Per-model log-log slope over the measured lengths."""
    by_model = {}
    for s in stats:
        by_model.setdefault(s.model, []).append((s.n, s.median_s))
    out = {}
    for model, series in by_model.items():
        try:
            out[model] = scaling_fit(series)
        except ValueError:
            out[model] = math.nan
    return out
