from fractions import Fraction

import numpy as np
import pytest

from adamra import bench
from adamra.cost import adamra_cost, kernel_mha_cost, softmax_mha_cost
from adamra.layer import AdamraConfig

TABLE2 = AdamraConfig(d=64, heads=4, subheads=2, rates=tuple(Fraction(1, k) for k in (4, 8, 16, 32)))


def test_single_full_rate_head_costs_at_least_kernel_attention():
    cfg = AdamraConfig(d=64, heads=1, subheads=1, rates=(1,))
    for n in (16, 256):
        assert adamra_cost(cfg, n).peak_floats >= kernel_mha_cost(64, 1, n).peak_floats


def test_layer_cost_is_linear_in_n():
    a, b, c = (adamra_cost(TABLE2, n) for n in (1024, 2048, 4096))
    linear_flops = ("projection", "compression", "routing", "query", "output")
    linear_floats = ("qkv", "memory", "routing", "query_trace", "scatter", "output")
    for key in linear_flops:
        assert b.flops[key] / a.flops[key] == 2.0, key
    for key in linear_floats:
        assert b.floats[key] / a.floats[key] == 2.0, key
    # the per-subhead summaries add a constant, so every item is affine in n
    for key in a.floats:
        assert c.floats[key] - b.floats[key] == 2 * (b.floats[key] - a.floats[key]), key


def test_baseline_scores_quadruple():
    a, b = softmax_mha_cost(64, 4, 1024), softmax_mha_cost(64, 4, 2048)
    assert b.floats["scores"] / a.floats["scores"] == 4.0
    assert b.flops["scores"] / a.flops["scores"] == 4.0


def test_table_two_landmark_total():
    assert sum(TABLE2.landmarks(4096)) == 1920


def test_no_quadratic_term_in_linear_models():
    for cost_of in (lambda n: adamra_cost(TABLE2, n), lambda n: kernel_mha_cost(64, 4, n)):
        ratios = [cost_of(2 * n).peak_floats / cost_of(n).peak_floats for n in (512, 1024, 2048)]
        assert all(r <= 2.0 + 1e-12 for r in ratios)


def test_memory_ratio_strictly_increasing():
    ratios = bench.memory_ratios([512, 1024, 2048, 4096, 8192])
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_measured_layer_allocation_within_factor_two():
    _, cost = bench.make_model("adamra", 512)
    measured = bench.measure_peak_bytes("adamra", 512) / 8
    assert 0.5 <= measured / cost.peak_floats <= 2.0


@pytest.mark.parametrize("model", ["softmax", "kernel"])
def test_baseline_timing_path_stays_under_model(model):
    # timing runs drop the backward caches, so only the upper bound applies
    _, cost = bench.make_model(model, 512)
    assert bench.measure_peak_bytes(model, 512) / 8 <= 2.0 * cost.peak_floats


def test_rejects_empty_sequence():
    with pytest.raises(ValueError):
        adamra_cost(TABLE2, 0)
