import numpy as np
import pytest
from hypothesis import given, strategies as st

from adamra import oracles
from adamra.attention import (
    MultiHeadParams,
    QkvParams,
    kernel_attention,
    kernel_attention_bwd,
    kernel_attention_fwd,
    multi_head_attention,
    project_qkv,
    softmax_attention,
)
from adamra.numkernel import ShapeError


def test_identity_projections(rng):
    x = rng.standard_normal((5, 4))
    q, k, v = project_qkv(x, QkvParams.identity(4))
    assert all(np.array_equal(m, x) for m in (q, k, v))


def test_zero_input_projects_to_zero(rng):
    outs = project_qkv(np.zeros((3, 4)), QkvParams.init(4, rng))
    assert all(not m.any() for m in outs)


def test_projection_matches_loop_oracle(rng):
    x = rng.standard_normal((4, 8))
    p = QkvParams.init(8, rng)
    for got, w in zip(project_qkv(x, p), (p.w_q, p.w_k, p.w_v)):
        np.testing.assert_allclose(got, oracles.matmul(x, w), rtol=1e-12, atol=1e-15)


def test_projection_width_mismatch(rng):
    with pytest.raises(ShapeError):
        project_qkv(np.ones((2, 3)), QkvParams.init(4, rng))


def test_softmax_single_key_returns_value(rng):
    q = rng.standard_normal((5, 3))
    v = rng.standard_normal((1, 2))
    out = softmax_attention(q, rng.standard_normal((1, 3)), v)
    np.testing.assert_allclose(out, np.repeat(v, 5, axis=0), rtol=1e-15)


def test_softmax_orthogonal_query_gives_mean(rng):
    q = np.array([[1.0, 0.0]])
    k = np.array([[0.0, 1.0], [0.0, -2.0], [0.0, 5.0]])
    v = rng.standard_normal((3, 4))
    np.testing.assert_allclose(softmax_attention(q, k, v)[0], v.mean(axis=0), rtol=1e-14)


@pytest.mark.parametrize("scale", [None, 1.0, 0.3])
def test_softmax_matches_direct_sum(rng, scale):
    q, k, v = rng.standard_normal((6, 4)), rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    s = 1 / np.sqrt(4) if scale is None else scale
    want = oracles.generalized_attention(q, k, v, oracles.softmax_sim(s))
    np.testing.assert_allclose(softmax_attention(q, k, v, scale), want, rtol=1e-12)


def test_softmax_invariant_to_uniform_score_shift(rng):
    q, k, v = rng.standard_normal((5, 3)), rng.standard_normal((7, 3)), rng.standard_normal((7, 2))
    c = rng.standard_normal(3)
    np.testing.assert_allclose(softmax_attention(q, k + c, v), softmax_attention(q, k, v), rtol=1e-12)


@pytest.mark.parametrize("phi", ["relu", "elu1"])
def test_kernel_matches_quadratic_form(rng, phi):
    for _ in range(10):
        q, k, v = rng.standard_normal((8, 4)), rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
        if phi == "relu":
            q, k = np.abs(q) + 0.1, np.abs(k) + 0.1
        want = oracles.generalized_attention(q, k, v, oracles.kernel_sim(phi), 1e-6)
        np.testing.assert_allclose(kernel_attention(q, k, v, phi), want, rtol=1e-10, atol=1e-12)


def test_kernel_zero_feature_query_gives_zero_row(rng):
    q = -np.abs(rng.standard_normal((3, 4))) - 0.01
    out, cache = kernel_attention_fwd(q, rng.standard_normal((5, 4)), rng.standard_normal((5, 2)))
    assert np.all(out == 0.0)
    den = cache[8]
    np.testing.assert_array_equal(den, np.full(3, 1e-6))


@pytest.mark.parametrize("phi", ["relu", "elu1"])
def test_kernel_single_key_returns_value(rng, phi):
    q = np.abs(rng.standard_normal((4, 3))) + 0.5
    k = np.abs(rng.standard_normal((1, 3))) + 0.5
    v = rng.standard_normal((1, 2))
    np.testing.assert_allclose(kernel_attention(q, k, v, phi), np.repeat(v, 4, axis=0), rtol=1e-5)


def test_kernel_rejects_nonpositive_eps(rng):
    with pytest.raises(ValueError, match="eps"):
        kernel_attention(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2)), eps=0.0)


def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        kernel_attention(np.ones((2, 3)), np.ones((2, 2)), np.ones((2, 2)))
    with pytest.raises(ShapeError):
        softmax_attention(np.ones((2, 2)), np.ones((3, 2)), np.ones((2, 2)))


@given(st.integers(0, 10_000), st.sampled_from(["relu", "elu1"]))
def test_kernel_output_in_convex_hull(seed, phi):
    rng = np.random.default_rng(seed)
    q, k, v = rng.standard_normal((6, 3)), rng.standard_normal((9, 3)), rng.standard_normal((9, 2))
    out = kernel_attention(q, k, v, phi)
    slack = np.abs(v).max() * 1e-5
    assert np.all(out >= np.minimum(v.min(axis=0), 0) - slack)
    assert np.all(out <= np.maximum(v.max(axis=0), 0) + slack)


def test_kernel_backward_matches_differences(rng):
    q, k, v = rng.standard_normal((5, 3)), rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
    g = rng.standard_normal((5, 2))
    out, cache = kernel_attention_fwd(q, k, v, "elu1")
    gq, gk, gv = kernel_attention_bwd(cache, g)
    h = 1e-6
    for arr, grad in ((q, gq), (k, gk), (v, gv)):
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            fp = np.sum(kernel_attention(q, k, v, "elu1") * g)
            arr[idx] = old - h
            fm = np.sum(kernel_attention(q, k, v, "elu1") * g)
            arr[idx] = old
            num[idx] = (fp - fm) / (2 * h)
        np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-8)


def _identity_heads(d):
    return MultiHeadParams([np.eye(d)], [np.eye(d)], [np.eye(d)], np.eye(d))


@pytest.mark.parametrize("mode", ["softmax", "kernel"])
def test_single_identity_head_collapses(rng, mode):
    x = rng.standard_normal((6, 4))
    got = multi_head_attention(x, _identity_heads(4), mode)
    want = softmax_attention(x, x, x) if mode == "softmax" else kernel_attention(x, x, x)
    np.testing.assert_allclose(got, want, rtol=1e-14)


@pytest.mark.parametrize("heads", [2, 4])
@pytest.mark.parametrize("mode", ["softmax", "kernel"])
def test_multi_head_shape(rng, heads, mode):
    p = MultiHeadParams.init(64, heads, rng)
    assert multi_head_attention(rng.standard_normal((10, 64)), p, mode).shape == (10, 64)


@pytest.mark.parametrize("mode", ["softmax", "kernel"])
def test_head_permutation_with_permuted_output_blocks(rng, mode):
    d, H = 8, 4
    p = MultiHeadParams.init(d, H, rng)
    perm = [2, 0, 3, 1]
    dv = d // H
    w_o = np.concatenate([p.w_o[h * dv:(h + 1) * dv] for h in perm])
    q = MultiHeadParams([p.w_q[h] for h in perm], [p.w_k[h] for h in perm], [p.w_v[h] for h in perm], w_o)
    x = rng.standard_normal((7, d))
    np.testing.assert_allclose(multi_head_attention(x, q, mode), multi_head_attention(x, p, mode), rtol=1e-12)


def test_multi_head_rejects_bad_tiling(rng):
    with pytest.raises(ShapeError):
        MultiHeadParams.init(10, 4, rng)
