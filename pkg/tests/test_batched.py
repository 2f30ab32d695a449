from fractions import Fraction

import numpy as np
import pytest

from adamra import batched
from adamra.oracles import adamra_layer
from adamra.layer import AdamraConfig, AdamraParams, adamra_backward, adamra_forward

CFG = AdamraConfig(d=8, heads=3, subheads=2, rates=(Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)))


def test_averaging_matrix_rows():
    a = batched.averaging_matrix(7, 3)
    np.testing.assert_allclose(a.sum(axis=1), 1.0)
    assert (a > 0).sum() == 7


@pytest.mark.parametrize("phi", ["relu", "elu1", "softmax"])
@pytest.mark.parametrize("routing", ["learned", "random"])
def test_batched_equals_per_sequence(rng, phi, routing):
    cfg = CFG.replace(phi=phi, routing=routing)
    p = AdamraParams.init(cfg, rng)
    x = rng.standard_normal((3, 16, 8))
    g = rng.standard_normal((3, 16, 8))
    y, cache = batched.forward(x, p, cfg, seed=7)
    grads, gx = batched.backward(cache, g)

    head_of = cache[8]
    total = AdamraParams.zeros(cfg)
    for b in range(3):
        yb, t = adamra_forward(x[b], p, cfg)
        if routing == "random":  # replay the batch's draw through the reference layer
            np.testing.assert_allclose(y[b], adamra_layer(x[b], p, cfg, head_of=head_of[b]), atol=1e-12)
            continue
        np.testing.assert_allclose(y[b], yb, rtol=1e-12, atol=1e-13)
        gb, gxb = adamra_backward(t, g[b])
        np.testing.assert_allclose(gx[b], gxb, rtol=1e-10, atol=1e-12)
        for (_, acc), (_, blk) in zip(total.blocks(), gb.blocks()):
            acc += blk
    if routing == "learned":
        for (name, a), (_, b) in zip(grads.blocks(), total.blocks()):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12, err_msg=name)


def test_utilization_sums_to_one(rng):
    p = AdamraParams.init(CFG, rng)
    _, cache = batched.forward(rng.standard_normal((2, 16, 8)), p, CFG)
    u = batched.utilization(cache, CFG.heads)
    assert u.shape == (3,) and abs(u.sum() - 1) < 1e-12
