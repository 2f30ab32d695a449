"""A small pre-norm Transformer classifier built on the multi-resolution layer.

token + learned positional embedding -> L x [x + attn(LN(x)); x + FFN(LN(x))]
-> LN -> mean over positions -> ReLU MLP -> logits. Forward and backward
are written out by hand; parameters live in a flat name -> array dict so the
optimizer can treat them uniformly.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import batched
from ..layer import AdamraConfig, AdamraParams
from ..numkernel import init_uniform

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_classes: int
    length: int
    layers: int = 2
    d: int = 64
    ffn: int = 128
    classifier: int = 64
    positional: bool = True
    attn: AdamraConfig = field(default_factory=AdamraConfig)

    def __post_init__(self):
        if self.attn.d != self.d:
            raise ValueError(f"attention width {self.attn.d} != model width {self.d}")
        if self.layers < 1:
            raise ValueError("need at least one layer")


def init_params(mc, rng):
    d = mc.d
    p = {"tok_emb": rng.standard_normal((mc.vocab_size, d)) * 0.5}
    if mc.positional:
        p["pos_emb"] = rng.standard_normal((mc.length, d)) * 0.5
    for l in range(mc.layers):
        p[f"l{l}.ln1.g"] = np.ones(d)
        p[f"l{l}.ln1.b"] = np.zeros(d)
        p[f"l{l}.attn"] = AdamraParams.init(mc.attn, rng)
        p[f"l{l}.ln2.g"] = np.ones(d)
        p[f"l{l}.ln2.b"] = np.zeros(d)
        p[f"l{l}.ffn.w1"] = init_uniform(rng, d, mc.ffn)
        p[f"l{l}.ffn.b1"] = np.zeros(mc.ffn)
        p[f"l{l}.ffn.w2"] = init_uniform(rng, mc.ffn, d)
        p[f"l{l}.ffn.b2"] = np.zeros(d)
    p["lnf.g"] = np.ones(d)
    p["lnf.b"] = np.zeros(d)
    p["cls.w1"] = init_uniform(rng, d, mc.classifier)
    p["cls.b1"] = np.zeros(mc.classifier)
    p["cls.w2"] = init_uniform(rng, mc.classifier, mc.num_classes)
    p["cls.b2"] = np.zeros(mc.num_classes)
    return p


def arrays(params):
    """Every trainable array, in a stable order (views, for in-place updates)."""
    out = []
    for name, value in params.items():
        if isinstance(value, AdamraParams):
            out.extend(b for _, b in value.blocks())
        else:
            out.append(value)
    return out


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _ln_backward(c, g_out):
    xhat, rstd, g = c
    lead = tuple(range(g_out.ndim - 1))
    g_g = (g_out * xhat).sum(axis=lead)
    g_b = g_out.sum(axis=lead)
    gx_hat = g_out * g
    g_x = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                  - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
    return g_x, g_g, g_b


def forward(params, mc, tokens, seed=0):
    """Logits for a (B, n) batch of token ids, plus the backward cache."""
    x = params["tok_emb"][tokens]
    if mc.positional:
        x = x + params["pos_emb"][None, : tokens.shape[1]]
    caches = []
    for l in range(mc.layers):
        h1, c_ln1 = _ln_forward(x, params[f"l{l}.ln1.g"], params[f"l{l}.ln1.b"])
        a, c_attn = batched.forward(h1, params[f"l{l}.attn"], mc.attn, seed + l)
        x = x + a
        h2, c_ln2 = _ln_forward(x, params[f"l{l}.ln2.g"], params[f"l{l}.ln2.b"])
        pre = h2 @ params[f"l{l}.ffn.w1"] + params[f"l{l}.ffn.b1"]
        act = np.maximum(pre, 0.0)
        x = x + act @ params[f"l{l}.ffn.w2"] + params[f"l{l}.ffn.b2"]
        caches.append((c_ln1, c_attn, c_ln2, h2, pre, act))
    hf, c_lnf = _ln_forward(x, params["lnf.g"], params["lnf.b"])
    pooled = hf.mean(axis=1)
    pre_c = pooled @ params["cls.w1"] + params["cls.b1"]
    act_c = np.maximum(pre_c, 0.0)
    logits = act_c @ params["cls.w2"] + params["cls.b2"]
    return logits, (tokens, caches, c_lnf, hf.shape, pooled, pre_c, act_c)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    B = len(labels)
    loss = -logp[np.arange(B), labels].mean()
    g = np.exp(logp)
    g[np.arange(B), labels] -= 1.0
    return float(loss), g / B


def backward(params, mc, cache, g_logits):
    """Gradients with the same structure as ``params``."""
    tokens, caches, c_lnf, shape, pooled, pre_c, act_c = cache
    g = {}
    g["cls.w2"] = act_c.T @ g_logits
    g["cls.b2"] = g_logits.sum(axis=0)
    g_act_c = g_logits @ params["cls.w2"].T
    g_pre_c = g_act_c * (pre_c > 0)
    g["cls.w1"] = pooled.T @ g_pre_c
    g["cls.b1"] = g_pre_c.sum(axis=0)
    g_pooled = g_pre_c @ params["cls.w1"].T
    g_hf = np.broadcast_to(g_pooled[:, None, :] / shape[1], shape)
    g_x, g["lnf.g"], g["lnf.b"] = _ln_backward(c_lnf, g_hf)

    for l in reversed(range(mc.layers)):
        c_ln1, c_attn, c_ln2, h2, pre, act = caches[l]
        g[f"l{l}.ffn.w2"] = act.reshape(-1, act.shape[-1]).T @ g_x.reshape(-1, g_x.shape[-1])
        g[f"l{l}.ffn.b2"] = g_x.sum(axis=(0, 1))
        g_pre = (g_x @ params[f"l{l}.ffn.w2"].T) * (pre > 0)
        g[f"l{l}.ffn.w1"] = h2.reshape(-1, h2.shape[-1]).T @ g_pre.reshape(-1, g_pre.shape[-1])
        g[f"l{l}.ffn.b1"] = g_pre.sum(axis=(0, 1))
        g_h2 = g_pre @ params[f"l{l}.ffn.w1"].T
        g_res, g[f"l{l}.ln2.g"], g[f"l{l}.ln2.b"] = _ln_backward(c_ln2, g_h2)
        g_x = g_x + g_res
        g[f"l{l}.attn"], g_h1 = batched.backward(c_attn, g_x)
        g_res, g[f"l{l}.ln1.g"], g[f"l{l}.ln1.b"] = _ln_backward(c_ln1, g_h1)
        g_x = g_x + g_res

    if mc.positional:
        g["pos_emb"] = np.zeros_like(params["pos_emb"])
        g["pos_emb"][: tokens.shape[1]] = g_x.sum(axis=0)
    g_tok = np.zeros_like(params["tok_emb"])
    np.add.at(g_tok, tokens.ravel(), g_x.reshape(-1, g_x.shape[-1]))
    g["tok_emb"] = g_tok
    return {name: g[name] for name in params}


def router_utilization(params, mc, tokens, seed=0):
    """Fraction of tokens sent to each head, per layer, on ``tokens``."""
    _, cache = forward(params, mc, tokens, seed)
    return [batched.utilization(c[1], mc.attn.heads) for c in cache[1]]
