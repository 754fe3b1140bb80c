"""Real-valued reference model.

A float64 replica of the quantized network used as the numerical oracle:
same architecture, same parameter layout, exact real arithmetic.  The
backward pass is the analytic chain rule; finite differences over the
adapter entries validate it independently.

Weights are plain dicts of numpy arrays:
  emb (v,d); w_head (d,v); lnf_g, lnf_b (d,)
  layers: list of dicts with wq, wk, wv, wp (d,d); wgate, wup (h,d);
          wdown (d,h); ln1_g, ln1_b, ln2_g, ln2_b (d,)
Adapters: list of dicts with a (r,d), b (d,r).
"""

import math

import numpy as np


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_deriv(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def softmax_rows(z):
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def layernorm(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    cen = x - mu
    var = (cen * cen).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = cen * istd
    return xhat * g + b, {"xhat": xhat, "istd": istd, "g": g}


def layernorm_backward(dy, cache):
    g_ = dy * cache["g"]
    m1 = g_.mean(axis=-1, keepdims=True)
    m2 = (g_ * cache["xhat"]).mean(axis=-1, keepdims=True)
    return (g_ - m1 - cache["xhat"] * m2) * cache["istd"]


def reference_forward(tokens, weights, adapters, config):
    """Forward pass; returns (yhat, cache) with every backward operand."""
    d = config.dim
    x = weights["emb"][np.asarray(tokens, dtype=np.int64)]
    inv_sqrt_d = 1.0 / math.sqrt(d)
    layers = []
    for lw, ad in zip(weights["layers"], adapters):
        c = {"x_in": x}
        xp, c["ln1"] = layernorm(x, lw["ln1_g"], lw["ln1_b"], config.eps)
        c["xp"] = xp
        wv_eff = lw["wv"] + ad["b"] @ ad["a"]
        c["q"] = xp @ lw["wq"]
        c["k"] = xp @ lw["wk"]
        c["v"] = xp @ wv_eff
        z = (c["q"] @ c["k"].T) * inv_sqrt_d
        c["p"] = softmax_rows(z)
        s = c["p"] @ c["v"]
        o = s @ lw["wp"]
        r = x + o
        c["r"] = r
        rp, c["ln2"] = layernorm(r, lw["ln2_g"], lw["ln2_b"], config.eps)
        c["rp"] = rp
        c["gpre"] = rp @ lw["wgate"].T
        c["gact"] = silu(c["gpre"])
        c["u"] = rp @ lw["wup"].T
        e = c["gact"] * c["u"]
        mlp = e @ lw["wdown"].T
        x = r + mlp
        layers.append(c)
    xl, f_ln = layernorm(x, weights["lnf_g"], weights["lnf_b"], config.eps)
    logits = xl @ weights["w_head"]
    yhat = softmax_rows(logits)
    cache = {"layers": layers, "f_ln": f_ln, "xl": xl, "yhat": yhat}
    return yhat, cache


def cross_entropy(yhat, y_onehot):
    return float(-(y_onehot * np.log(np.clip(yhat, 1e-300, None))).sum())


def reference_backward(weights, adapters, config, cache, y_onehot):
    """Analytic gradients for the adapters (plus the input gradient)."""
    d = config.dim
    inv_sqrt_d = 1.0 / math.sqrt(d)
    dlogits = cache["yhat"] - y_onehot
    dxl = dlogits @ weights["w_head"].T
    dx = layernorm_backward(dxl, cache["f_ln"])
    grads = [None] * len(adapters)
    for idx in reversed(range(len(adapters))):
        lw, ad, c = weights["layers"][idx], adapters[idx], cache["layers"][idx]
        de = dx @ lw["wdown"]
        dgact = de * c["u"]
        du = de * c["gact"]
        dgpre = dgact * silu_deriv(c["gpre"])
        drp = dgpre @ lw["wgate"] + du @ lw["wup"]
        dr = dx + layernorm_backward(drp, c["ln2"])
        do = dr
        ds = do @ lw["wp"].T
        dv = c["p"].T @ ds
        dp = ds @ c["v"].T
        dz = c["p"] * (dp - (dp * c["p"]).sum(axis=-1, keepdims=True))
        dsc = dz * inv_sqrt_d
        dq = dsc @ c["k"]
        dk = dsc.T @ c["q"]
        dwv = c["xp"].T @ dv
        grads[idx] = {"da": ad["b"].T @ dwv, "db": dwv @ ad["a"].T}
        wv_eff = lw["wv"] + ad["b"] @ ad["a"]
        dxp = dq @ lw["wq"].T + dk @ lw["wk"].T + dv @ wv_eff.T
        dx = dr + layernorm_backward(dxp, c["ln1"])
    return grads, dx


def reference_loss(tokens, y_onehot, weights, adapters, config):
    yhat, _ = reference_forward(tokens, weights, adapters, config)
    return cross_entropy(yhat, y_onehot)


def finite_difference_grads(tokens, y_onehot, weights, adapters, config, step=1e-4):
    """Central finite differences of the loss over every adapter entry."""
    grads = []
    for idx, ad in enumerate(adapters):
        g = {}
        for name in ("a", "b"):
            base = ad[name]
            out = np.zeros_like(base)
            for pos in np.ndindex(*base.shape):
                saved = base[pos]
                base[pos] = saved + step
                hi = reference_loss(tokens, y_onehot, weights, adapters, config)
                base[pos] = saved - step
                lo = reference_loss(tokens, y_onehot, weights, adapters, config)
                base[pos] = saved
                out[pos] = (hi - lo) / (2 * step)
            g["d" + name] = out
        grads.append(g)
    return grads


def reference_update(adapters, grads, eta):
    return [
        {"a": ad["a"] - eta * g["da"], "b": ad["b"] - eta * g["db"]}
        for ad, g in zip(adapters, grads)
    ]
