"""Fixed-point transformer with low-rank adapters, traced step by step.

Every arithmetic step of the forward pass, backward pass, and adapter
update is recorded as a Step that names its operand tensors and the
gadget certifying it.  The same graph code runs in two modes:

  compute mode  — executes the fixed-point arithmetic and stores the
                  QuantizedTensor for every intermediate (the witness);
  symbolic mode — stores shapes only.

Both modes emit identical step lists for a given configuration, which is
how the verifier reconstructs the exact proof schedule without seeing
any witness data.

Scale discipline: activations and weights live at scale gamma; every
product (matmul or element product) of two gamma-scale tensors lives at
gamma^2 and is narrowed by a rescale step dividing by gamma.  Division
by other powers of two (sequence means, the attention 1/sqrt(d) factor,
the learning rate) reuses the same rescale gadget with a different
divisor.
"""

import hashlib
import math
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import MODULUS, from_signed, to_signed
from .gadgets import (
    ShapeMismatch,
    rescale_witness,
    rsqrt_witness,
    softmax_row_witness,
    swiglu_witness,
)
from .quantize import QuantParams, QuantizedTensor, round_half_away


class ConfigInvalid(ValueError):
    pass


class TokenOutOfVocab(ValueError):
    pass


class TraceMismatch(ValueError):
    pass


class IOFailure(Exception):
    pass


def _is_pow2(x):
    return isinstance(x, int) and x > 0 and (x & (x - 1)) == 0


def _next_pow2(x):
    return 1 if x <= 1 else 1 << (x - 1).bit_length()


@dataclass(frozen=True)
class ModelConfig:
    """Architecture, learning rate, and fixed-point profile.

    The learning rate must be zero or a reciprocal power of two no finer
    than the rescale range allows, so that the update step is a single
    exact rescale division.
    """

    layers: int = 2
    seq_len: int = 8
    dim: int = 16
    mlp_dim: int = 32
    vocab: int = 32
    rank: int = 2
    eta: float = 2.0**-8
    eps: float = 1e-5
    quant: QuantParams = dc_field(default_factory=QuantParams)

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigInvalid("need at least one layer")
        for name in ("seq_len", "dim", "mlp_dim", "vocab"):
            if not _is_pow2(getattr(self, name)):
                raise ConfigInvalid("%s must be a power of two" % name)
        if not 1 <= self.rank < self.dim:
            raise ConfigInvalid("rank must sit strictly below dim")
        q = self.quant
        if q.zeta != q.gamma_fp:
            raise ConfigInvalid("product narrowing assumes zeta == gamma_fp")
        if self.dim > q.zeta:
            raise ConfigInvalid("dim exceeds the supported rescale divisors")
        if self.seq_len > q.zeta:
            raise ConfigInvalid("seq_len exceeds the supported rescale divisors")
        _validate_eta(self.eta, q)
        if self.eps <= 0:
            raise ConfigInvalid("eps must be positive")

    @property
    def eta_divisor(self):
        return 0 if not self.eta else int(round(1.0 / self.eta))

    def digest(self):
        q = self.quant
        blob = repr(
            (
                self.layers,
                self.seq_len,
                self.dim,
                self.mlp_dim,
                self.vocab,
                self.rank,
                self.eta,
                self.eps,
                q.gamma_fp,
                q.bound,
                q.zeta,
                q.xi,
                q.radices,
                q.act_bound,
            )
        ).encode()
        return hashlib.sha256(b"zklora-config/" + blob).digest()


def _validate_eta(eta, quant):
    if eta == 0:
        return
    if eta < 0:
        raise ConfigInvalid("eta cannot be negative")
    inv = 1.0 / eta
    if inv != int(inv) or not _is_pow2(int(inv)):
        raise ConfigInvalid("eta must be zero or a reciprocal power of two")
    if int(inv) > quant.zeta:
        raise ConfigInvalid("eta is finer than the rescale range supports")


# ---------------------------------------------------------------------------
# parameters


@dataclass
class LayerWeights:
    """Frozen per-layer weights; norm vectors are stored as 1 x dim rows."""

    wq: QuantizedTensor
    wk: QuantizedTensor
    wv: QuantizedTensor
    wp: QuantizedTensor
    wgate: QuantizedTensor
    wup: QuantizedTensor
    wdown: QuantizedTensor
    ln1_g: QuantizedTensor
    ln1_b: QuantizedTensor
    ln2_g: QuantizedTensor
    ln2_b: QuantizedTensor


@dataclass
class ModelWeights:
    emb: QuantizedTensor
    layers: list
    lnf_g: QuantizedTensor
    lnf_b: QuantizedTensor
    head: QuantizedTensor


@dataclass
class LoraAdapters:
    """The only trainable parameters: per layer a (rank x dim), b (dim x rank)."""

    a: list
    b: list
    epoch: int = 0


_LAYER_FIELDS = (
    "wq",
    "wk",
    "wv",
    "wp",
    "wgate",
    "wup",
    "wdown",
    "ln1_g",
    "ln1_b",
    "ln2_g",
    "ln2_b",
)


def _unit_stream(seed):
    """Deterministic uniforms in [0, 1) from a byte seed, platform-stable."""
    counter = 0
    while True:
        block = hashlib.sha256(seed + counter.to_bytes(8, "little")).digest()
        for off in range(0, 32, 8):
            yield int.from_bytes(block[off : off + 8], "little") / 2.0**64
        counter += 1


def _uniform(stream, rows, cols, half_width):
    return np.array(
        [
            [(2.0 * next(stream) - 1.0) * half_width for _ in range(cols)]
            for _ in range(rows)
        ]
    )


def generate_real_weights(config, seed):
    """Synthetic frozen weights as float arrays (the reference format)."""
    s = _unit_stream(b"zklora-weights/" + seed)
    d, h, v = config.dim, config.mlp_dim, config.vocab
    wd, wh = 1.0 / math.sqrt(d), 1.0 / math.sqrt(h)
    out = {"emb": _uniform(s, v, d, 1.0), "layers": []}
    for _ in range(config.layers):
        out["layers"].append(
            {
                "wq": _uniform(s, d, d, wd),
                "wk": _uniform(s, d, d, wd),
                "wv": _uniform(s, d, d, wd),
                "wp": _uniform(s, d, d, wd),
                "wgate": _uniform(s, h, d, wd),
                "wup": _uniform(s, h, d, wd),
                "wdown": _uniform(s, d, h, wh),
                "ln1_g": np.ones(d),
                "ln1_b": np.zeros(d),
                "ln2_g": np.ones(d),
                "ln2_b": np.zeros(d),
            }
        )
    out["lnf_g"] = np.ones(d)
    out["lnf_b"] = np.zeros(d)
    out["w_head"] = _uniform(s, d, v, wd)
    return out


def generate_real_adapters(config, seed):
    s = _unit_stream(b"zklora-adapters/" + seed)
    wr = 1.0 / math.sqrt(config.rank)
    return [
        {
            "a": _uniform(s, config.rank, config.dim, wr),
            "b": np.zeros((config.dim, config.rank)),
        }
        for _ in range(config.layers)
    ]


def quantize_weights(real, config, modulus=MODULUS):
    q = config.quant

    def qt(arr):
        return QuantizedTensor.from_real(np.atleast_2d(arr), q, modulus)

    return ModelWeights(
        emb=qt(real["emb"]),
        layers=[
            LayerWeights(**{name: qt(lw[name]) for name in _LAYER_FIELDS})
            for lw in real["layers"]
        ],
        lnf_g=qt(real["lnf_g"]),
        lnf_b=qt(real["lnf_b"]),
        head=qt(real["w_head"]),
    )


def quantize_adapters(real, config, modulus=MODULUS, epoch=0):
    q = config.quant
    return LoraAdapters(
        a=[QuantizedTensor.from_real(ad["a"], q, modulus) for ad in real],
        b=[QuantizedTensor.from_real(ad["b"], q, modulus) for ad in real],
        epoch=epoch,
    )


def dequantize_weights(weights):
    """Float view of quantized weights, for like-for-like reference runs."""

    def row(t):
        return t.to_real()[0]

    return {
        "emb": weights.emb.to_real(),
        "layers": [
            {
                "wq": lw.wq.to_real(),
                "wk": lw.wk.to_real(),
                "wv": lw.wv.to_real(),
                "wp": lw.wp.to_real(),
                "wgate": lw.wgate.to_real(),
                "wup": lw.wup.to_real(),
                "wdown": lw.wdown.to_real(),
                "ln1_g": row(lw.ln1_g),
                "ln1_b": row(lw.ln1_b),
                "ln2_g": row(lw.ln2_g),
                "ln2_b": row(lw.ln2_b),
            }
            for lw in weights.layers
        ],
        "lnf_g": row(weights.lnf_g),
        "lnf_b": row(weights.lnf_b),
        "w_head": weights.head.to_real(),
    }


def dequantize_adapters(adapters):
    return [
        {"a": a.to_real(), "b": b.to_real()}
        for a, b in zip(adapters.a, adapters.b)
    ]


def generate_weights(config, seed, modulus=MODULUS):
    return quantize_weights(generate_real_weights(config, seed), config, modulus)


def init_adapters(config, seed, modulus=MODULUS):
    return quantize_adapters(generate_real_adapters(config, seed), config, modulus)


# ---------------------------------------------------------------------------
# inputs


def embed_tokens(tokens, weights, config, modulus=MODULUS):
    """Frozen embedding lookup (not part of the proven computation)."""
    if len(tokens) != config.seq_len:
        raise ShapeMismatch(
            "expected %d tokens, got %d" % (config.seq_len, len(tokens))
        )
    for t in tokens:
        if not 0 <= int(t) < config.vocab:
            raise TokenOutOfVocab("token %r outside vocab %d" % (t, config.vocab))
    d = config.dim
    entries = [weights.emb.entry(int(t), j) for t in tokens for j in range(d)]
    return QuantizedTensor.from_field(
        config.seq_len, d, entries, config.quant, modulus, config.quant.gamma_fp
    )


def one_hot_labels(targets, config, modulus=MODULUS):
    """Quantized one-hot label matrix for next-token targets."""
    if len(targets) != config.seq_len:
        raise ShapeMismatch(
            "expected %d targets, got %d" % (config.seq_len, len(targets))
        )
    g = config.quant.gamma_fp
    entries = [0] * (config.seq_len * config.vocab)
    for i, t in enumerate(targets):
        if not 0 <= int(t) < config.vocab:
            raise TokenOutOfVocab("target %r outside vocab %d" % (t, config.vocab))
        entries[i * config.vocab + int(t)] = g
    return QuantizedTensor.from_field(
        config.seq_len, config.vocab, entries, config.quant, modulus, g
    )


# ---------------------------------------------------------------------------
# trace builder


@dataclass(frozen=True)
class Step:
    tag: str
    operands: tuple
    info: tuple = ()

    def get(self, key, default=None):
        for k, v in self.info:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class SymTensor:
    rows: int
    cols: int
    scale: int


# which operand positions a step creates (first definition wins elsewhere)
STEP_OUTPUTS = {
    "matmul": (2,),
    "matadd": (2,),
    "elementprod": (2,),
    "transpose": (1,),
    "row_slice": (1,),
    "rescale": (1, 2),
    "swiglu": (1, 2, 3),
    "rsqrt": (1,),
    "softmax_row": (1,),
}


class TraceBuilder:
    """Records an epoch's arithmetic as named tensors plus a step list."""

    def __init__(self, config, modulus=MODULUS, compute=True):
        q = config.quant
        if q.bound * q.zeta * q.gamma_fp**2 >= modulus:
            raise ConfigInvalid(
                "field of %d bits is too small for this fixed-point profile"
                % modulus.bit_length()
            )
        self.config = config
        self.params = config.quant
        self.modulus = modulus
        self.compute = compute
        self.tensors = {}
        self.roles = {}
        self.steps = []
        self.aux = {}

    # -- registration ------------------------------------------------------

    def add_input(self, name, tensor, role):
        if name in self.tensors:
            raise TraceMismatch("duplicate tensor %r" % name)
        self.tensors[name] = tensor
        self.roles[name] = role

    def const(self, rows, cols, value, scale):
        if not (_is_pow2(rows) and _is_pow2(cols)):
            raise ShapeMismatch("public constants need power-of-two shapes")
        return ("const", rows, cols, int(value) % self.modulus, scale)

    # -- introspection -------------------------------------------------------

    def _shape(self, op):
        if isinstance(op, tuple):
            _, rows, cols, _value, scale = op
            return rows, cols, scale
        t = self.tensors[op]
        return t.rows, t.cols, t.scale

    def _operand(self, op):
        return op if isinstance(op, tuple) else ("t", op)

    def _emit(self, tag, ops, **info):
        self.steps.append(
            Step(tag, tuple(self._operand(o) for o in ops), tuple(sorted(info.items())))
        )

    def _store(self, name, rows, cols, scale, data=None):
        if name in self.tensors:
            raise TraceMismatch("tensor %r already defined" % name)
        if self.compute:
            self.tensors[name] = QuantizedTensor(
                rows, cols, data, self.params, self.modulus, scale
            )
        else:
            self.tensors[name] = SymTensor(rows, cols, scale)

    def _entries(self, op):
        """Padded flat residues of a named tensor or constant operand."""
        if isinstance(op, tuple):
            _, rows, cols, value, _scale = op
            return [value] * (rows * cols), rows, cols
        t = self.tensors[op]
        return t.data, t.padded_rows, t.padded_cols

    # -- arithmetic steps ----------------------------------------------------

    def matmul(self, a, b, out):
        ar, ac, asc = self._shape(a)
        br, bc, bsc = self._shape(b)
        if ac != br:
            raise ShapeMismatch("matmul inner dims %d != %d" % (ac, br))
        if self.compute:
            p = self.modulus
            ad, apr, apc = self._entries(a)
            bd, bpr, bpc = self._entries(b)
            data = [0] * (apr * bpc)
            for i in range(apr):
                base = i * apc
                for j in range(bpc):
                    acc = 0
                    for k in range(apc):
                        acc += ad[base + k] * bd[k * bpc + j]
                    data[i * bpc + j] = acc % p
            self._store(out, ar, bc, asc * bsc, data)
        else:
            self._store(out, ar, bc, asc * bsc)
        self._emit("matmul", (a, b, out))

    def matadd(self, a, b, out, sign=1):
        ar, ac, asc = self._shape(a)
        br, bc, bsc = self._shape(b)
        if (ar, ac) != (br, bc) or asc != bsc:
            raise ShapeMismatch("matadd operands must share shape and scale")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.compute:
            p = self.modulus
            ad, _, _ = self._entries(a)
            bd, _, _ = self._entries(b)
            data = [(x + sign * y) % p for x, y in zip(ad, bd)]
            self._store(out, ar, ac, asc, data)
        else:
            self._store(out, ar, ac, asc)
        self._emit("matadd", (a, b, out), sign=sign)

    def elementprod(self, a, b, out):
        ar, ac, asc = self._shape(a)
        br, bc, bsc = self._shape(b)
        if (ar, ac) != (br, bc):
            raise ShapeMismatch("element product operands must share a shape")
        if self.compute:
            p = self.modulus
            ad, _, _ = self._entries(a)
            bd, _, _ = self._entries(b)
            data = [(x * y) % p for x, y in zip(ad, bd)]
            self._store(out, ar, ac, asc * bsc, data)
        else:
            self._store(out, ar, ac, asc * bsc)
        self._emit("elementprod", (a, b, out))

    def transpose(self, a, out):
        ar, ac, asc = self._shape(a)
        if self.compute:
            ad, apr, apc = self._entries(a)
            data = [0] * (apr * apc)
            for i in range(apr):
                for j in range(apc):
                    data[j * apr + i] = ad[i * apc + j]
            self._store(out, ac, ar, asc, data)
        else:
            self._store(out, ac, ar, asc)
        self._emit("transpose", (a, out))

    def rescale(self, wide, out, divisor, out_scale):
        wr, wc, _wsc = self._shape(wide)
        if divisor <= 0 or self.params.zeta % divisor:
            raise ValueError("divisor %d must divide zeta" % divisor)
        res = out + ".res"
        if self.compute:
            narrow, resid = rescale_witness(
                self.tensors[wide], divisor, self.params, self.modulus, out_scale
            )
            if out in self.tensors or res in self.tensors:
                raise TraceMismatch("tensor %r already defined" % out)
            self.tensors[out] = narrow
            self.tensors[res] = resid
        else:
            self._store(out, wr, wc, out_scale)
            self._store(res, wr, wc, self.params.zeta)
        self._emit("rescale", (wide, out, res), divisor=divisor)

    def swiglu(self, wide, out, mode):
        wr, wc, wsc = self._shape(wide)
        g = self.params.gamma_fp
        if wsc != g * g:
            raise ShapeMismatch("activation input must be a wide product")
        nar, res = out + ".nar", out + ".res"
        if self.compute:
            narrow, resid, value = swiglu_witness(
                self.tensors[wide], self.params, self.modulus, mode
            )
            for name in (out, nar, res):
                if name in self.tensors:
                    raise TraceMismatch("tensor %r already defined" % name)
            self.tensors[out] = value
            self.tensors[nar] = narrow
            self.tensors[res] = resid
        else:
            self._store(out, wr, wc, g)
            self._store(nar, wr, wc, g)
            self._store(res, wr, wc, self.params.zeta)
        self._emit("swiglu", (wide, out, nar, res), mode=mode)

    def rsqrt(self, v, out):
        vr, vc, _vsc = self._shape(v)
        if self.compute:
            value = rsqrt_witness(
                self.tensors[v], self.params, self.config.eps, self.modulus
            )
            self._store(out, vr, vc, self.params.gamma_fp, value.data)
        else:
            self._store(out, vr, vc, self.params.gamma_fp)
        self._emit("rsqrt", (v, out))

    def softmax(self, z, out):
        zr, zc, _zsc = self._shape(z)
        g = self.params.gamma_fp
        p = self.modulus
        if self.compute:
            z_t = self.tensors[z]
            full = []
            for i in range(zr):
                row_signed = [to_signed(z_t.entry(i, j), p) for j in range(zc)]
                wit = softmax_row_witness(row_signed, self.params, p)
                row_in = [z_t.entry(i, j) for j in range(zc)]
                self._store(z + ".row%d" % i, 1, zc, g, row_in)
                prob = [from_signed(v, p) for v in wit[4]]
                self._store(out + ".row%d" % i, 1, zc, g, prob)
                self.aux[out + ".row%d" % i] = wit
                full.extend(prob)
            self._store(out, zr, zc, g, full)
        else:
            for i in range(zr):
                self._store(z + ".row%d" % i, 1, zc, g)
                self._store(out + ".row%d" % i, 1, zc, g)
            self._store(out, zr, zc, g)
        for i in range(zr):
            self._emit("row_slice", (z, z + ".row%d" % i), row=i)
            self._emit("softmax_row", (z + ".row%d" % i, out + ".row%d" % i))
            self._emit("row_slice", (out, out + ".row%d" % i), row=i)


def ordered_tensor_names(steps, input_names):
    """Inputs first, then every step-created tensor in first-use order."""
    seen = list(input_names)
    seen_set = set(seen)
    for step in steps:
        for op in step.operands:
            if op[0] != "t":
                continue
            name = op[1]
            if name not in seen_set:
                seen_set.add(name)
                seen.append(name)
    return seen


# ---------------------------------------------------------------------------
# the epoch graph


def _layernorm(b, x, g_name, beta_name, pre):
    cfg = b.config
    n, d, g = cfg.seq_len, cfg.dim, b.params.gamma_fp
    # divide centered values by s = 2^ceil(log2(d)/2) before squaring so the
    # variance numerator stays inside the quotient-table domain
    k = d.bit_length() - 1
    s = 1 << ((k + 1) // 2)
    var_div = g * d // (s * s)
    ones_col = b.const(d, 1, 1, 1)
    ones_row = b.const(n, 1, 1, 1)
    broad = b.const(1, d, 1, 1)
    b.matmul(x, ones_col, pre + ".rowsum")
    b.rescale(pre + ".rowsum", pre + ".mean", d, g)
    b.matmul(pre + ".mean", broad, pre + ".mu")
    b.matadd(x, pre + ".mu", pre + ".cen", sign=-1)
    b.rescale(pre + ".cen", pre + ".cens", s, g)
    b.elementprod(pre + ".cens", pre + ".cens", pre + ".sq")
    b.matmul(pre + ".sq", ones_col, pre + ".sqsum")
    b.rescale(pre + ".sqsum", pre + ".var", var_div, g)
    b.rsqrt(pre + ".var", pre + ".istd")
    b.matmul(pre + ".istd", broad, pre + ".istdb")
    b.elementprod(pre + ".cen", pre + ".istdb", pre + ".xw")
    b.rescale(pre + ".xw", pre + ".xhat", g, g)
    b.matmul(ones_row, g_name, pre + ".gb")
    b.elementprod(pre + ".xhat", pre + ".gb", pre + ".sw")
    b.rescale(pre + ".sw", pre + ".scaled", g, g)
    b.matmul(ones_row, beta_name, pre + ".bb")
    b.matadd(pre + ".scaled", pre + ".bb", pre + ".out", sign=1)
    return pre + ".out"


def _layernorm_backward(b, dy, ln_pre, pre):
    """Gradient through layernorm using the forward trace's xhat/istd/gb."""
    cfg = b.config
    d, g = cfg.dim, b.params.gamma_fp
    ones_col = b.const(d, 1, 1, 1)
    broad = b.const(1, d, 1, 1)
    xhat, istdb, gb = ln_pre + ".xhat", ln_pre + ".istdb", ln_pre + ".gb"
    b.elementprod(dy, gb, pre + ".ggw")
    b.rescale(pre + ".ggw", pre + ".gg", g, g)
    b.matmul(pre + ".gg", ones_col, pre + ".ggs")
    b.rescale(pre + ".ggs", pre + ".mg", d, g)
    b.matmul(pre + ".mg", broad, pre + ".mgb")
    b.elementprod(pre + ".gg", xhat, pre + ".tw")
    b.rescale(pre + ".tw", pre + ".t", g, g)
    b.matmul(pre + ".t", ones_col, pre + ".ts")
    b.rescale(pre + ".ts", pre + ".mt", d, g)
    b.matmul(pre + ".mt", broad, pre + ".mtb")
    b.matadd(pre + ".gg", pre + ".mgb", pre + ".i1", sign=-1)
    b.elementprod(xhat, pre + ".mtb", pre + ".xtw")
    b.rescale(pre + ".xtw", pre + ".xt", g, g)
    b.matadd(pre + ".i1", pre + ".xt", pre + ".i2", sign=-1)
    b.elementprod(pre + ".i2", istdb, pre + ".dxw")
    b.rescale(pre + ".dxw", pre + ".dx", g, g)
    return pre + ".dx"


def _attention_const(config):
    return round_half_away(config.quant.gamma_fp / math.sqrt(config.dim))


def _forward_graph(b):
    cfg = b.config
    n, d, g = cfg.seq_len, cfg.dim, b.params.gamma_fp
    c_att = _attention_const(cfg)
    x = "x0"
    for l in range(cfg.layers):
        pre, w, ad = "L%d" % l, "w.L%d." % l, "ad.L%d." % l
        xp = _layernorm(b, x, w + "ln1_g", w + "ln1_b", pre + ".ln1")
        b.matmul(ad + "b", ad + "a", pre + ".ba_w")
        b.rescale(pre + ".ba_w", pre + ".ba", g, g)
        b.matadd(w + "wv", pre + ".ba", pre + ".wv_eff", sign=1)
        b.matmul(xp, w + "wq", pre + ".q_w")
        b.rescale(pre + ".q_w", pre + ".q", g, g)
        b.matmul(xp, w + "wk", pre + ".k_w")
        b.rescale(pre + ".k_w", pre + ".k", g, g)
        b.matmul(xp, pre + ".wv_eff", pre + ".v_w")
        b.rescale(pre + ".v_w", pre + ".v", g, g)
        # scale queries by 1/sqrt(d) before the score product so scores
        # stay inside the activation domain
        b.elementprod(pre + ".q", b.const(n, d, c_att, g), pre + ".qc_w")
        b.rescale(pre + ".qc_w", pre + ".qc", g, g)
        b.transpose(pre + ".k", pre + ".kT")
        b.matmul(pre + ".qc", pre + ".kT", pre + ".z_w")
        b.rescale(pre + ".z_w", pre + ".z", g, g)
        b.softmax(pre + ".z", pre + ".p")
        b.matmul(pre + ".p", pre + ".v", pre + ".s_w")
        b.rescale(pre + ".s_w", pre + ".s", g, g)
        b.matmul(pre + ".s", w + "wp", pre + ".o_w")
        b.rescale(pre + ".o_w", pre + ".o", g, g)
        b.matadd(x, pre + ".o", pre + ".r", sign=1)
        rp = _layernorm(b, pre + ".r", w + "ln2_g", w + "ln2_b", pre + ".ln2")
        b.transpose(w + "wgate", pre + ".wgateT")
        b.matmul(rp, pre + ".wgateT", pre + ".gpre_w")
        b.swiglu(pre + ".gpre_w", pre + ".gact", "phi")
        b.transpose(w + "wup", pre + ".wupT")
        b.matmul(rp, pre + ".wupT", pre + ".u_w")
        b.rescale(pre + ".u_w", pre + ".u", g, g)
        b.elementprod(pre + ".gact", pre + ".u", pre + ".e_w")
        b.rescale(pre + ".e_w", pre + ".e", g, g)
        b.transpose(w + "wdown", pre + ".wdownT")
        b.matmul(pre + ".e", pre + ".wdownT", pre + ".m_w")
        b.rescale(pre + ".m_w", pre + ".mlp", g, g)
        b.matadd(pre + ".r", pre + ".mlp", pre + ".x", sign=1)
        x = pre + ".x"
    xl = _layernorm(b, x, "w.lnf_g", "w.lnf_b", "final.ln")
    b.matmul(xl, "w.head", "final.logit_w")
    b.rescale("final.logit_w", "final.logits", g, g)
    b.softmax("final.logits", "final.yhat")


def _backward_graph(b):
    cfg = b.config
    n, d, g = cfg.seq_len, cfg.dim, b.params.gamma_fp
    c_att = _attention_const(cfg)
    b.matadd("final.yhat", "y", "bk.dlogits", sign=-1)
    b.transpose("w.head", "bk.headT")
    b.matmul("bk.dlogits", "bk.headT", "bk.dxl_w")
    b.rescale("bk.dxl_w", "bk.dxl", g, g)
    dx = _layernorm_backward(b, "bk.dxl", "final.ln", "bk.lnf")
    for l in reversed(range(cfg.layers)):
        pre, w, ad = "L%d" % l, "w.L%d." % l, "ad.L%d." % l
        bk = "bk.L%d" % l
        b.matmul(dx, w + "wdown", bk + ".de_w")
        b.rescale(bk + ".de_w", bk + ".de", g, g)
        b.elementprod(bk + ".de", pre + ".u", bk + ".dgact_w")
        b.rescale(bk + ".dgact_w", bk + ".dgact", g, g)
        b.elementprod(bk + ".de", pre + ".gact", bk + ".du_w")
        b.rescale(bk + ".du_w", bk + ".du", g, g)
        b.swiglu(pre + ".gpre_w", bk + ".gderiv", "phi_prime")
        b.elementprod(bk + ".dgact", bk + ".gderiv", bk + ".dpre_w")
        b.rescale(bk + ".dpre_w", bk + ".dpre", g, g)
        b.matmul(bk + ".dpre", w + "wgate", bk + ".dr1_w")
        b.rescale(bk + ".dr1_w", bk + ".dr1", g, g)
        b.matmul(bk + ".du", w + "wup", bk + ".dr2_w")
        b.rescale(bk + ".dr2_w", bk + ".dr2", g, g)
        b.matadd(bk + ".dr1", bk + ".dr2", bk + ".drp", sign=1)
        drln = _layernorm_backward(b, bk + ".drp", pre + ".ln2", bk + ".ln2")
        b.matadd(dx, drln, bk + ".dr", sign=1)
        b.transpose(w + "wp", bk + ".wpT")
        b.matmul(bk + ".dr", bk + ".wpT", bk + ".ds_w")
        b.rescale(bk + ".ds_w", bk + ".ds", g, g)
        b.transpose(pre + ".p", bk + ".pT")
        b.matmul(bk + ".pT", bk + ".ds", bk + ".dv_w")
        b.rescale(bk + ".dv_w", bk + ".dv", g, g)
        b.transpose(pre + ".v", bk + ".vT")
        b.matmul(bk + ".ds", bk + ".vT", bk + ".dp_w")
        b.rescale(bk + ".dp_w", bk + ".dp", g, g)
        # softmax jacobian: dz = p * (dp - rowsum(dp * p))
        b.elementprod(bk + ".dp", pre + ".p", bk + ".w1_w")
        b.rescale(bk + ".w1_w", bk + ".w1", g, g)
        b.matmul(bk + ".w1", b.const(n, 1, 1, 1), bk + ".rs")
        b.matmul(bk + ".rs", b.const(1, n, 1, 1), bk + ".rsb")
        b.matadd(bk + ".dp", bk + ".rsb", bk + ".dd", sign=-1)
        b.elementprod(pre + ".p", bk + ".dd", bk + ".dz_w")
        b.rescale(bk + ".dz_w", bk + ".dz", g, g)
        b.matmul(bk + ".dz", pre + ".k", bk + ".dqc_w")
        b.rescale(bk + ".dqc_w", bk + ".dqc", g, g)
        b.transpose(bk + ".dz", bk + ".dzT")
        b.matmul(bk + ".dzT", pre + ".qc", bk + ".dk_w")
        b.rescale(bk + ".dk_w", bk + ".dk", g, g)
        b.elementprod(bk + ".dqc", b.const(n, d, c_att, g), bk + ".dq_w")
        b.rescale(bk + ".dq_w", bk + ".dq", g, g)
        b.transpose(pre + ".ln1.out", bk + ".xpT")
        b.matmul(bk + ".xpT", bk + ".dv", bk + ".dwv_w")
        b.rescale(bk + ".dwv_w", bk + ".dwv", g, g)
        b.transpose(ad + "b", bk + ".adbT")
        b.matmul(bk + ".adbT", bk + ".dwv", bk + ".da_w")
        b.rescale(bk + ".da_w", bk + ".da", g, g)
        b.transpose(ad + "a", bk + ".adaT")
        b.matmul(bk + ".dwv", bk + ".adaT", bk + ".db_w")
        b.rescale(bk + ".db_w", bk + ".db", g, g)
        b.transpose(w + "wq", bk + ".wqT")
        b.matmul(bk + ".dq", bk + ".wqT", bk + ".dxp1_w")
        b.rescale(bk + ".dxp1_w", bk + ".dxp1", g, g)
        b.transpose(w + "wk", bk + ".wkT")
        b.matmul(bk + ".dk", bk + ".wkT", bk + ".dxp2_w")
        b.rescale(bk + ".dxp2_w", bk + ".dxp2", g, g)
        b.transpose(pre + ".wv_eff", bk + ".wveT")
        b.matmul(bk + ".dv", bk + ".wveT", bk + ".dxp3_w")
        b.rescale(bk + ".dxp3_w", bk + ".dxp3", g, g)
        b.matadd(bk + ".dxp1", bk + ".dxp2", bk + ".dxp12", sign=1)
        b.matadd(bk + ".dxp12", bk + ".dxp3", bk + ".dxp", sign=1)
        dxln = _layernorm_backward(b, bk + ".dxp", pre + ".ln1", bk + ".ln1")
        b.matadd(bk + ".dr", dxln, bk + ".dx", sign=1)
        dx = bk + ".dx"


def _update_graph(b, eta):
    cfg = b.config
    _validate_eta(eta, b.params)
    if eta == 0:
        return
    div = int(round(1.0 / eta))
    g = b.params.gamma_fp
    for l in range(cfg.layers):
        bk, ad, up = "bk.L%d" % l, "ad.L%d." % l, "up.L%d" % l
        b.rescale(bk + ".da", up + ".da_step", div, g)
        b.matadd(ad + "a", up + ".da_step", up + ".a", sign=-1)
        b.rescale(bk + ".db", up + ".db_step", div, g)
        b.matadd(ad + "b", up + ".db_step", up + ".b", sign=-1)


def input_names(config):
    names = ["x0", "y"]
    for l in range(config.layers):
        names.extend("w.L%d.%s" % (l, f) for f in _LAYER_FIELDS)
    names.extend(["w.lnf_g", "w.lnf_b", "w.head"])
    for l in range(config.layers):
        names.extend(["ad.L%d.a" % l, "ad.L%d.b" % l])
    return names


def input_role(name):
    return "frozen" if name.startswith("w.") else "blinded"


def _register_model_inputs(b, weights, adapters, x0, y):
    cfg = b.config
    b.add_input("x0", x0, "blinded")
    if y is not None:
        b.add_input("y", y, "blinded")
    for l, lw in enumerate(weights.layers):
        for f in _LAYER_FIELDS:
            b.add_input("w.L%d.%s" % (l, f), getattr(lw, f), "frozen")
    b.add_input("w.lnf_g", weights.lnf_g, "frozen")
    b.add_input("w.lnf_b", weights.lnf_b, "frozen")
    b.add_input("w.head", weights.head, "frozen")
    for l in range(cfg.layers):
        b.add_input("ad.L%d.a" % l, adapters.a[l], "blinded")
        b.add_input("ad.L%d.b" % l, adapters.b[l], "blinded")


def symbolic_epoch(config, modulus=MODULUS):
    """Shape-only replay of one epoch: the verifier's proof schedule."""
    b = TraceBuilder(config, modulus, compute=False)
    g = config.quant.gamma_fp
    n, d, h, v, r = (
        config.seq_len,
        config.dim,
        config.mlp_dim,
        config.vocab,
        config.rank,
    )
    shapes = {"x0": (n, d), "y": (n, v)}
    for l in range(config.layers):
        shapes.update(
            {
                "w.L%d.wq" % l: (d, d),
                "w.L%d.wk" % l: (d, d),
                "w.L%d.wv" % l: (d, d),
                "w.L%d.wp" % l: (d, d),
                "w.L%d.wgate" % l: (h, d),
                "w.L%d.wup" % l: (h, d),
                "w.L%d.wdown" % l: (d, h),
                "w.L%d.ln1_g" % l: (1, d),
                "w.L%d.ln1_b" % l: (1, d),
                "w.L%d.ln2_g" % l: (1, d),
                "w.L%d.ln2_b" % l: (1, d),
                "ad.L%d.a" % l: (r, d),
                "ad.L%d.b" % l: (d, r),
            }
        )
    shapes.update({"w.lnf_g": (1, d), "w.lnf_b": (1, d), "w.head": (d, v)})
    for name in input_names(config):
        rows, cols = shapes[name]
        b.add_input(name, SymTensor(rows, cols, g), input_role(name))
    _forward_graph(b)
    _backward_graph(b)
    _update_graph(b, config.eta)
    return b


def traced_epoch(weights, adapters, x0, y, config, modulus=MODULUS):
    """Execute one full epoch in fixed point, recording the whole witness."""
    b = TraceBuilder(config, modulus, compute=True)
    _register_model_inputs(b, weights, adapters, x0, y)
    _forward_graph(b)
    _backward_graph(b)
    _update_graph(b, config.eta)
    return b


def adapters_after_update(builder, adapters):
    cfg = builder.config
    if cfg.eta == 0 or "up.L0.a" not in builder.tensors:
        return LoraAdapters(list(adapters.a), list(adapters.b), adapters.epoch + 1)
    return LoraAdapters(
        a=[builder.tensors["up.L%d.a" % l] for l in range(cfg.layers)],
        b=[builder.tensors["up.L%d.b" % l] for l in range(cfg.layers)],
        epoch=adapters.epoch + 1,
    )


# ---------------------------------------------------------------------------
# model-level API


class ActivationTrace:
    """Forward-pass witness: every named tensor plus softmax row data."""

    def __init__(self, builder):
        self.builder = builder

    def tensor(self, name):
        return self.builder.tensors[name]

    @property
    def yhat(self):
        return self.tensor("final.yhat")

    @property
    def logits(self):
        return self.tensor("final.logits")

    def layer(self, l, key):
        return self.tensor("L%d.%s" % (l, key))


class GradientTrace:
    """Backward-pass witness built on top of an ActivationTrace's builder."""

    def __init__(self, builder):
        self.builder = builder

    def tensor(self, name):
        return self.builder.tensors[name]

    def grad_a(self, l):
        return self.tensor("bk.L%d.da" % l)

    def grad_b(self, l):
        return self.tensor("bk.L%d.db" % l)

    def input_grad(self, l):
        return self.tensor("bk.L%d.dx" % l)

    @property
    def dlogits(self):
        return self.tensor("bk.dlogits")


def forward_model(tokens, weights, adapters, config, modulus=MODULUS):
    """Fixed-point forward pass over one token sequence."""
    if len(adapters.a) != config.layers or len(adapters.b) != config.layers:
        raise ShapeMismatch("adapter count does not match layer count")
    x0 = embed_tokens(tokens, weights, config, modulus)
    b = TraceBuilder(config, modulus, compute=True)
    _register_model_inputs(b, weights, adapters, x0, None)
    _forward_graph(b)
    return ActivationTrace(b)


def backward_model(trace, y, weights, adapters, config=None):
    """Fixed-point backward pass continuing a forward trace."""
    b = trace.builder
    cfg = config or b.config
    if cfg is not b.config and cfg != b.config:
        raise TraceMismatch("config does not match the forward trace")
    if "final.yhat" not in b.tensors:
        raise TraceMismatch("trace is missing the forward pass")
    if "y" in b.tensors:
        raise TraceMismatch("backward pass already recorded on this trace")
    for l in range(cfg.layers):
        if b.tensors["w.L%d.wq" % l] != weights.layers[l].wq:
            raise TraceMismatch("weights differ from the traced forward pass")
        if b.tensors["ad.L%d.a" % l] != adapters.a[l]:
            raise TraceMismatch("adapters differ from the traced forward pass")
    if (y.rows, y.cols) != (cfg.seq_len, cfg.vocab):
        raise TraceMismatch("label shape must be seq_len x vocab")
    if y.scale != cfg.quant.gamma_fp:
        raise TraceMismatch("labels must be encoded at scale gamma")
    b.add_input("y", y, "blinded")
    _backward_graph(b)
    return GradientTrace(b)


def update_params(adapters, grads, eta):
    """Adapter step A <- A - eta*dA, B <- B - eta*dB in fixed point."""
    b = grads.builder
    cfg = b.config
    _validate_eta(eta, b.params)
    for l in range(cfg.layers):
        a, bb = adapters.a[l], adapters.b[l]
        if (a.rows, a.cols) != (cfg.rank, cfg.dim):
            raise ShapeMismatch("adapter a must be rank x dim")
        if (bb.rows, bb.cols) != (cfg.dim, cfg.rank):
            raise ShapeMismatch("adapter b must be dim x rank")
        if b.tensors["ad.L%d.a" % l] != a or b.tensors["ad.L%d.b" % l] != bb:
            raise TraceMismatch("adapters differ from the traced epoch")
    if eta == 0:
        return LoraAdapters(list(adapters.a), list(adapters.b), adapters.epoch + 1)
    _update_graph(b, eta)
    return adapters_after_update(b, adapters)


def compute_loss(yhat, y):
    """Cross-entropy over dequantized probabilities (reporting only)."""
    if isinstance(yhat, QuantizedTensor):
        floor = 1.0 / (2.0 * yhat.scale)
        yh = np.maximum(yhat.to_real(), floor)
    else:
        yh = np.maximum(np.asarray(yhat, dtype=np.float64), 1e-300)
    yv = y.to_real() if isinstance(y, QuantizedTensor) else np.asarray(y)
    return float(-(yv * np.log(yh)).sum())


# ---------------------------------------------------------------------------
# weight files


_WEIGHT_MAGIC = b"ZKWT"
_WEIGHT_VERSION = 1


def _write_tensor(out, t):
    out.append(struct.pack("<IIQ", t.rows, t.cols, t.scale))
    for i in range(t.rows):
        for j in range(t.cols):
            out.append(t.entry(i, j).to_bytes(32, "little"))


def _read_tensor(buf, pos, params, modulus):
    rows, cols, scale = struct.unpack_from("<IIQ", buf, pos)
    pos += 16
    entries = []
    for _ in range(rows * cols):
        entries.append(int.from_bytes(buf[pos : pos + 32], "little"))
        pos += 32
    t = QuantizedTensor.from_field(rows, cols, entries, params, modulus, scale)
    return t, pos


def save_weights(path, weights, adapters, config, modulus=MODULUS):
    """Write frozen weights plus current adapters in declaration order."""
    out = [
        _WEIGHT_MAGIC,
        struct.pack("<H", _WEIGHT_VERSION),
        config.digest(),
        struct.pack("<I", adapters.epoch),
        modulus.to_bytes(32, "little"),
    ]
    _write_tensor(out, weights.emb)
    for lw in weights.layers:
        for f in _LAYER_FIELDS:
            _write_tensor(out, getattr(lw, f))
    _write_tensor(out, weights.lnf_g)
    _write_tensor(out, weights.lnf_b)
    _write_tensor(out, weights.head)
    for l in range(config.layers):
        _write_tensor(out, adapters.a[l])
        _write_tensor(out, adapters.b[l])
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(out))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def load_weights(path, config, modulus=MODULUS):
    """Read a weight file; returns (ModelWeights, LoraAdapters)."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    if buf[:4] != _WEIGHT_MAGIC:
        raise IOFailure("not a weight file")
    try:
        (version,) = struct.unpack_from("<H", buf, 4)
        if version != _WEIGHT_VERSION:
            raise IOFailure("unsupported weight file version %d" % version)
        if buf[6:38] != config.digest():
            raise IOFailure("weight file was made for a different config")
        (epoch,) = struct.unpack_from("<I", buf, 38)
        stored_modulus = int.from_bytes(buf[42:74], "little")
        if stored_modulus != modulus:
            raise IOFailure("weight file uses a different field")
        pos = 74
        params = config.quant
        emb, pos = _read_tensor(buf, pos, params, modulus)
        layers = []
        for _ in range(config.layers):
            vals = {}
            for f in _LAYER_FIELDS:
                vals[f], pos = _read_tensor(buf, pos, params, modulus)
            layers.append(LayerWeights(**vals))
        lnf_g, pos = _read_tensor(buf, pos, params, modulus)
        lnf_b, pos = _read_tensor(buf, pos, params, modulus)
        head, pos = _read_tensor(buf, pos, params, modulus)
        a_list, b_list = [], []
        for _ in range(config.layers):
            a, pos = _read_tensor(buf, pos, params, modulus)
            bb, pos = _read_tensor(buf, pos, params, modulus)
            a_list.append(a)
            b_list.append(bb)
        if pos != len(buf):
            raise IOFailure("trailing bytes in weight file")
    except (struct.error, IndexError, ValueError) as exc:
        raise IOFailure("malformed weight file: %s" % exc) from exc
    weights = ModelWeights(emb=emb, layers=layers, lnf_g=lnf_g, lnf_b=lnf_b, head=head)
    return weights, LoraAdapters(a=a_list, b=b_list, epoch=epoch)
