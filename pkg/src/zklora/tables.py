"""Deterministic quantized function tables.

Every non-arithmetic step in the pipeline is proven by membership in one
of these tables, all derived from QuantParams (plus the LayerNorm
epsilon for the reciprocal square root):

  exp segment k   pair (x, round(g * exp(-x * base_k / g))), x in [0, radix_k)
  silu            pair (x, round(g * silu(x / g))), x in [-A*g, A*g)
  silu_deriv      pair (x, round(g * silu'(x / g))), same domain
  rsqrt           pair (x, round(g / sqrt(x / g + eps))), x in [0, A*g)
  quant_range     single column, the signed activation domain [-A*g, A*g)
  residue_range   single column, [-zeta/2, zeta/2)

with g = gamma_fp and A = act_bound.  Pair tables are stored as two
columns; a lookup compresses them to x + alpha * y with a transcript
challenge, combining the two column commitments homomorphically.
"""

import hashlib
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .commit import combine_commitments
from .field import element_size, from_bytes, from_signed, to_bytes, to_signed
from .lookup import LookupTable, make_lookup_table
from .quantize import radix_bases, round_half_away

MAGIC = b"ZKTB"
VERSION = 1


class TableFileError(ValueError):
    pass


def silu_real(x):
    x = np.asarray(x, dtype=np.float64)
    return x / (1.0 + np.exp(-x))


def silu_deriv_real(x):
    x = np.asarray(x, dtype=np.float64)
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


# Scalar table-value functions.  Witness generation calls these directly so
# a witness computed without any committed table matches the table the
# gadget proves against entry for entry.


def exp_segment_value(params, k, digit):
    """round(g * exp(-digit * base_k / g)) for digit position k."""
    if not 0 <= digit < params.radices[k]:
        raise KeyError("digit %d outside segment %d" % (digit, k))
    g = params.gamma_fp
    base = radix_bases(params.radices)[k]
    return round_half_away(g * math.exp(-digit * (base / g)))


def silu_value(params, x):
    g, half = params.gamma_fp, params.act_bound * params.gamma_fp
    if not -half <= x < half:
        raise KeyError("input %d outside activation domain" % x)
    return round_half_away(g * float(silu_real(x / g)))


def silu_deriv_value(params, x):
    g, half = params.gamma_fp, params.act_bound * params.gamma_fp
    if not -half <= x < half:
        raise KeyError("input %d outside activation domain" % x)
    return round_half_away(g * float(silu_deriv_real(x / g)))


def rsqrt_value(params, eps, x):
    g = params.gamma_fp
    if not 0 <= x < params.act_bound * g:
        raise KeyError("input %d outside rsqrt domain" % x)
    return round_half_away(g / math.sqrt(x / g + eps))


def exp_segment_entries(params, k):
    """Partial exponential for digit position k (signed integer columns)."""
    xs = list(range(params.radices[k]))
    return xs, [exp_segment_value(params, k, x) for x in xs]


def silu_entries(params):
    half = params.act_bound * params.gamma_fp
    xs = list(range(-half, half))
    return xs, [silu_value(params, x) for x in xs]


def silu_deriv_entries(params):
    half = params.act_bound * params.gamma_fp
    xs = list(range(-half, half))
    return xs, [silu_deriv_value(params, x) for x in xs]


def rsqrt_entries(params, eps):
    xs = list(range(params.act_bound * params.gamma_fp))
    return xs, [rsqrt_value(params, eps, x) for x in xs]


def quant_range_entries(params):
    half = params.act_bound * params.gamma_fp
    return list(range(-half, half))


def residue_range_entries(params):
    half = params.zeta // 2
    return list(range(-half, half))


@dataclass(frozen=True)
class PairTable:
    """Two aligned columns (input, output), each its own commitment."""

    x: LookupTable
    y: LookupTable
    name: str

    @property
    def size(self):
        return self.x.size

    def combined(self, alpha, key, modulus):
        """Single-column view x + alpha*y with the matching commitment."""
        entries = [
            (xv + alpha * yv) % modulus
            for xv, yv in zip(self.x.entries, self.y.entries)
        ]
        com = combine_commitments(
            key.group, [self.x.commitment, self.y.commitment], [1, alpha]
        )
        return LookupTable(tuple(entries), com, self.name + "+a*y")

    def output_for(self, x_signed, modulus):
        """Signed table output for a signed input.

        Input columns are consecutive integer ranges, so the row index is
        the offset from the first entry.
        """
        first = to_signed(self.x.entries[0], modulus)
        offset = int(x_signed) - first
        if not 0 <= offset < self.size:
            raise KeyError("input %d outside table domain" % x_signed)
        return to_signed(self.y.entries[offset], modulus)


@dataclass(frozen=True)
class TableSet:
    params: object
    eps: float
    modulus: int
    digest: bytes
    exp_segments: tuple
    silu: PairTable
    silu_deriv: PairTable
    rsqrt: PairTable
    quant_range: LookupTable
    residue_range: LookupTable

    def all_named(self):
        out = [(t.name, t) for t in self.exp_segments]
        out += [
            (self.silu.name, self.silu),
            (self.silu_deriv.name, self.silu_deriv),
            (self.rsqrt.name, self.rsqrt),
            (self.quant_range.name, self.quant_range),
            (self.residue_range.name, self.residue_range),
        ]
        return out


def params_digest(params, eps, modulus):
    h = hashlib.sha256()
    for v in (
        params.gamma_fp,
        params.bound,
        params.act_bound,
        params.zeta,
        params.xi,
        len(params.radices),
        *params.radices,
        modulus,
    ):
        h.update(int(v).to_bytes(16, "little"))
    h.update(repr(float(eps)).encode())
    return h.digest()


def _encode_column(signed_values, modulus):
    return [from_signed(int(v), modulus) for v in signed_values]


def table_names(params):
    return (
        ["exp%d" % k for k in range(params.num_radices)]
        + ["silu", "silu_deriv", "rsqrt", "quant_range", "residue_range"]
    )


def _pair(name, cols, key, modulus):
    xs, ys = cols
    return PairTable(
        make_lookup_table(_encode_column(xs, modulus), key, name + ".x"),
        make_lookup_table(_encode_column(ys, modulus), key, name + ".y"),
        name,
    )


def build_table_set(params, eps, key, modulus):
    """Generate and commit every table; fully deterministic."""
    exps = tuple(
        _pair("exp%d" % k, exp_segment_entries(params, k), key, modulus)
        for k in range(params.num_radices)
    )
    return TableSet(
        params,
        eps,
        modulus,
        params_digest(params, eps, modulus),
        exps,
        _pair("silu", silu_entries(params), key, modulus),
        _pair("silu_deriv", silu_deriv_entries(params), key, modulus),
        _pair("rsqrt", rsqrt_entries(params, eps), key, modulus),
        make_lookup_table(
            _encode_column(quant_range_entries(params), modulus), key, "quant_range"
        ),
        make_lookup_table(
            _encode_column(residue_range_entries(params), modulus), key, "residue_range"
        ),
    )


def _write_table(fh, digest, name, columns, modulus):
    fh.write(MAGIC)
    fh.write(struct.pack("<B", VERSION))
    fh.write(digest)
    name_b = name.encode()
    fh.write(struct.pack("<H", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<B", len(columns)))
    fh.write(struct.pack("<Q", len(columns[0])))
    for col in columns:
        for v in col:
            fh.write(to_bytes(v, modulus))


def _read_table(fh, modulus):
    size = element_size(modulus)
    head = fh.read(4)
    if head != MAGIC:
        raise TableFileError("bad magic %r" % head)
    (version,) = struct.unpack("<B", fh.read(1))
    if version != VERSION:
        raise TableFileError("unsupported table version %d" % version)
    digest = fh.read(32)
    (name_len,) = struct.unpack("<H", fh.read(2))
    name = fh.read(name_len).decode()
    (ncols,) = struct.unpack("<B", fh.read(1))
    (nrows,) = struct.unpack("<Q", fh.read(8))
    cols = []
    for _ in range(ncols):
        col = []
        for _ in range(nrows):
            raw = fh.read(size)
            if len(raw) != size:
                raise TableFileError("truncated table file")
            col.append(from_bytes(raw, modulus))
        cols.append(col)
    return digest, name, cols


def save_table_set(ts, directory):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, t in ts.all_named():
        path = os.path.join(directory, name + ".zktb")
        cols = (
            [list(t.x.entries), list(t.y.entries)]
            if isinstance(t, PairTable)
            else [list(t.entries)]
        )
        with open(path, "wb") as fh:
            _write_table(fh, ts.digest, name, cols, ts.modulus)
        paths.append(path)
    return paths


def load_table_set(directory, params, eps, key, modulus):
    """Load table files, verifying them against regeneration.

    Files are a cache, not ground truth: the loader rebuilds the tables
    from the configuration and requires the stored columns to match.
    """
    rebuilt = build_table_set(params, eps, key, modulus)
    expected = rebuilt.digest
    for name, t in rebuilt.all_named():
        path = os.path.join(directory, name + ".zktb")
        try:
            with open(path, "rb") as fh:
                digest, file_name, cols = _read_table(fh, modulus)
        except OSError as e:
            raise TableFileError("cannot read %s: %s" % (path, e))
        if digest != expected:
            raise TableFileError("%s built under different parameters" % path)
        if file_name != name:
            raise TableFileError("%s holds table %r" % (path, file_name))
        want = (
            [list(t.x.entries), list(t.y.entries)]
            if isinstance(t, PairTable)
            else [list(t.entries)]
        )
        if cols != want:
            raise TableFileError("%s does not match regenerated table" % path)
    return rebuilt
