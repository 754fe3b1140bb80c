"""Fixed-point codec mapping real model quantities into the field.

All scales are powers of two.  A real value x is stored as
round(x * gamma_fp) in additive-complement form (negatives map to p - |.|).
Products of two scale-gamma values carry scale gamma^2 until a rescale
gadget narrows them again.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import MODULUS, from_signed, to_signed


class OutOfRange(ValueError):
    pass


def _is_pow2(x):
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class QuantParams:
    """Fixed-point configuration shared by every gadget and table.

    gamma_fp:  global scale (quantization grid is 1/gamma_fp)
    bound:     arithmetic headroom B: every encoded value must satisfy
               |x| < B in real units; guards field-overflow, not tables
    act_bound: activation-table domain half-width: every value that is
               looked up (activation inputs, rescale quotients) must lie
               in (-act_bound, act_bound) real units; table sizes are
               2 * act_bound * gamma_fp
    zeta:      rescale divisor (wide scale gamma^2 back down to gamma)
    xi:        supported dynamic range of shifted softmax exponents
    radices:   digit bases for the softmax exponent decomposition
    """

    gamma_fp: int = 2**16
    bound: int = 2**16
    zeta: int = 2**16
    xi: int = 2**64
    radices: tuple = dc_field(default=(2**16,) * 5)
    act_bound: int = 8

    def __post_init__(self):
        for name in ("gamma_fp", "bound", "zeta", "xi", "act_bound"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError("%s must be a power of two" % name)
        if not all(_is_pow2(b) for b in self.radices):
            raise ValueError("radices must be powers of two")
        cover = 1
        for b in self.radices:
            cover *= b
        if cover < self.xi:
            raise ValueError("radix product %d does not cover xi=%d" % (cover, self.xi))
        if self.act_bound > self.bound:
            raise ValueError("act_bound cannot exceed the arithmetic bound")
        if self.bound * self.zeta * self.gamma_fp**2 >= MODULUS:
            raise ValueError("bound*zeta overflows the field headroom")

    @property
    def num_radices(self):
        return len(self.radices)


# Compact profile for interactive desk-scale runs: 4096-entry activation
# tables and 128-entry exponent segments keep proving fast while leaving
# the same arithmetic headroom ratios as the defaults.
DESK_PROFILE = QuantParams(
    gamma_fp=2**7,
    bound=2**11,
    zeta=2**7,
    xi=2**21,
    radices=(2**7,) * 3,
    act_bound=16,
)


def round_half_away(x):
    """Round to nearest integer, halves away from zero."""
    if x >= 0:
        return int(np.floor(x + 0.5))
    return -int(np.floor(-x + 0.5))


def quantize_real(x, params, modulus=MODULUS):
    """Encode one real number at scale gamma_fp."""
    scaled = round_half_away(float(x) * params.gamma_fp)
    if abs(scaled) >= params.bound * params.gamma_fp:
        raise OutOfRange("|%r| too large for bound %d" % (x, params.bound))
    return from_signed(scaled, modulus)


def dequantize(f, params, modulus=MODULUS, scale=None):
    """Decode a residue back to a real number (scale defaults to gamma_fp)."""
    return to_signed(f, modulus) / (scale if scale is not None else params.gamma_fp)


def centered_divmod(z, divisor):
    """Split z = divisor*q + r with r in [-divisor/2, divisor/2)."""
    q = (z + divisor // 2) // divisor
    return q, z - divisor * q


class DigitOutOfRange(ValueError):
    pass


def radix_bases(radices):
    """Positional weights: base_k = product of radices before position k."""
    bases = []
    acc = 1
    for b in radices:
        bases.append(acc)
        acc *= b
    return bases


def mixed_radix_digits(v, radices):
    """Decompose v >= 0 into digits, least-significant radix first.

    v = sum_k digit_k * base_k with digit_k in [0, radices[k]).
    """
    if v < 0:
        raise DigitOutOfRange("cannot decompose negative value %d" % v)
    digits = []
    rest = v
    for b in radices:
        digits.append(rest % b)
        rest //= b
    if rest:
        raise DigitOutOfRange("value %d exceeds radix coverage" % v)
    return digits


class QuantizedTensor:
    """A row x col matrix of field residues, padded to power-of-two shape.

    data is stored flat, row-major, over the padded shape; padding is zero.
    """

    __slots__ = ("rows", "cols", "padded_rows", "padded_cols", "data", "params", "modulus", "scale")

    def __init__(self, rows, cols, data, params, modulus=MODULUS, scale=None):
        self.rows = rows
        self.cols = cols
        self.padded_rows = _next_pow2(rows)
        self.padded_cols = _next_pow2(cols)
        self.params = params
        self.modulus = modulus
        self.scale = scale if scale is not None else params.gamma_fp
        if len(data) != self.padded_rows * self.padded_cols:
            raise ValueError("data length %d, expected %d" % (len(data), self.padded_rows * self.padded_cols))
        self.data = data
        limit = params.bound * params.gamma_fp * self.scale
        for i, v in enumerate(data):
            if not (0 <= v < modulus):
                raise ValueError("entry %d not canonical" % i)
            if abs(to_signed(v, modulus)) >= limit:
                raise OutOfRange("entry %d decodes outside |x| < B*gamma" % i)

    @classmethod
    def from_real(cls, array, params, modulus=MODULUS):
        array = np.atleast_2d(np.asarray(array, dtype=np.float64))
        rows, cols = array.shape
        pr, pc = _next_pow2(rows), _next_pow2(cols)
        data = [0] * (pr * pc)
        for i in range(rows):
            for j in range(cols):
                data[i * pc + j] = quantize_real(array[i, j], params, modulus)
        return cls(rows, cols, data, params, modulus)

    @classmethod
    def from_field(cls, rows, cols, entries, params, modulus=MODULUS, scale=None):
        """Build from unpadded row-major residues."""
        pr, pc = _next_pow2(rows), _next_pow2(cols)
        data = [0] * (pr * pc)
        for i in range(rows):
            for j in range(cols):
                data[i * pc + j] = entries[i * cols + j] % modulus
        return cls(rows, cols, data, params, modulus, scale)

    def entry(self, i, j):
        return self.data[i * self.padded_cols + j]

    def signed_entries(self):
        """Unpadded signed-integer matrix (numpy object array for big ints)."""
        out = np.zeros((self.rows, self.cols), dtype=object)
        for i in range(self.rows):
            for j in range(self.cols):
                out[i, j] = to_signed(self.entry(i, j), self.modulus)
        return out

    def to_real(self):
        return np.asarray(self.signed_entries(), dtype=np.float64) / self.scale

    def num_vars(self):
        return (self.padded_rows * self.padded_cols - 1).bit_length()

    def __eq__(self, other):
        return (
            isinstance(other, QuantizedTensor)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.data == other.data
            and self.modulus == other.modulus
        )


def _next_pow2(x):
    return 1 if x <= 1 else 1 << (x - 1).bit_length()
