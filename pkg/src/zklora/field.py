"""Prime field arithmetic over the proving field and a small test field."""

try:
    from gmpy2 import invert as _gmpy_invert
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _gmpy_invert = None

# Scalar field order of BLS12-381, the proving field.
MODULUS = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001

# Mersenne prime used for brute-force oracles and fast tests.
TEST_MODULUS = 2**61 - 1


class InversionOfZero(ZeroDivisionError):
    """Raised when a multiplicative inverse of zero is requested."""


def element_size(modulus):
    """Bytes per serialized element: 8 in test-field mode, 32 otherwise."""
    return 8 if modulus.bit_length() <= 64 else 32


def inverse(value, modulus):
    """Multiplicative inverse of an int residue."""
    value %= modulus
    if value == 0:
        raise InversionOfZero("cannot invert 0")
    if _gmpy_invert is not None:
        return int(_gmpy_invert(value, modulus))
    return pow(value, modulus - 2, modulus)


def batch_inverse(values, modulus):
    """Invert many residues with one field inversion (Montgomery's trick)."""
    prefix = [1] * (len(values) + 1)
    for i, v in enumerate(values):
        if v == 0:
            raise InversionOfZero("cannot invert 0 at index %d" % i)
        prefix[i + 1] = prefix[i] * v % modulus
    acc = inverse(prefix[-1], modulus)
    out = [0] * len(values)
    for i in range(len(values) - 1, -1, -1):
        out[i] = prefix[i] * acc % modulus
        acc = acc * values[i] % modulus
    return out


def to_signed(value, modulus):
    """Interpret a residue as a signed integer in (-p/2, p/2]."""
    return value if value <= modulus // 2 else value - modulus


def from_signed(value, modulus):
    return value % modulus


def to_bytes(value, modulus):
    """Canonical little-endian encoding."""
    return value.to_bytes(element_size(modulus), "little")


def from_bytes(data, modulus):
    size = element_size(modulus)
    if len(data) != size:
        raise ValueError("expected %d bytes, got %d" % (size, len(data)))
    value = int.from_bytes(data, "little")
    if value >= modulus:
        raise ValueError("non-canonical field element")
    return value


class FieldElement:
    """An element of a prime field in canonical residue form."""

    __slots__ = ("value", "modulus")

    def __init__(self, value, modulus=MODULUS):
        self.value = value % modulus
        self.modulus = modulus

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.modulus != self.modulus:
                raise ValueError("mixed field moduli")
            return other
        if isinstance(other, int):
            return FieldElement(other, self.modulus)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return FieldElement(self.value + other.value, self.modulus)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return FieldElement(self.value - other.value, self.modulus)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return FieldElement(self.value * other.value, self.modulus)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.value, self.modulus)

    def __pow__(self, exponent):
        return FieldElement(pow(self.value, exponent, self.modulus), self.modulus)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other.inverse()

    def inverse(self):
        return FieldElement(inverse(self.value, self.modulus), self.modulus)

    def to_signed(self):
        return to_signed(self.value, self.modulus)

    def __eq__(self, other):
        if isinstance(other, int):
            return self.value == other % self.modulus
        return (
            isinstance(other, FieldElement)
            and self.value == other.value
            and self.modulus == other.modulus
        )

    def __hash__(self):
        return hash((self.value, self.modulus))

    def __repr__(self):
        return "FieldElement(%d)" % self.value


def fe_arith(a, b, kind):
    """Dispatch helper: add | sub | mul | inv (inv ignores b)."""
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "inv":
        return a.inverse()
    raise ValueError("unknown op kind %r" % kind)
