"""Prime-order group backends for the vector commitments.

Each backend is a Schnorr-style subgroup of Z_q^* whose order equals the
field modulus used for scalars, so commitment exponents are exactly field
elements.  q = cofactor * order + 1 with both prime; elements are derived
from seeds by hash-then-cofactor-clearing.
"""

import hashlib

try:
    from gmpy2 import mpz, powmod as _powmod
except ImportError:  # pragma: no cover
    mpz = int
    _powmod = pow

from .field import MODULUS, TEST_MODULUS


class SchnorrGroup:
    __slots__ = ("q", "order", "cofactor", "element_size")

    def __init__(self, q, order, cofactor):
        assert q == cofactor * order + 1
        self.q = q
        self.order = order
        self.cofactor = cofactor
        self.element_size = (q.bit_length() + 7) // 8

    def exp(self, base, exponent):
        return int(_powmod(base, exponent, self.q))

    def mul(self, a, b):
        return a * b % self.q

    def inv(self, a):
        return int(_powmod(a, self.q - 2, self.q))

    @property
    def identity(self):
        return 1

    def derive_element(self, seed, index):
        """Deterministic generator: hash to Z_q^*, clear the cofactor."""
        counter = 0
        while True:
            raw = hashlib.shake_256(
                seed + index.to_bytes(8, "little") + counter.to_bytes(4, "little")
            ).digest(self.element_size + 16)
            candidate = int.from_bytes(raw, "little") % self.q
            element = self.exp(candidate, self.cofactor)
            if element != 1:
                return element
            counter += 1

    def encode(self, element):
        return element.to_bytes(self.element_size, "little")

    def decode(self, data):
        if len(data) != self.element_size:
            raise ValueError("bad group element size")
        element = int.from_bytes(data, "little")
        if not (1 <= element < self.q):
            raise ValueError("group element out of range")
        return element


# Order = BLS12-381 scalar modulus; smallest even cofactor with q prime.
BIG_GROUP = SchnorrGroup(96 * MODULUS + 1, MODULUS, 96)

# Order = the test-field Mersenne prime, for fast protocol tests.
TEST_GROUP = SchnorrGroup(52 * TEST_MODULUS + 1, TEST_MODULUS, 52)

# Tiny group over a 31-bit order, for exhaustive binding checks only.
TOY_ORDER = 2**31 - 1
TOY_GROUP = SchnorrGroup(46 * TOY_ORDER + 1, TOY_ORDER, 46)


def group_for_modulus(modulus):
    if modulus == MODULUS:
        return BIG_GROUP
    if modulus == TEST_MODULUS:
        return TEST_GROUP
    if modulus == TOY_ORDER:
        return TOY_GROUP
    raise ValueError("no group backend for modulus %d" % modulus)
