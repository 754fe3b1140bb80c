"""Fiat-Shamir transcript with domain-separated labels.

The transcript keeps a rolling shake-256 state: every append hashes the
previous digest together with a length-framed (label, data) record, and
every challenge squeezes 64 bytes which are reduced mod p and then fed
back into the state.  Identical append histories give identical
challenge streams.
"""

import hashlib


def _frame(label, data):
    return (
        len(label).to_bytes(2, "little")
        + label
        + len(data).to_bytes(8, "little")
        + data
    )


class Transcript:
    __slots__ = ("state", "modulus", "log")

    def __init__(self, domain, modulus, seed=b""):
        self.modulus = modulus
        self.log = []
        self.state = hashlib.shake_256(
            _frame(b"domain", domain) + _frame(b"seed", seed)
        ).digest(64)

    def append(self, label, data):
        if isinstance(data, int):
            data = data.to_bytes((data.bit_length() + 7) // 8 or 1, "little")
        self.log.append((label, len(data)))
        self.state = hashlib.shake_256(self.state + _frame(label, data)).digest(64)

    def challenge(self, label):
        """Draw one field element; hash-then-reduce over a 512-bit squeeze."""
        raw = hashlib.shake_256(self.state + _frame(b"challenge", label)).digest(64)
        self.state = hashlib.shake_256(self.state + _frame(b"drawn", raw)).digest(64)
        return int.from_bytes(raw, "little") % self.modulus

    def challenge_vector(self, label, count):
        return [self.challenge(label + b"/%d" % i) for i in range(count)]

    def fork(self, label):
        """Child transcript bound to the current state, for gadget scoping."""
        child = Transcript.__new__(Transcript)
        child.modulus = self.modulus
        child.log = []
        child.state = hashlib.shake_256(self.state + _frame(b"fork", label)).digest(64)
        return child
