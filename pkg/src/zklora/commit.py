"""Hyrax-style vector commitments over an MLE table with opening proofs.

The 2^n table is laid out as 2^ceil(n/2) rows of 2^floor(n/2) entries;
each row gets a Pedersen multi-commitment.  An evaluation at point x
splits x into row and column halves: the verifier combines row
commitments with the row equality-kernel weights and the prover supplies
a sigma protocol for the inner product of the combined row with the
column weights.
"""

import hashlib
from dataclasses import dataclass

from .field import InversionOfZero  # noqa: F401  (re-export convenience)
from .mle import eq_table


class KeyTooSmall(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def split_shape(num_vars):
    """(row count, column count) of the committed matrix layout."""
    row_vars = (num_vars + 1) // 2
    return 1 << row_vars, 1 << (num_vars - row_vars)


@dataclass(frozen=True)
class CommitmentKey:
    group: object
    max_vars: int
    generators: tuple
    blinding_generator: int
    seed: bytes

    def row_width(self, num_vars):
        return split_shape(num_vars)[1]


def keygen(max_vars, seed, group):
    """Deterministic key: one generator per column plus a blinding one."""
    if max_vars > 30:
        raise ValueError("max_vars above 30 unsupported")
    width = split_shape(max_vars)[1]
    gens = tuple(group.derive_element(seed + b"/gen", i) for i in range(width))
    blind = group.derive_element(seed + b"/blind", 1 << 32)
    return CommitmentKey(group, max_vars, gens, blind, seed)


@dataclass(frozen=True)
class Commitment:
    num_vars: int
    rows: tuple

    def serialize(self, group):
        out = [self.num_vars.to_bytes(1, "little")]
        out += [group.encode(r) for r in self.rows]
        return b"".join(out)


def combine_commitments(group, commitments, coefficients):
    """Commitment to sum_j c_j * table_j, via row-wise exponentiation.

    Valid because each row is Pedersen: the blinding of the result is the
    same linear combination of the inputs' blindings.
    """
    first = commitments[0]
    for c in commitments[1:]:
        if c.num_vars != first.num_vars:
            raise DimensionMismatch("cannot combine different shapes")
    rows = []
    for i in range(len(first.rows)):
        acc = group.identity
        for com, coeff in zip(commitments, coefficients):
            if coeff == 1:
                acc = group.mul(acc, com.rows[i])
            elif coeff:
                acc = group.mul(acc, group.exp(com.rows[i], coeff))
        rows.append(acc)
    return Commitment(first.num_vars, tuple(rows))


def _row_commit(key, row, blinding):
    group = key.group
    acc = group.exp(key.blinding_generator, blinding) if blinding else group.identity
    for g, v in zip(key.generators, row):
        if v == 0:
            continue
        acc = group.mul(acc, g if v == 1 else group.exp(g, v))
    return acc


def commit(key, table, blinding=None):
    """Row-wise Pedersen commitments; blinding=None means binding-only mode."""
    num_vars = (len(table) - 1).bit_length()
    if len(table) != 1 << num_vars:
        raise ValueError("table length must be a power of two")
    rows, cols = split_shape(num_vars)
    if cols > len(key.generators):
        raise KeyTooSmall("key supports %d columns, need %d" % (len(key.generators), cols))
    if blinding is None:
        blinding = [0] * rows
    if len(blinding) != rows:
        raise DimensionMismatch("need %d blinding scalars" % rows)
    return Commitment(
        num_vars,
        tuple(
            _row_commit(key, table[i * cols : (i + 1) * cols], blinding[i])
            for i in range(rows)
        ),
    )


class BlindingStream:
    """Deterministic blinding scalars so proofs are seed-reproducible."""

    __slots__ = ("seed", "counter", "modulus")

    def __init__(self, seed, modulus):
        self.seed = seed
        self.counter = 0
        self.modulus = modulus

    def next(self):
        raw = hashlib.shake_256(
            self.seed + b"/blind" + self.counter.to_bytes(8, "little")
        ).digest(64)
        self.counter += 1
        return int.from_bytes(raw, "little") % self.modulus

    def vector(self, count):
        return [self.next() for _ in range(count)]


@dataclass(frozen=True)
class OpeningProof:
    value: int
    blinded_row: int
    blinded_value: int
    responses: tuple
    blinding_response: int


def _combined_secrets(key, tables, blindings, batch_coeff, rows, cols, modulus):
    table = [0] * (rows * cols)
    blind = [0] * rows
    coeff = 1
    for t, b in zip(tables, blindings):
        for i, v in enumerate(t):
            table[i] = (table[i] + coeff * v) % modulus
        if b is not None:
            for i, s in enumerate(b):
                blind[i] = (blind[i] + coeff * s) % modulus
        coeff = coeff * batch_coeff % modulus
    return table, blind


def open_batch(key, tables, blindings, point, tr, rng):
    """Open several same-shape commitments at one point with one sigma proof.

    The individual values are appended to the transcript before the batch
    coefficient is drawn, so each is bound, not just their combination.
    """
    modulus = tr.modulus
    group = key.group
    num_vars = len(point)
    rows, cols = split_shape(num_vars)
    values = []
    for t in tables:
        if len(t) != rows * cols:
            raise DimensionMismatch("table does not match point arity")
    row_pt, col_pt = point[: (num_vars + 1) // 2], point[(num_vars + 1) // 2 :]
    left = eq_table(row_pt, modulus)
    right = eq_table(col_pt, modulus)
    for t in tables:
        combined = [0] * cols
        for i, w in enumerate(left):
            if w == 0:
                continue
            base = i * cols
            for j in range(cols):
                combined[j] = (combined[j] + w * t[base + j]) % modulus
        values.append(sum(c * r for c, r in zip(combined, right)) % modulus)
    for r in point:
        tr.append(b"open/point", r)
    for y in values:
        tr.append(b"open/value", y)
    batch = tr.challenge(b"open/batch") if len(tables) > 1 else 1
    table, blind = _combined_secrets(
        key, tables, blindings, batch, rows, cols, modulus
    )
    # Row-combined secret vector and its blinding under the left weights.
    t_vec = [0] * cols
    for i, w in enumerate(left):
        base = i * cols
        for j in range(cols):
            t_vec[j] = (t_vec[j] + w * table[base + j]) % modulus
    b_comb = sum(w * b for w, b in zip(left, blind)) % modulus
    y_comb = sum(c * r for c, r in zip(t_vec, right)) % modulus
    nonce = rng.vector(cols)
    nonce_blind = rng.next()
    blinded_row = _row_commit(key, nonce, nonce_blind)
    blinded_value = sum(s * r for s, r in zip(nonce, right)) % modulus
    tr.append(b"open/sigma", group.encode(blinded_row))
    tr.append(b"open/sigma-value", blinded_value)
    c = tr.challenge(b"open/challenge")
    responses = tuple((s + c * t) % modulus for s, t in zip(nonce, t_vec))
    blinding_response = (nonce_blind + c * b_comb) % modulus
    return values, OpeningProof(
        y_comb, blinded_row, blinded_value, responses, blinding_response
    )


def verify_batch(key, commitments, point, values, proof, tr):
    modulus = tr.modulus
    group = key.group
    num_vars = len(point)
    rows, cols = split_shape(num_vars)
    for c in commitments:
        if c.num_vars != num_vars or len(c.rows) != rows:
            return False
    if len(proof.responses) != cols or cols > len(key.generators):
        return False
    for r in point:
        tr.append(b"open/point", r)
    for y in values:
        tr.append(b"open/value", y)
    batch = tr.challenge(b"open/batch") if len(commitments) > 1 else 1
    # Homomorphic row-wise combination of the batched commitments.
    combined_rows = list(commitments[0].rows)
    coeff = batch
    for c in commitments[1:]:
        combined_rows = [
            group.mul(acc, group.exp(r, coeff))
            for acc, r in zip(combined_rows, c.rows)
        ]
        coeff = coeff * batch % modulus
    row_pt, col_pt = point[: (num_vars + 1) // 2], point[(num_vars + 1) // 2 :]
    left = eq_table(row_pt, modulus)
    right = eq_table(col_pt, modulus)
    folded = group.identity
    for w, r in zip(left, combined_rows):
        folded = group.mul(folded, group.exp(r, w))
    coeff = 1
    y_comb = 0
    for y in values:
        y_comb = (y_comb + coeff * y) % modulus
        coeff = coeff * batch % modulus
    if y_comb != proof.value:
        return False
    tr.append(b"open/sigma", group.encode(proof.blinded_row))
    tr.append(b"open/sigma-value", proof.blinded_value)
    c = tr.challenge(b"open/challenge")
    lhs = _row_commit(key, proof.responses, proof.blinding_response)
    rhs = group.mul(proof.blinded_row, group.exp(folded, c))
    if lhs != rhs:
        return False
    lhs_val = sum(z * r for z, r in zip(proof.responses, right)) % modulus
    rhs_val = (proof.blinded_value + c * proof.value) % modulus
    return lhs_val == rhs_val


def open_at(key, table, blinding, point, tr, rng):
    """Single-polynomial opening; see open_batch."""
    values, proof = open_batch(key, [table], [blinding], point, tr, rng)
    return values[0], proof


def verify_opening(key, commitment, point, value, proof, tr):
    return verify_batch(key, [commitment], point, [value], proof, tr)
