"""Lookup argument: a committed secret vector is element-wise contained
in a public table.

The rational identity  sum_i 1/(beta + s_i) = sum_j m_j/(beta + t_j)
(with m the multiplicity vector) is proven by a single sumcheck over the
larger of the two index cubes.  With h the variable-count gap, the
smaller side is lifted to the larger cube: the secret side is
zero-padded behind an indicator column, the table side is replicated.
The combined polynomial, with A_i = 1/(beta+s_i) and B_j = 1/(beta+t_j)
committed as helper columns, is

      alpha   * eq(u,k) * A(k) * (S(k)+beta)
    - alpha   * eq(u,k) * ind(k)
    + alpha^2 * eq(u,k) * B(k) * (T(k)+beta)
    + alpha^3 * A(k)
    - alpha^3 * ratio * m(k) * B(k)

whose total over the cube is alpha^2 exactly when every A/B entry is a
true inverse and the rational identity holds.  Zero-padding and
replication have product-form multilinear extensions, so the verifier
reconstructs every lifted value from openings of the small, unlifted
commitments.
"""

from dataclasses import dataclass

from .commit import commit, open_batch, split_shape, verify_batch
from .field import batch_inverse, inverse
from .mle import eq_eval, eq_table, mle_evaluate, zero_prefix_eval
from .sumcheck import SumcheckClaim, Term, combine, prove_sumcheck, verify_sumcheck


class ElementNotInTable(ValueError):
    def __init__(self, index, value):
        super().__init__("secret entry %d (value %d) not in table" % (index, value))
        self.index = index
        self.value = value


class PoleCollision(RuntimeError):
    pass


MAX_BETA_RETRIES = 3


@dataclass(frozen=True)
class LookupTable:
    """Public table with a binding-only commitment."""

    entries: tuple
    commitment: object
    name: str = "table"

    @property
    def size(self):
        return len(self.entries)

    @property
    def num_vars(self):
        return (self.size - 1).bit_length()


def make_lookup_table(entries, key, name="table"):
    entries = tuple(int(e) for e in entries)
    if len(entries) == 0 or len(entries) & (len(entries) - 1):
        raise ValueError("table size must be a power of two")
    return LookupTable(entries, commit(key, list(entries)), name)


@dataclass(frozen=True)
class SecretVector:
    """Prover-side handle: entries plus the commitment and its blinding."""

    entries: tuple
    commitment: object
    blinding: tuple

    @property
    def num_vars(self):
        return (len(self.entries) - 1).bit_length()


def commit_secret(entries, key, rng):
    entries = tuple(int(e) for e in entries)
    rows, _ = split_shape((len(entries) - 1).bit_length())
    blinding = tuple(rng.vector(rows))
    return SecretVector(entries, commit(key, list(entries), list(blinding)), blinding)


def compute_multiplicities(secret_entries, table):
    index = {v: j for j, v in enumerate(table.entries)}
    counts = [0] * table.size
    for i, s in enumerate(secret_entries):
        j = index.get(s)
        if j is None:
            raise ElementNotInTable(i, s)
        counts[j] += 1
    return counts


@dataclass
class LookupProof:
    secret_vars: int
    beta_retries: int
    multiplicity_commitment: object
    inverse_secret_commitment: object
    inverse_table_commitment: object
    sumcheck: object
    secret_values: tuple  # openings of (A, S) on the secret cube
    secret_opening: object
    table_values: tuple  # openings of (m, B, T) on the table cube
    table_opening: object


def _terms(alpha, ratio, modulus):
    # factor indices: 0 eq, 1 A, 2 S+beta, 3 ind, 4 B, 5 T+beta, 6 m
    a2 = alpha * alpha % modulus
    a3 = a2 * alpha % modulus
    return [
        Term(alpha, (0, 1, 2)),
        Term((-alpha) % modulus, (0, 3)),
        Term(a2, (0, 4, 5)),
        Term(a3, (1,)),
        Term((-a3 * ratio) % modulus, (6, 4)),
    ]


def _absorb_setup(tr, group, table, secret_commitment, m_commitment):
    tr.append(b"lookup/table", table.commitment.serialize(group))
    tr.append(b"lookup/secret", secret_commitment.serialize(group))
    tr.append(b"lookup/mult", m_commitment.serialize(group))


def _replay_beta(tr, retries):
    beta = tr.challenge(b"lookup/beta")
    for i in range(retries):
        tr.append(b"lookup/beta-retry", i + 1)
        beta = tr.challenge(b"lookup/beta")
    return beta


def prove_lookup(secret, multiplicities, table, key, tr, rng):
    """Prove every entry of `secret` appears in `table`.

    `multiplicities` must be the exact occurrence counts
    (compute_multiplicities); the claim is unprovable otherwise.
    """
    p = tr.modulus
    group = key.group
    entries = secret.entries
    d, n = len(entries), table.size
    if d == 0 or d & (d - 1):
        raise ValueError("secret length must be a power of two")
    if len(multiplicities) != n:
        raise ValueError("multiplicity vector must match the table size")

    m_rows, _ = split_shape(table.num_vars)
    m_blinding = rng.vector(m_rows)
    m_commitment = commit(key, list(multiplicities), m_blinding)
    _absorb_setup(tr, group, table, secret.commitment, m_commitment)

    poles = {(-s) % p for s in entries} | {(-t) % p for t in table.entries}
    retries = 0
    beta = tr.challenge(b"lookup/beta")
    while beta in poles:
        retries += 1
        if retries > MAX_BETA_RETRIES:
            raise PoleCollision("challenge hit a pole %d times" % retries)
        tr.append(b"lookup/beta-retry", retries)
        beta = tr.challenge(b"lookup/beta")

    inv_secret = batch_inverse([(beta + s) % p for s in entries], p)
    inv_table = batch_inverse([(beta + t) % p for t in table.entries], p)
    a_rows, _ = split_shape(secret.num_vars)
    a_blinding = rng.vector(a_rows)
    a_commitment = commit(key, inv_secret, a_blinding)
    b_commitment = commit(key, inv_table)
    tr.append(b"lookup/inv-secret", a_commitment.serialize(group))
    tr.append(b"lookup/inv-table", b_commitment.serialize(group))

    alpha = tr.challenge(b"lookup/alpha")
    big = max(d, n)
    num_vars = (big - 1).bit_length()
    u = tr.challenge_vector(b"lookup/u", num_vars)
    ratio = inverse(big // n, p)

    if d <= n:
        a_full = inv_secret + [0] * (n - d)
        s_full = list(entries) + [0] * (n - d)
        ind = [1] * d + [0] * (n - d)
        b_full, t_full, m_full = (
            inv_table,
            list(table.entries),
            list(multiplicities),
        )
    else:
        copies = d // n
        a_full, s_full, ind = inv_secret, list(entries), [1] * d
        b_full = inv_table * copies
        t_full = list(table.entries) * copies
        m_full = list(multiplicities) * copies

    claim = SumcheckClaim(
        alpha * alpha % p,
        [
            eq_table(u, p),
            a_full,
            [(s + beta) % p for s in s_full],
            ind,
            b_full,
            [(t + beta) % p for t in t_full],
            m_full,
        ],
        _terms(alpha, ratio, p),
        3,
        p,
    )
    sc_proof, point = prove_sumcheck(claim, tr)

    secret_point = point[num_vars - secret.num_vars :]
    table_point = point[num_vars - table.num_vars :]
    secret_values, secret_opening = open_batch(
        key,
        [inv_secret, list(entries)],
        [list(a_blinding), list(secret.blinding)],
        secret_point,
        tr,
        rng,
    )
    zero_blind = [0] * m_rows
    table_values, table_opening = open_batch(
        key,
        [list(multiplicities), inv_table, list(table.entries)],
        [list(m_blinding), zero_blind, zero_blind],
        table_point,
        tr,
        rng,
    )
    return LookupProof(
        secret.num_vars,
        retries,
        m_commitment,
        a_commitment,
        b_commitment,
        sc_proof,
        tuple(secret_values),
        secret_opening,
        tuple(table_values),
        table_opening,
    )


def verify_lookup(secret_commitment, table, proof, key, tr):
    """Verify a lookup proof against the secret commitment and public table."""
    p = tr.modulus
    group = key.group
    n = table.size
    d_vars = proof.secret_vars
    n_vars = table.num_vars
    num_vars = max(d_vars, n_vars)
    if proof.beta_retries > MAX_BETA_RETRIES:
        return False

    _absorb_setup(tr, group, table, secret_commitment, proof.multiplicity_commitment)
    beta = _replay_beta(tr, proof.beta_retries)
    tr.append(b"lookup/inv-secret", proof.inverse_secret_commitment.serialize(group))
    tr.append(b"lookup/inv-table", proof.inverse_table_commitment.serialize(group))
    alpha = tr.challenge(b"lookup/alpha")
    u = tr.challenge_vector(b"lookup/u", num_vars)
    ratio = inverse((1 << num_vars) // n, p)

    terms = _terms(alpha, ratio, p)
    ok, point, expected = verify_sumcheck(
        alpha * alpha % p, terms, 3, num_vars, proof.sumcheck, tr
    )
    if not ok:
        return False

    secret_point = point[num_vars - d_vars :]
    table_point = point[num_vars - n_vars :]
    if not verify_batch(
        key,
        [proof.inverse_secret_commitment, secret_commitment],
        secret_point,
        list(proof.secret_values),
        proof.secret_opening,
        tr,
    ):
        return False
    if not verify_batch(
        key,
        [
            proof.multiplicity_commitment,
            proof.inverse_table_commitment,
            table.commitment,
        ],
        table_point,
        list(proof.table_values),
        proof.table_opening,
        tr,
    ):
        return False

    a_open, s_open = proof.secret_values
    m_open, b_open, t_open = proof.table_values
    secret_gap = num_vars - d_vars
    prefix = zero_prefix_eval(point, secret_gap, p) if secret_gap else 1
    values = [
        eq_eval(u, point, p),
        prefix * a_open % p,
        (prefix * s_open + beta) % p,
        prefix,
        b_open,
        (t_open + beta) % p,
        m_open,
    ]
    return combine(terms, values, p) == expected
