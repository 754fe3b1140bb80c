"""Lookup argument tests.

Oracle: the rational identity itself — for honest multiplicities,
sum_i 1/(beta+s_i) equals sum_j m_j/(beta+t_j) for any beta off the
poles.  Proof-level tests exercise both containment directions
(secret shorter and longer than the table) plus a mutation harness.
"""

import random

import pytest

from zklora.commit import BlindingStream, keygen
from zklora.field import TEST_MODULUS, batch_inverse
from zklora.group import TEST_GROUP
from zklora.lookup import (
    ElementNotInTable,
    LookupProof,
    PoleCollision,
    commit_secret,
    compute_multiplicities,
    make_lookup_table,
    prove_lookup,
    verify_lookup,
)
from zklora.sumcheck import RoundPolynomial, SumcheckProof
from zklora.transcript import Transcript

P = TEST_MODULUS
KEY = keygen(10, b"lookup-tests", TEST_GROUP)


def rational_sides(secret, table_entries, counts, beta):
    left = sum(batch_inverse([(beta + s) % P for s in secret], P)) % P
    invs = batch_inverse([(beta + t) % P for t in table_entries], P)
    right = sum(c * v for c, v in zip(counts, invs)) % P
    return left, right


def test_rational_identity_oracle():
    rng = random.Random(5)
    for _ in range(50):
        table_entries = rng.sample(range(P), 8)
        secret = [rng.choice(table_entries) for _ in range(16)]
        counts = [secret.count(t) for t in table_entries]
        beta = rng.randrange(P)
        while (-beta) % P in set(secret) | set(table_entries):
            beta = rng.randrange(P)
        left, right = rational_sides(secret, table_entries, counts, beta)
        assert left == right
        # and it breaks when one secret entry leaves the table
        bad = list(secret)
        bad[0] = (bad[0] + 1) % P
        left, right = rational_sides(bad, table_entries, counts, beta)
        assert left != right


def test_compute_multiplicities():
    table = make_lookup_table([10, 20, 30, 40], KEY)
    counts = compute_multiplicities([20, 20, 40, 10], table)
    assert counts == [1, 2, 0, 1]
    with pytest.raises(ElementNotInTable) as info:
        compute_multiplicities([20, 99], table)
    assert info.value.index == 1


def roundtrip(secret_entries, table_entries, seed=b"lk", tamper=None):
    rng = BlindingStream(b"blind" + seed, P)
    table = make_lookup_table(table_entries, KEY)
    secret = commit_secret(secret_entries, KEY, rng)
    counts = compute_multiplicities(secret.entries, table)
    proof = prove_lookup(
        secret, counts, table, KEY, Transcript(b"lk", P, seed), rng
    )
    if tamper is not None:
        proof = tamper(proof)
    ok = verify_lookup(
        secret.commitment, table, proof, KEY, Transcript(b"lk", P, seed)
    )
    return ok, proof


def test_secret_smaller_than_table():
    rng = random.Random(1)
    table_entries = [rng.randrange(1, 1 << 16) for _ in range(32)]
    secret_entries = [rng.choice(table_entries) for _ in range(4)]
    ok, proof = roundtrip(secret_entries, table_entries)
    assert ok
    assert len(proof.sumcheck.rounds) == 5  # max(log 4, log 32)


def test_secret_larger_than_table():
    rng = random.Random(2)
    table_entries = [rng.randrange(1, 1 << 16) for _ in range(4)]
    secret_entries = [rng.choice(table_entries) for _ in range(32)]
    ok, proof = roundtrip(secret_entries, table_entries, seed=b"big")
    assert ok
    assert len(proof.sumcheck.rounds) == 5


def test_secret_equal_size_to_table():
    table_entries = list(range(100, 108))
    secret_entries = [100, 107, 103, 103, 100, 101, 106, 105]
    ok, _ = roundtrip(secret_entries, table_entries, seed=b"eq")
    assert ok


def test_single_entry_secret():
    table_entries = list(range(50, 66))
    ok, _ = roundtrip([57], table_entries, seed=b"one")
    assert ok


def test_repeated_single_value():
    # duplicates concentrate all multiplicity on one slot
    table_entries = list(range(16))
    ok, _ = roundtrip([7] * 16, table_entries, seed=b"dup")
    assert ok


def test_out_of_table_secret_fails_to_prove():
    # An entry outside the table makes honest multiplicities impossible;
    # forcing stale counts must yield a rejected proof.
    rng = BlindingStream(b"oot", P)
    table = make_lookup_table(list(range(8)), KEY)
    secret = commit_secret([1, 2, 3, 99], KEY, rng)
    counts = [0, 1, 1, 1, 0, 0, 0, 0]  # pretends 99 was a 4th in-table hit
    counts[4] = 1
    proof = prove_lookup(
        secret, counts, table, KEY, Transcript(b"lk", P, b"oot"), rng
    )
    assert not verify_lookup(
        secret.commitment, table, proof, KEY, Transcript(b"lk", P, b"oot")
    )


def test_wrong_multiplicities_rejected():
    rng = BlindingStream(b"wm", P)
    table = make_lookup_table(list(range(8)), KEY)
    secret = commit_secret([1, 2, 3, 4], KEY, rng)
    counts = compute_multiplicities(secret.entries, table)
    counts[1], counts[5] = counts[5], counts[1]  # shuffle mass between slots
    proof = prove_lookup(
        secret, counts, table, KEY, Transcript(b"lk", P, b"wm"), rng
    )
    assert not verify_lookup(
        secret.commitment, table, proof, KEY, Transcript(b"lk", P, b"wm")
    )


def test_proof_mutations_rejected():
    rng = random.Random(9)
    table_entries = [rng.randrange(1, 1 << 12) for _ in range(16)]
    secret_entries = [rng.choice(table_entries) for _ in range(8)]

    def flip_eval(proof):
        rounds = list(proof.sumcheck.rounds)
        evals = list(rounds[0].evaluations)
        evals[1] = (evals[1] + 1) % P
        rounds[0] = RoundPolynomial(tuple(evals))
        proof.sumcheck = SumcheckProof(tuple(rounds), proof.sumcheck.final_values)
        return proof

    def shift_secret_value(proof):
        vals = list(proof.secret_values)
        vals[0] = (vals[0] + 1) % P
        proof.secret_values = tuple(vals)
        return proof

    def shift_table_value(proof):
        vals = list(proof.table_values)
        vals[2] = (vals[2] + 1) % P
        proof.table_values = tuple(vals)
        return proof

    def lie_about_retries(proof):
        proof.beta_retries = proof.beta_retries + 1
        return proof

    for tamper in (flip_eval, shift_secret_value, shift_table_value, lie_about_retries):
        ok, _ = roundtrip(secret_entries, table_entries, seed=b"mut", tamper=tamper)
        assert not ok, tamper.__name__


def test_swapped_secret_commitment_rejected():
    # proof for one secret must not verify against another's commitment
    rng = BlindingStream(b"swap", P)
    table = make_lookup_table(list(range(16)), KEY)
    secret_a = commit_secret([1, 2, 3, 4], KEY, rng)
    secret_b = commit_secret([5, 6, 7, 8], KEY, rng)
    counts = compute_multiplicities(secret_a.entries, table)
    proof = prove_lookup(
        secret_a, counts, table, KEY, Transcript(b"lk", P, b"swap"), rng
    )
    assert verify_lookup(
        secret_a.commitment, table, proof, KEY, Transcript(b"lk", P, b"swap")
    )
    assert not verify_lookup(
        secret_b.commitment, table, proof, KEY, Transcript(b"lk", P, b"swap")
    )


def test_beta_retry_replay_matches():
    # Verifier replays however many retries the proof declares; an honest
    # zero-retry proof still verifies when the field makes collisions
    # astronomically unlikely, and the retry counter is transcript-bound.
    ok, proof = roundtrip([3, 1, 2, 0], list(range(8)), seed=b"retry")
    assert ok
    assert proof.beta_retries == 0
