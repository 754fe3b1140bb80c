"""Gadget tests.

Oracles per gadget, checked before any proof machinery runs:
  matmul/matadd/elementprod/transpose: plain integer linear algebra
  rescale: centered division identity wide = div*q + r with |r| <= div/2
  swiglu:  real silu / silu' evaluated with math.*
  rsqrt:   real reciprocal square root
  softmax: digit recombination plus real softmax row values

Then honest roundtrips and a mutation harness over proofs and operands.
"""

import math
import random

import pytest

from zklora.commit import BlindingStream, keygen
from zklora.field import TEST_MODULUS, from_signed, to_signed
from zklora.gadgets import (
    NormalizationBudgetExceeded,
    RangeViolation,
    ShapeMismatch,
    TensorRef,
    commit_tensor,
    normalization_budget,
    prove_elementprod,
    prove_matadd,
    prove_matmul,
    prove_rescale,
    prove_row_slice,
    prove_rsqrt,
    prove_softmax_row,
    prove_swiglu,
    prove_transpose,
    public_const,
    rescale_witness,
    rsqrt_witness,
    softmax_row_witness,
    swiglu_witness,
    verify_elementprod,
    verify_gadget,
    verify_matadd,
    verify_matmul,
    verify_rescale,
    verify_row_slice,
    verify_rsqrt,
    verify_softmax_row,
    verify_swiglu,
    verify_transpose,
)
from zklora.group import TEST_GROUP
from zklora.lookup import ElementNotInTable
from zklora.quantize import QuantParams, QuantizedTensor, centered_divmod
from zklora.sumcheck import RoundPolynomial
from zklora.tables import build_table_set, exp_segment_value, silu_real
from zklora.transcript import Transcript

P = TEST_MODULUS
KEY = keygen(14, b"gadget-tests", TEST_GROUP)
EPS = 1e-5

TINY = QuantParams(
    gamma_fp=2**4, bound=2**6, zeta=2**4, xi=2**9, radices=(8, 8, 8), act_bound=4
)
TINY_TABLES = build_table_set(TINY, EPS, KEY, P)

DESK = QuantParams(
    gamma_fp=2**7,
    bound=2**11,
    zeta=2**7,
    xi=2**21,
    radices=(2**7, 2**7, 2**7),
    act_bound=16,
)
DESK_TABLES = build_table_set(DESK, EPS, KEY, P)


def tr(seed=b""):
    return Transcript(b"gadget-tests", P, seed)


def rng(seed):
    return BlindingStream(seed, P)


def qt(mat, params=TINY, scale=None):
    rows, cols = len(mat), len(mat[0])
    entries = [int(v) for row in mat for v in row]
    return QuantizedTensor.from_field(rows, cols, entries, params, P, scale)


def ct(mat, seed, params=TINY, scale=None):
    return commit_tensor(qt(mat, params, scale), KEY, rng(seed))


def rand_mat(r, c, lo, hi, seed):
    rnd = random.Random(seed)
    return [[rnd.randint(lo, hi) for _ in range(c)] for _ in range(r)]


def int_matmul(a, b):
    return [
        [sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
        for i in range(len(a))
    ]


# ---------------------------------------------------------------------------
# matmul


def test_matmul_roundtrip_and_round_count():
    a = rand_mat(2, 3, -20, 20, 1)
    b = rand_mat(3, 5, -20, 20, 2)
    c = int_matmul(a, b)
    # oracle: the integer product is what the relation should certify
    assert c[0][0] == sum(a[0][k] * b[k][0] for k in range(3))
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    # padded dims: 2x4, 4x8, 2x8 -> 1 + 2 + 3 sumcheck rounds
    assert len(proof.sumcheck.rounds) == 6
    assert verify_matmul(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matmul_vector_output():
    a = rand_mat(4, 4, -9, 9, 3)
    b = [[r] for r in rand_mat(1, 4, -9, 9, 4)[0]]
    c = int_matmul(a, b)
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    assert len(proof.sumcheck.rounds) == 2 + 2 + 0
    assert verify_matmul(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matmul_rejects_wrong_product():
    a = rand_mat(2, 2, -9, 9, 5)
    b = rand_mat(2, 2, -9, 9, 6)
    c = int_matmul(a, b)
    c[1][0] += 1
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    assert not verify_matmul(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matmul_mutated_proof_rejected():
    a = rand_mat(2, 3, -9, 9, 7)
    b = rand_mat(3, 2, -9, 9, 8)
    c = int_matmul(a, b)
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    evals = list(proof.sumcheck.rounds[1].evaluations)
    evals[2] = (evals[2] + 1) % P
    proof.sumcheck.rounds[1] = RoundPolynomial(tuple(evals))
    assert not verify_matmul(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matmul_tampered_opening_rejected():
    a = rand_mat(2, 2, -9, 9, 9)
    b = rand_mat(2, 2, -9, 9, 10)
    c = int_matmul(a, b)
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    vals = list(proof.b_opening.values)
    vals[0] = (vals[0] + 1) % P
    proof.b_opening.values = tuple(vals)
    assert not verify_matmul(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matmul_broadcast_with_public_ones():
    # column of ones times a row vector replicates the row
    mu = rand_mat(1, 8, -9, 9, 11)
    ones = public_const(4, 1, 1, TINY, P, scale=1)
    c = [list(mu[0]) for _ in range(4)]
    tb, tc = ct(mu, b"b"), ct(c, b"c")
    proof = prove_matmul(ones, tb, tc, KEY, tr(), rng(b"op"))
    assert proof.a_opening is None
    assert verify_matmul(ones.ref, tb.ref, tc.ref, proof, KEY, tr())
    # and a wrong replication is caught
    c[2][3] += 1
    tc_bad = ct(c, b"c")
    proof = prove_matmul(ones, tb, tc_bad, KEY, tr(), rng(b"op"))
    assert not verify_matmul(ones.ref, tb.ref, tc_bad.ref, proof, KEY, tr())


def test_matmul_shape_mismatch():
    a, b = ct(rand_mat(2, 3, 0, 5, 12), b"a"), ct(rand_mat(5, 2, 0, 5, 13), b"b")
    c = ct(rand_mat(2, 2, 0, 5, 14), b"c")
    with pytest.raises(ShapeMismatch):
        prove_matmul(a, b, c, KEY, tr(), rng(b"op"))


# ---------------------------------------------------------------------------
# matadd


def test_matadd_both_signs():
    a = rand_mat(3, 5, -50, 50, 20)
    b = rand_mat(3, 5, -50, 50, 21)
    for sign in (1, -1):
        c = [[x + sign * y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
        ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c")
        proof = prove_matadd(ta, tb, tc, sign, KEY, tr(), rng(b"op"))
        assert verify_matadd(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_matadd_rejects_wrong_sum_and_sign():
    a = rand_mat(2, 2, -9, 9, 22)
    b = rand_mat(2, 2, -9, 9, 23)
    c = [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    c[0][1] -= 3
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c")
    proof = prove_matadd(ta, tb, tc, 1, KEY, tr(), rng(b"op"))
    assert not verify_matadd(ta.ref, tb.ref, tc.ref, proof, KEY, tr())
    c[0][1] += 3
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c")
    proof = prove_matadd(ta, tb, tc, 1, KEY, tr(), rng(b"op"))
    proof.sign = -1
    assert not verify_matadd(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


# ---------------------------------------------------------------------------
# elementprod


def test_elementprod_roundtrip():
    a = rand_mat(2, 8, -15, 15, 30)
    b = rand_mat(2, 8, -15, 15, 31)
    c = [[x * y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    ta, tb = ct(a, b"a"), ct(b, b"b")
    tc = ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_elementprod(ta, tb, tc, KEY, tr(), rng(b"op"))
    assert verify_elementprod(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


def test_elementprod_scalar_scale_public_factor():
    # scaling by a public constant fill is the scalar-multiplication path
    a = rand_mat(4, 4, -15, 15, 32)
    scalar = 3
    const = public_const(4, 4, scalar, TINY, P, scale=1)
    c = [[scalar * x for x in row] for row in a]
    ta = ct(a, b"a")
    tc = ct(c, b"c")
    proof = prove_elementprod(ta, const, tc, KEY, tr(), rng(b"op"))
    assert verify_elementprod(ta.ref, const.ref, tc.ref, proof, KEY, tr())
    bad = [[scalar * x for x in row] for row in a]
    bad[3][3] += 1
    tc_bad = ct(bad, b"c")
    proof = prove_elementprod(ta, const, tc_bad, KEY, tr(), rng(b"op"))
    assert not verify_elementprod(ta.ref, const.ref, tc_bad.ref, proof, KEY, tr())


def test_elementprod_rejects_wrong_product():
    a = rand_mat(2, 2, -9, 9, 33)
    b = rand_mat(2, 2, -9, 9, 34)
    c = [[x * y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    c[0][0] += 2
    ta, tb = ct(a, b"a"), ct(b, b"b")
    tc = ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_elementprod(ta, tb, tc, KEY, tr(), rng(b"op"))
    assert not verify_elementprod(ta.ref, tb.ref, tc.ref, proof, KEY, tr())


# ---------------------------------------------------------------------------
# transpose


def test_transpose_roundtrip_and_reject():
    a = rand_mat(2, 8, -40, 40, 40)
    a_t = [[a[i][j] for i in range(2)] for j in range(8)]
    ta, tt = ct(a, b"a"), ct(a_t, b"t")
    proof = prove_transpose(ta, tt, KEY, tr(), rng(b"op"))
    assert verify_transpose(ta.ref, tt.ref, proof, KEY, tr())
    a_t[3][1] += 1
    tt_bad = ct(a_t, b"t")
    proof = prove_transpose(ta, tt_bad, KEY, tr(), rng(b"op"))
    assert not verify_transpose(ta.ref, tt_bad.ref, proof, KEY, tr())


# ---------------------------------------------------------------------------
# row slice


def test_row_slice_roundtrip_every_row():
    a = rand_mat(4, 8, -50, 50, 45)
    ta = ct(a, b"a")
    for row in range(4):
        t_row = ct([a[row]], b"row%d" % row)
        proof = prove_row_slice(ta, row, t_row, KEY, tr(), rng(b"op"))
        assert verify_row_slice(ta.ref, t_row.ref, row, proof, KEY, tr())
        assert proof.row == row


def test_row_slice_rejects_wrong_row_content():
    a = rand_mat(4, 8, -50, 50, 46)
    ta = ct(a, b"a")
    # honest data from row 2 presented as row 1
    t_row = ct([a[2]], b"row")
    proof = prove_row_slice(ta, 1, t_row, KEY, tr(), rng(b"op"))
    assert not verify_row_slice(ta.ref, t_row.ref, 1, proof, KEY, tr())


def test_row_slice_rejects_single_entry_change():
    a = rand_mat(4, 8, -50, 50, 47)
    ta = ct(a, b"a")
    tampered = list(a[3])
    tampered[5] += 1
    t_row = ct([tampered], b"row")
    proof = prove_row_slice(ta, 3, t_row, KEY, tr(), rng(b"op"))
    assert not verify_row_slice(ta.ref, t_row.ref, 3, proof, KEY, tr())


def test_row_slice_verifier_pins_row_index():
    a = rand_mat(4, 8, -50, 50, 48)
    ta = ct(a, b"a")
    t_row = ct([a[2]], b"row")
    proof = prove_row_slice(ta, 2, t_row, KEY, tr(), rng(b"op"))
    # the schedule demands row 1; a proof for row 2 must not satisfy it
    assert not verify_row_slice(ta.ref, t_row.ref, 1, proof, KEY, tr())


def test_row_slice_shape_and_index_guards():
    a = rand_mat(4, 8, -50, 50, 49)
    ta = ct(a, b"a")
    with pytest.raises(ShapeMismatch):
        prove_row_slice(ta, 4, ct([a[0]], b"row"), KEY, tr(), rng(b"op"))
    with pytest.raises(ShapeMismatch):
        prove_row_slice(ta, 0, ct(a[:2], b"wide"), KEY, tr(), rng(b"op"))


# ---------------------------------------------------------------------------
# rescale


def wide_tensor(rows, cols, divisor, seed, params=TINY):
    """Wide values div*q + r with q inside the quotient table domain."""
    rnd = random.Random(seed)
    limit = params.act_bound * params.gamma_fp
    mat = [
        [
            divisor * rnd.randint(-limit, limit - 1)
            + rnd.randint(-(divisor // 2), (divisor - 1) // 2)
            for _ in range(cols)
        ]
        for _ in range(rows)
    ]
    return ct(mat, b"wide" + bytes([seed]), params, scale=params.gamma_fp**2)


def test_rescale_witness_oracle():
    wide = wide_tensor(2, 4, TINY.zeta, 50)
    narrow, resid = rescale_witness(wide.tensor, TINY.zeta, TINY, P, TINY.gamma_fp)
    lift = 1  # zeta / zeta
    for w, q, r in zip(wide.tensor.data, narrow.data, resid.data):
        w_s, q_s, r_s = (to_signed(v, P) for v in (w, q, r))
        assert w_s == TINY.zeta * q_s + r_s // lift * lift
        assert -TINY.zeta // 2 <= r_s < TINY.zeta // 2
        # centered rounding: quotient is the nearest integer
        assert abs(w_s / TINY.zeta - q_s) <= 0.5


def test_rescale_roundtrip_full_and_partial_divisor():
    for divisor in (TINY.zeta, 4):
        wide = wide_tensor(2, 4, divisor, 51 + divisor)
        narrow, resid = rescale_witness(wide.tensor, divisor, TINY, P, TINY.gamma_fp)
        tn = commit_tensor(narrow, KEY, rng(b"n"))
        trs = commit_tensor(resid, KEY, rng(b"r"))
        proof = prove_rescale(
            wide, tn, trs, divisor, TINY_TABLES, KEY, tr(), rng(b"op")
        )
        ok = verify_rescale(
            wide.ref, tn.ref, trs.ref, proof, TINY_TABLES, KEY, tr()
        )
        assert ok
        # scaled residue stays a multiple of zeta/divisor
        for r in trs.tensor.data:
            assert to_signed(r, P) % (TINY.zeta // divisor) == 0


def test_rescale_rejects_shifted_quotient():
    wide = wide_tensor(2, 2, TINY.zeta, 60)
    narrow, resid = rescale_witness(wide.tensor, TINY.zeta, TINY, P, TINY.gamma_fp)
    shifted = [(v + 1) % P for v in narrow.data]
    bad = QuantizedTensor(2, 2, shifted, TINY, P, TINY.gamma_fp)
    tn = commit_tensor(bad, KEY, rng(b"n"))
    trs = commit_tensor(resid, KEY, rng(b"r"))
    proof = prove_rescale(
        wide, tn, trs, TINY.zeta, TINY_TABLES, KEY, tr(), rng(b"op")
    )
    assert not verify_rescale(wide.ref, tn.ref, trs.ref, proof, TINY_TABLES, KEY, tr())


def test_rescale_swapped_residues_rejected():
    # both residues remain table members, so only the linear identity can
    # catch the swap — this isolates the recombination check
    wide = wide_tensor(1, 8, TINY.zeta, 61)
    narrow, resid = rescale_witness(wide.tensor, TINY.zeta, TINY, P, TINY.gamma_fp)
    data = list(resid.data)
    i, j = 0, 1
    while data[i] == data[j]:
        j += 1
    data[i], data[j] = data[j], data[i]
    swapped = QuantizedTensor(1, 8, data, TINY, P, TINY.zeta)
    tn = commit_tensor(narrow, KEY, rng(b"n"))
    trs = commit_tensor(swapped, KEY, rng(b"r"))
    proof = prove_rescale(
        wide, tn, trs, TINY.zeta, TINY_TABLES, KEY, tr(), rng(b"op")
    )
    assert not verify_rescale(wide.ref, tn.ref, trs.ref, proof, TINY_TABLES, KEY, tr())


def test_rescale_out_of_domain_quotient_raises():
    limit = TINY.act_bound * TINY.gamma_fp
    mat = [[TINY.zeta * limit, 0]]
    wide = ct(mat, b"w", scale=TINY.gamma_fp**2)
    with pytest.raises(RangeViolation):
        rescale_witness(wide.tensor, TINY.zeta, TINY, P, TINY.gamma_fp)


# ---------------------------------------------------------------------------
# swiglu


def gate_tensor(rows, cols, seed, params=TINY):
    rnd = random.Random(seed)
    zeta = params.zeta
    limit = params.act_bound * params.gamma_fp
    mat = [
        [
            zeta * rnd.randint(-limit, limit - 1)
            + rnd.randint(-(zeta // 2), zeta // 2 - 1)
            for _ in range(cols)
        ]
        for _ in range(rows)
    ]
    return ct(mat, b"gate" + bytes([seed % 250]), params, scale=params.gamma_fp**2)


def test_swiglu_witness_matches_real_silu():
    g = TINY.gamma_fp
    wide = gate_tensor(2, 8, 70)
    narrow, resid, out = swiglu_witness(wide.tensor, TINY, P)
    for q, y in zip(narrow.data, out.data):
        x = to_signed(q, P) / g
        # table output is the rounded silu value at the narrowed input
        assert abs(to_signed(y, P) / g - silu_real(x)) <= 0.5 / g + 1e-9


def test_swiglu_roundtrip_both_modes():
    for mode in ("phi", "phi_prime"):
        wide = gate_tensor(2, 8, 71)
        narrow, resid, out = swiglu_witness(wide.tensor, TINY, P, mode)
        tn = commit_tensor(narrow, KEY, rng(b"n"))
        trs = commit_tensor(resid, KEY, rng(b"r"))
        to_ = commit_tensor(out, KEY, rng(b"o"))
        proof = prove_swiglu(
            wide, to_, tn, trs, mode, TINY_TABLES, KEY, tr(), rng(b"op")
        )
        assert verify_swiglu(wide.ref, to_.ref, proof, TINY_TABLES, KEY, tr())


def test_swiglu_sub_proofs_individually_rejected():
    wide = gate_tensor(2, 8, 72)
    narrow, resid, out = swiglu_witness(wide.tensor, TINY, P)
    tn = commit_tensor(narrow, KEY, rng(b"n"))
    trs = commit_tensor(resid, KEY, rng(b"r"))
    to_ = commit_tensor(out, KEY, rng(b"o"))

    def fresh_proof():
        return prove_swiglu(
            wide, to_, tn, trs, "phi", TINY_TABLES, KEY, tr(), rng(b"op")
        )

    # activation sub-proof
    proof = fresh_proof()
    evals = list(proof.activation_lookup.sumcheck.rounds[0].evaluations)
    evals[1] = (evals[1] + 1) % P
    proof.activation_lookup.sumcheck.rounds[0] = RoundPolynomial(tuple(evals))
    assert not verify_swiglu(wide.ref, to_.ref, proof, TINY_TABLES, KEY, tr())

    # quantization (recombination) sub-proof
    proof = fresh_proof()
    vals = list(proof.identity_opening.values)
    vals[1] = (vals[1] + 1) % P
    proof.identity_opening.values = tuple(vals)
    assert not verify_swiglu(wide.ref, to_.ref, proof, TINY_TABLES, KEY, tr())

    # residue sub-proof
    proof = fresh_proof()
    evals = list(proof.resid_lookup.sumcheck.rounds[0].evaluations)
    evals[1] = (evals[1] + 1) % P
    proof.resid_lookup.sumcheck.rounds[0] = RoundPolynomial(tuple(evals))
    assert not verify_swiglu(wide.ref, to_.ref, proof, TINY_TABLES, KEY, tr())


def test_swiglu_wrong_activation_output_unprovable():
    wide = gate_tensor(1, 4, 73)
    narrow, resid, out = swiglu_witness(wide.tensor, TINY, P)
    data = list(out.data)
    data[0] = (data[0] + 1) % P
    bad_out = QuantizedTensor(1, 4, data, TINY, P, TINY.gamma_fp)
    tn = commit_tensor(narrow, KEY, rng(b"n"))
    trs = commit_tensor(resid, KEY, rng(b"r"))
    to_ = commit_tensor(bad_out, KEY, rng(b"o"))
    with pytest.raises(ElementNotInTable):
        prove_swiglu(wide, to_, tn, trs, "phi", TINY_TABLES, KEY, tr(), rng(b"op"))


def test_swiglu_out_of_domain_input_raises():
    limit = TINY.act_bound * TINY.gamma_fp
    mat = [[TINY.zeta * limit, 0]]
    wide = ct(mat, b"w", scale=TINY.gamma_fp**2)
    with pytest.raises(RangeViolation):
        swiglu_witness(wide.tensor, TINY, P)


# ---------------------------------------------------------------------------
# rsqrt


def test_rsqrt_witness_matches_real_values():
    g = TINY.gamma_fp
    rnd = random.Random(80)
    vals = [rnd.randint(0, TINY.act_bound * g - 1) for _ in range(8)]
    v = ct([vals], b"v")
    u = rsqrt_witness(v.tensor, TINY, EPS, P)
    for x, y in zip(vals, u.data):
        real = 1.0 / math.sqrt(x / g + EPS)
        # output granularity: half a unit, input granularity: local slope
        slope = 0.5 * (x / g + EPS) ** -1.5
        assert abs(to_signed(y, P) / g - real) <= 0.5 / g + slope / (2 * g) + 1e-9


def test_rsqrt_roundtrip_and_reject():
    rnd = random.Random(81)
    vals = [rnd.randint(1, TINY.act_bound * TINY.gamma_fp - 1) for _ in range(8)]
    v = ct([vals], b"v")
    u_t = commit_tensor(rsqrt_witness(v.tensor, TINY, EPS, P), KEY, rng(b"u"))
    proof = prove_rsqrt(v, u_t, TINY_TABLES, KEY, tr(), rng(b"op"))
    assert verify_rsqrt(v.ref, u_t.ref, proof, TINY_TABLES, KEY, tr())
    evals = list(proof.lookup.sumcheck.rounds[0].evaluations)
    evals[0] = (evals[0] + 1) % P
    proof.lookup.sumcheck.rounds[0] = RoundPolynomial(tuple(evals))
    assert not verify_rsqrt(v.ref, u_t.ref, proof, TINY_TABLES, KEY, tr())


def test_rsqrt_domain_violation():
    v = ct([[-1, 0]], b"v")
    with pytest.raises(RangeViolation):
        rsqrt_witness(v.tensor, TINY, EPS, P)


# ---------------------------------------------------------------------------
# softmax row


def softmax_real(zs, g):
    m = max(zs)
    exps = [math.exp((z - m) / g) for z in zs]
    s = sum(exps)
    return [e / s for e in exps]


def row_setup(zs, seed=b"sm"):
    witness = softmax_row_witness(zs, DESK, P)
    z_t = ct([zs], seed + b"z", DESK)
    p_vals = witness[4]
    p_t = ct([p_vals], seed + b"p", DESK)
    return witness, z_t, p_t


def test_softmax_witness_oracle():
    g = DESK.gamma_fp
    rnd = random.Random(90)
    zs = [rnd.randint(-3 * g, 3 * g) for _ in range(8)]
    witness, _, _ = row_setup(zs)
    xi_prime, digit_cols, partial_cols, chain, p_vals = witness
    # digits recombine to the shifted exponent
    from zklora.quantize import radix_bases

    bases = radix_bases(DESK.radices)
    for i, z in enumerate(zs):
        v = sum(digit_cols[k][i] * bases[k] for k in range(len(bases)))
        assert v == xi_prime - z
    # probabilities approximate the real softmax row
    real = softmax_real(zs, g)
    for p_v, r in zip(p_vals, real):
        assert abs(p_v / g - r) <= 2**-4  # chained rounding at gamma = 2^7
    # row total stays within the declared normalization budget
    drift = abs(sum(p_vals) - g)
    assert drift <= normalization_budget(len(zs), DESK)


def test_softmax_shift_invariance_bit_exact():
    g = DESK.gamma_fp
    rnd = random.Random(91)
    zs = [rnd.randint(-2 * g, 2 * g) for _ in range(8)]
    shifted = [z + 3 * g // 2 for z in zs]
    w1, _, _ = row_setup(zs)
    w2, _, _ = row_setup(shifted)
    assert w1[4] == w2[4]


def test_softmax_row_roundtrip():
    g = DESK.gamma_fp
    rnd = random.Random(92)
    zs = [rnd.randint(-3 * g, 3 * g) for _ in range(8)]
    witness, z_t, p_t = row_setup(zs)
    proof = prove_softmax_row(
        z_t, p_t, witness, DESK_TABLES, KEY, tr(), rng(b"op")
    )
    assert verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())


def test_softmax_row_mutations_rejected():
    g = DESK.gamma_fp
    rnd = random.Random(93)
    zs = [rnd.randint(-3 * g, 3 * g) for _ in range(8)]
    witness, z_t, p_t = row_setup(zs)

    def fresh():
        return prove_softmax_row(
            z_t, p_t, witness, DESK_TABLES, KEY, tr(), rng(b"op")
        )

    # wrong shift constant breaks the digit recombination identity
    proof = fresh()
    proof.xi_prime += 1
    assert not verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())

    # tampered exponent lookup
    proof = fresh()
    evals = list(proof.digit_lookups[1].sumcheck.rounds[0].evaluations)
    evals[1] = (evals[1] + 1) % P
    proof.digit_lookups[1].sumcheck.rounds[0] = RoundPolynomial(tuple(evals))
    assert not verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())

    # tampered product-chain proof
    proof = fresh()
    vals = list(proof.chain_prod_proofs[0].c_opening.values)
    vals[0] = (vals[0] + 1) % P
    proof.chain_prod_proofs[0].c_opening.values = tuple(vals)
    assert not verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())

    # tampered normalization opening
    proof = fresh()
    vals = list(proof.normalization_opening.values)
    vals[0] = (vals[0] + 1) % P
    proof.normalization_opening.values = tuple(vals)
    assert not verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())

    # probabilities swapped for a different row's commitment
    other = ct([[v + 1 for v in witness[4][:-1]] + [witness[4][-1]]], b"q", DESK)
    proof = fresh()
    assert not verify_softmax_row(z_t.ref, other.ref, proof, DESK_TABLES, KEY, tr())


def test_softmax_normalization_budget_enforced(monkeypatch):
    g = DESK.gamma_fp
    rnd = random.Random(94)
    zs = [rnd.randint(-2 * g, 2 * g) for _ in range(8)]
    # a forged shift constant scales every probability down uniformly:
    # digits stay valid, the chain stays consistent, only the row total drops
    honest = softmax_row_witness(zs, DESK, P)
    forged_xi = honest[0] + 3 * g
    from zklora.quantize import mixed_radix_digits
    from zklora.field import from_signed as fs

    digit_cols = [[0] * len(zs) for _ in DESK.radices]
    partial_cols = [[0] * len(zs) for _ in DESK.radices]
    for i, z in enumerate(zs):
        ds = mixed_radix_digits(forged_xi - z, DESK.radices)
        for k, d in enumerate(ds):
            digit_cols[k][i] = d
            partial_cols[k][i] = exp_segment_value(DESK, k, d)
    chain = []
    current = list(partial_cols[0])
    for k in range(1, len(DESK.radices)):
        wide = [c * y for c, y in zip(current, partial_cols[k])]
        narrow, resid = [], []
        for w in wide:
            q, r = centered_divmod(w, DESK.zeta)
            narrow.append(q)
            resid.append(r)
        chain.append((wide, narrow, resid))
        current = narrow
    forged = (forged_xi, digit_cols, partial_cols, chain, current)
    z_t = ct([zs], b"z2", DESK)
    p_t = ct([current], b"p2", DESK)
    with pytest.raises(NormalizationBudgetExceeded):
        prove_softmax_row(z_t, p_t, forged, DESK_TABLES, KEY, tr(), rng(b"op"))
    # a prover that skips its own budget check still gets rejected
    import zklora.gadgets as gadgets_mod

    monkeypatch.setattr(gadgets_mod, "normalization_budget", lambda n, p_: 10**9)
    proof = prove_softmax_row(z_t, p_t, forged, DESK_TABLES, KEY, tr(), rng(b"op"))
    monkeypatch.undo()
    assert not verify_softmax_row(z_t.ref, p_t.ref, proof, DESK_TABLES, KEY, tr())


# ---------------------------------------------------------------------------
# dispatch


def test_verify_gadget_dispatch():
    a = rand_mat(2, 2, -9, 9, 100)
    b = rand_mat(2, 2, -9, 9, 101)
    c = int_matmul(a, b)
    ta, tb, tc = ct(a, b"a"), ct(b, b"b"), ct(c, b"c", scale=TINY.gamma_fp**2)
    proof = prove_matmul(ta, tb, tc, KEY, tr(), rng(b"op"))
    assert verify_gadget(proof, [ta.ref, tb.ref, tc.ref], TINY_TABLES, KEY, tr())

    class Bogus:
        tag = "nonsense"

    with pytest.raises(ValueError):
        verify_gadget(Bogus(), [], TINY_TABLES, KEY, tr())
