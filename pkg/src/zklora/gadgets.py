"""Proof gadgets for every primitive tensor operation in the pipeline.

Each gadget proves one relation among committed tensors:

  matmul       C = A @ B over the field (sumcheck over all three index blocks)
  matadd       C = A + sign * B (one random-point opening identity)
  elementprod  C = A * B entry-wise (eq-kernel sumcheck against an opening of C)
  transpose    A2 = A^T (openings with swapped coordinate blocks)
  rescale      wide = div * narrow + resid, quotient and residue range-checked
  swiglu       activation via pair lookup plus quantization/residue sub-proofs
  rsqrt        reciprocal square root via pair lookup
  softmax_row  digit decomposition + K exponent lookups + product chain
               + normalization, for one row

Operands enter as TensorRef (what the verifier holds): a commitment, or a
public structural constant (constant fill / scaled identity) the verifier
evaluates itself.  Cross-gadget binding is by commitment identity: two
gadgets sharing a tensor reference the same commitment.
"""

import math
from dataclasses import dataclass

from .commit import combine_commitments, commit, open_batch, split_shape, verify_batch
from .field import from_signed, inverse, to_signed
from .lookup import SecretVector, compute_multiplicities, prove_lookup, verify_lookup
from .mle import eq_eval, eq_table
from .quantize import (
    DigitOutOfRange,
    QuantizedTensor,
    centered_divmod,
    mixed_radix_digits,
    radix_bases,
    round_half_away,
)
from .sumcheck import SumcheckClaim, Term, prove_sumcheck, verify_sumcheck
from .tables import exp_segment_value, rsqrt_value, silu_deriv_value, silu_value


class ShapeMismatch(ValueError):
    pass


class RangeViolation(ValueError):
    pass


class NormalizationBudgetExceeded(ValueError):
    pass


# ---------------------------------------------------------------------------
# operand plumbing


@dataclass(frozen=True)
class TensorRef:
    """Verifier-side handle on a gadget operand.

    kind "committed": `commitment` holds the padded row-major table.
    kind "const":     constant fill `value` on an unpadded power-of-two
                      shape; MLE is the constant itself.
    kind "identity":  `value` * I on a square power-of-two shape; MLE is
                      value * eq(row_point, col_point).
    """

    kind: str
    row_vars: int
    col_vars: int
    commitment: object = None
    value: int = 0

    @property
    def num_vars(self):
        return self.row_vars + self.col_vars

    def digest(self, group):
        head = bytes([self.row_vars, self.col_vars])
        if self.kind == "committed":
            return b"com:" + head + self.commitment.serialize(group)
        return (
            self.kind.encode()
            + b":"
            + head
            + self.value.to_bytes(32, "little", signed=False)
        )

    def evaluate_public(self, row_point, col_point, modulus):
        if self.kind == "const":
            return self.value % modulus
        if self.kind == "identity":
            return self.value * eq_eval(row_point, col_point, modulus) % modulus
        raise ValueError("operand is not public")


@dataclass(frozen=True)
class ProverTensor:
    """Prover-side operand: the plaintext tensor plus its reference."""

    tensor: QuantizedTensor
    ref: TensorRef
    blinding: tuple = ()

    def flat(self):
        return list(self.tensor.data)

    def as_secret_vector(self):
        if self.ref.kind != "committed":
            raise ValueError("public operands have no secret vector")
        return SecretVector(tuple(self.tensor.data), self.ref.commitment, self.blinding)


def _tensor_vars(tensor):
    return (
        (tensor.padded_rows - 1).bit_length(),
        (tensor.padded_cols - 1).bit_length(),
    )


def commit_tensor(tensor, key, rng=None):
    """Commit a tensor; rng None gives the binding-only zero-blinding mode."""
    rv, cv = _tensor_vars(tensor)
    rows, _ = split_shape(rv + cv)
    blinding = tuple(rng.vector(rows)) if rng is not None else ()
    com = commit(key, list(tensor.data), list(blinding) if blinding else None)
    return ProverTensor(
        tensor, TensorRef("committed", rv, cv, commitment=com), blinding
    )


def public_const(rows, cols, value, params, modulus, scale=None):
    """Structural constant matrix every verifier can derive from config."""
    if rows & (rows - 1) or cols & (cols - 1):
        raise ShapeMismatch("public constants must have power-of-two shape")
    value = value % modulus
    qt = QuantizedTensor.from_field(
        rows, cols, [value] * (rows * cols), params, modulus, scale
    )
    rv, cv = _tensor_vars(qt)
    return ProverTensor(qt, TensorRef("const", rv, cv, value=value))


def public_identity(n, value, params, modulus, scale=None):
    if n & (n - 1):
        raise ShapeMismatch("public identity must have power-of-two size")
    value = value % modulus
    entries = [value if i == j else 0 for i in range(n) for j in range(n)]
    qt = QuantizedTensor.from_field(n, n, entries, params, modulus, scale)
    rv, cv = _tensor_vars(qt)
    return ProverTensor(qt, TensorRef("identity", rv, cv, value=value))


@dataclass
class Opening:
    values: tuple
    proof: object


def _open_tables(key, prover_tensors, point, tr, rng):
    """Batch-open the committed tensors of one shape at one point."""
    tables = [pt.flat() for pt in prover_tensors]
    blindings = []
    for pt in prover_tensors:
        rows, _ = split_shape(pt.ref.num_vars)
        blindings.append(list(pt.blinding) if pt.blinding else [0] * rows)
    values, proof = open_batch(key, tables, blindings, point, tr, rng)
    return Opening(tuple(values), proof)


def _verify_open(key, refs, point, opening, tr):
    if len(opening.values) != len(refs):
        return False
    return verify_batch(
        key,
        [r.commitment for r in refs],
        point,
        list(opening.values),
        opening.proof,
        tr,
    )


def _absorb_operands(tr, tag, refs, group):
    tr.append(b"gadget/tag", tag)
    for ref in refs:
        tr.append(b"gadget/operand", ref.digest(group))


def _operand_value(ref, opening_iter, row_point, col_point, modulus):
    """Final MLE value of an operand: next opened value, or public formula."""
    if ref.kind == "committed":
        return next(opening_iter)
    return ref.evaluate_public(row_point, col_point, modulus)


# ---------------------------------------------------------------------------
# matmul


@dataclass
class MatmulProof:
    tag = "matmul"
    dims: tuple  # (d0, d1, d2) variable counts
    sumcheck: object
    a_opening: object  # Opening or None for public operands
    b_opening: object
    c_opening: object


def _replicated_tables(a_flat, b_flat, c_flat, eq_u, eq_v, d0, d1, d2, modulus):
    eq_uv = []
    a_rep = []
    b_rep = []
    c_rep = []
    for u in range(1 << d0):
        base_a = u << d1
        base_c = u << d2
        equ = eq_u[u]
        for w in range(1 << d1):
            a_val = a_flat[base_a | w]
            base_b = w << d2
            for v in range(1 << d2):
                eq_uv.append(equ * eq_v[v] % modulus)
                a_rep.append(a_val)
                b_rep.append(b_flat[base_b | v])
                c_rep.append(c_flat[base_c | v])
    return eq_uv, a_rep, b_rep, c_rep


def prove_matmul(a, b, c, key, tr, rng):
    """Prove c = a @ b over the field, all shapes padded powers of two."""
    p = tr.modulus
    d0, d1 = a.ref.row_vars, a.ref.col_vars
    d1b, d2 = b.ref.row_vars, b.ref.col_vars
    if d1 != d1b or (c.ref.row_vars, c.ref.col_vars) != (d0, d2):
        raise ShapeMismatch(
            "matmul shapes (%d,%d)x(%d,%d)->(%d,%d) do not conform"
            % (d0, d1, d1b, d2, c.ref.row_vars, c.ref.col_vars)
        )
    _absorb_operands(tr, b"matmul", [a.ref, b.ref, c.ref], key.group)
    r_u = tr.challenge_vector(b"matmul/r_u", d0)
    r_v = tr.challenge_vector(b"matmul/r_v", d2)

    eq_u = eq_table(r_u, p)
    eq_v = eq_table(r_v, p)
    tables = _replicated_tables(
        a.flat(), b.flat(), c.flat(), eq_u, eq_v, d0, d1, d2, p
    )
    terms = [Term(1, (0, 1, 2)), Term((-inverse(1 << d1, p)) % p, (0, 3))]
    claim = SumcheckClaim(0, list(tables), terms, 3, p)
    sc_proof, point = prove_sumcheck(claim, tr)
    rho_u, rho_w, rho_v = point[:d0], point[d0 : d0 + d1], point[d0 + d1 :]

    def maybe_open(pt, opening_point):
        if pt.ref.kind != "committed":
            return None
        return _open_tables(key, [pt], opening_point, tr, rng)

    return MatmulProof(
        dims=(d0, d1, d2),
        sumcheck=sc_proof,
        a_opening=maybe_open(a, rho_u + rho_w),
        b_opening=maybe_open(b, rho_w + rho_v),
        c_opening=maybe_open(c, rho_u + rho_v),
    )


def verify_matmul(a_ref, b_ref, c_ref, proof, key, tr):
    p = tr.modulus
    d0, d1, d2 = proof.dims
    if (a_ref.row_vars, a_ref.col_vars) != (d0, d1):
        return False
    if (b_ref.row_vars, b_ref.col_vars) != (d1, d2):
        return False
    if (c_ref.row_vars, c_ref.col_vars) != (d0, d2):
        return False
    _absorb_operands(tr, b"matmul", [a_ref, b_ref, c_ref], key.group)
    r_u = tr.challenge_vector(b"matmul/r_u", d0)
    r_v = tr.challenge_vector(b"matmul/r_v", d2)
    terms = [Term(1, (0, 1, 2)), Term((-inverse(1 << d1, p)) % p, (0, 3))]
    ok, point, expected = verify_sumcheck(
        0, terms, 3, d0 + d1 + d2, proof.sumcheck, tr
    )
    if not ok:
        return False
    rho_u, rho_w, rho_v = point[:d0], point[d0 : d0 + d1], point[d0 + d1 :]

    def opened(ref, opening, row_pt, col_pt):
        if ref.kind != "committed":
            if opening is not None:
                return None
            return ref.evaluate_public(row_pt, col_pt, p)
        if opening is None or not _verify_open(
            key, [ref], row_pt + col_pt, opening, tr
        ):
            return None
        return opening.values[0]

    a_val = opened(a_ref, proof.a_opening, rho_u, rho_w)
    b_val = opened(b_ref, proof.b_opening, rho_w, rho_v)
    c_val = opened(c_ref, proof.c_opening, rho_u, rho_v)
    if None in (a_val, b_val, c_val):
        return False
    eq_val = eq_eval(r_u, rho_u, p) * eq_eval(r_v, rho_v, p) % p
    got = (
        eq_val * a_val % p * b_val
        - inverse(1 << d1, p) * eq_val % p * c_val
    ) % p
    return got == expected


# ---------------------------------------------------------------------------
# matadd


@dataclass
class MataddProof:
    tag = "matadd"
    sign: int
    shape: tuple
    opening: object  # batch over the committed operands in (a, b, c) order


def prove_matadd(a, b, c, sign, key, tr, rng):
    """Prove c = a + sign*b at a random point; sign in {1, -1}."""
    p = tr.modulus
    shape = (a.ref.row_vars, a.ref.col_vars)
    if (b.ref.row_vars, b.ref.col_vars) != shape or (
        c.ref.row_vars,
        c.ref.col_vars,
    ) != shape:
        raise ShapeMismatch("matadd operands must share a shape")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    _absorb_operands(tr, b"matadd", [a.ref, b.ref, c.ref], key.group)
    tr.append(b"matadd/sign", sign % p)
    point = tr.challenge_vector(b"matadd/point", a.ref.num_vars)
    committed = [t for t in (a, b, c) if t.ref.kind == "committed"]
    opening = _open_tables(key, committed, point, tr, rng) if committed else None
    return MataddProof(sign=sign, shape=shape, opening=opening)


def verify_matadd(a_ref, b_ref, c_ref, proof, key, tr):
    p = tr.modulus
    shape = proof.shape
    for ref in (a_ref, b_ref, c_ref):
        if (ref.row_vars, ref.col_vars) != tuple(shape):
            return False
    if proof.sign not in (1, -1):
        return False
    _absorb_operands(tr, b"matadd", [a_ref, b_ref, c_ref], key.group)
    tr.append(b"matadd/sign", proof.sign % p)
    point = tr.challenge_vector(b"matadd/point", a_ref.num_vars)
    row_pt, col_pt = point[: shape[0]], point[shape[0] :]
    committed = [r for r in (a_ref, b_ref, c_ref) if r.kind == "committed"]
    if committed:
        if proof.opening is None or not _verify_open(
            key, committed, point, proof.opening, tr
        ):
            return False
        vals = iter(proof.opening.values)
    else:
        vals = iter(())
    a_val = _operand_value(a_ref, vals, row_pt, col_pt, p)
    b_val = _operand_value(b_ref, vals, row_pt, col_pt, p)
    c_val = _operand_value(c_ref, vals, row_pt, col_pt, p)
    return (a_val + proof.sign * b_val) % p == c_val


# ---------------------------------------------------------------------------
# elementprod


@dataclass
class ElementprodProof:
    tag = "elementprod"
    shape: tuple
    c_opening: object
    sumcheck: object
    ab_opening: object  # committed operands among (a, b) at the final point


def prove_elementprod(a, b, c, key, tr, rng):
    """Prove c = a * b entry-wise."""
    p = tr.modulus
    shape = (a.ref.row_vars, a.ref.col_vars)
    if (b.ref.row_vars, b.ref.col_vars) != shape or (
        c.ref.row_vars,
        c.ref.col_vars,
    ) != shape:
        raise ShapeMismatch("elementprod operands must share a shape")
    if c.ref.kind != "committed":
        raise ValueError("elementprod output must be committed")
    _absorb_operands(tr, b"elementprod", [a.ref, b.ref, c.ref], key.group)
    n = a.ref.num_vars
    r = tr.challenge_vector(b"elementprod/r", n)
    c_opening = _open_tables(key, [c], r, tr, rng)
    claim = SumcheckClaim(
        c_opening.values[0],
        [eq_table(r, p), a.flat(), b.flat()],
        [Term(1, (0, 1, 2))],
        3,
        p,
    )
    sc_proof, point = prove_sumcheck(claim, tr)
    committed = [t for t in (a, b) if t.ref.kind == "committed"]
    ab_opening = _open_tables(key, committed, point, tr, rng) if committed else None
    return ElementprodProof(
        shape=shape, c_opening=c_opening, sumcheck=sc_proof, ab_opening=ab_opening
    )


def verify_elementprod(a_ref, b_ref, c_ref, proof, key, tr):
    p = tr.modulus
    shape = tuple(proof.shape)
    for ref in (a_ref, b_ref, c_ref):
        if (ref.row_vars, ref.col_vars) != shape:
            return False
    if c_ref.kind != "committed":
        return False
    _absorb_operands(tr, b"elementprod", [a_ref, b_ref, c_ref], key.group)
    n = a_ref.num_vars
    r = tr.challenge_vector(b"elementprod/r", n)
    if not _verify_open(key, [c_ref], r, proof.c_opening, tr):
        return False
    terms = [Term(1, (0, 1, 2))]
    ok, point, expected = verify_sumcheck(
        proof.c_opening.values[0], terms, 3, n, proof.sumcheck, tr
    )
    if not ok:
        return False
    committed = [ref for ref in (a_ref, b_ref) if ref.kind == "committed"]
    if committed:
        if proof.ab_opening is None or not _verify_open(
            key, committed, point, proof.ab_opening, tr
        ):
            return False
        vals = iter(proof.ab_opening.values)
    else:
        vals = iter(())
    row_pt, col_pt = point[: shape[0]], point[shape[0] :]
    a_val = _operand_value(a_ref, vals, row_pt, col_pt, p)
    b_val = _operand_value(b_ref, vals, row_pt, col_pt, p)
    return eq_eval(r, point, p) * a_val % p * b_val % p == expected


# ---------------------------------------------------------------------------
# transpose


@dataclass
class TransposeProof:
    tag = "transpose"
    shape: tuple  # (row_vars, col_vars) of the source
    a_opening: object
    t_opening: object


def prove_transpose(a, a_t, key, tr, rng):
    p = tr.modulus
    rv, cv = a.ref.row_vars, a.ref.col_vars
    if (a_t.ref.row_vars, a_t.ref.col_vars) != (cv, rv):
        raise ShapeMismatch("transpose output shape must swap the input's")
    _absorb_operands(tr, b"transpose", [a.ref, a_t.ref], key.group)
    rho_r = tr.challenge_vector(b"transpose/rows", rv)
    rho_c = tr.challenge_vector(b"transpose/cols", cv)
    return TransposeProof(
        shape=(rv, cv),
        a_opening=_open_tables(key, [a], rho_r + rho_c, tr, rng),
        t_opening=_open_tables(key, [a_t], rho_c + rho_r, tr, rng),
    )


def verify_transpose(a_ref, t_ref, proof, key, tr):
    rv, cv = proof.shape
    if (a_ref.row_vars, a_ref.col_vars) != (rv, cv):
        return False
    if (t_ref.row_vars, t_ref.col_vars) != (cv, rv):
        return False
    _absorb_operands(tr, b"transpose", [a_ref, t_ref], key.group)
    rho_r = tr.challenge_vector(b"transpose/rows", rv)
    rho_c = tr.challenge_vector(b"transpose/cols", cv)
    if not _verify_open(key, [a_ref], rho_r + rho_c, proof.a_opening, tr):
        return False
    if not _verify_open(key, [t_ref], rho_c + rho_r, proof.t_opening, tr):
        return False
    return proof.a_opening.values[0] == proof.t_opening.values[0]


# ---------------------------------------------------------------------------
# row slice: bind a committed row vector to row `row` of a committed matrix


@dataclass
class RowSliceProof:
    tag = "row_slice"
    row: int
    shape: tuple  # (row_vars, col_vars) of the full matrix
    full_opening: object
    row_opening: object


def _row_bits(row, row_vars):
    return [(row >> (row_vars - 1 - j)) & 1 for j in range(row_vars)]


def prove_row_slice(full, row, row_tensor, key, tr, rng):
    """Prove row_tensor equals row `row` of `full`.

    Fixing the row variables of the full matrix's evaluation to the bits of
    `row` restricts its multilinear extension to that row, so one opening of
    each commitment at a shared random column point suffices.
    """
    rv, cv = full.ref.row_vars, full.ref.col_vars
    if (row_tensor.ref.row_vars, row_tensor.ref.col_vars) != (0, cv):
        raise ShapeMismatch("row tensor must be a single row of matching width")
    if not 0 <= row < (1 << rv):
        raise ShapeMismatch("row index %d outside matrix" % row)
    _absorb_operands(tr, b"row_slice", [full.ref, row_tensor.ref], key.group)
    tr.append(b"row_slice/index", row.to_bytes(8, "little"))
    rho = tr.challenge_vector(b"row_slice/cols", cv)
    point = [v % tr.modulus for v in _row_bits(row, rv)] + rho
    return RowSliceProof(
        row=row,
        shape=(rv, cv),
        full_opening=_open_tables(key, [full], point, tr, rng),
        row_opening=_open_tables(key, [row_tensor], rho, tr, rng),
    )


def verify_row_slice(full_ref, row_ref, row, proof, key, tr):
    rv, cv = proof.shape
    if (full_ref.row_vars, full_ref.col_vars) != (rv, cv):
        return False
    if (row_ref.row_vars, row_ref.col_vars) != (0, cv):
        return False
    if proof.row != row or not 0 <= row < (1 << rv):
        return False
    _absorb_operands(tr, b"row_slice", [full_ref, row_ref], key.group)
    tr.append(b"row_slice/index", row.to_bytes(8, "little"))
    rho = tr.challenge_vector(b"row_slice/cols", cv)
    point = [v % tr.modulus for v in _row_bits(row, rv)] + rho
    if not _verify_open(key, [full_ref], point, proof.full_opening, tr):
        return False
    if not _verify_open(key, [row_ref], rho, proof.row_opening, tr):
        return False
    return proof.full_opening.values[0] == proof.row_opening.values[0]


# ---------------------------------------------------------------------------
# rescale


@dataclass
class RescaleProof:
    tag = "rescale"
    divisor: int
    shape: tuple
    identity_opening: object
    quant_lookup: object
    resid_lookup: object


def rescale_witness(wide, divisor, params, modulus, new_scale):
    """Quotient and scaled-residue tensors for wide = divisor*q + r."""
    zeta = params.zeta
    if divisor <= 0 or zeta % divisor:
        raise ValueError("divisor must divide zeta")
    lift = zeta // divisor
    q_entries, r_entries = [], []
    limit = params.act_bound * params.gamma_fp
    for v in wide.data:
        q, r = centered_divmod(to_signed(v, modulus), divisor)
        if not -limit <= q < limit:
            raise RangeViolation("rescale quotient %d outside table domain" % q)
        q_entries.append(from_signed(q, modulus))
        r_entries.append(from_signed(r * lift, modulus))
    narrow = QuantizedTensor(
        wide.rows, wide.cols, q_entries, params, modulus, new_scale
    )
    resid = QuantizedTensor(wide.rows, wide.cols, r_entries, params, modulus, zeta)
    return narrow, resid


def prove_rescale(wide, narrow, resid, divisor, tables, key, tr, rng):
    """Prove (zeta/div) * wide = zeta * narrow + resid with ranged q, r."""
    zeta = tables.params.zeta
    if divisor <= 0 or zeta % divisor:
        raise ValueError("divisor must divide zeta")
    shape = (wide.ref.row_vars, wide.ref.col_vars)
    for t in (narrow, resid):
        if (t.ref.row_vars, t.ref.col_vars) != shape:
            raise ShapeMismatch("rescale operands must share a shape")
    _absorb_operands(
        tr, b"rescale", [wide.ref, narrow.ref, resid.ref], key.group
    )
    tr.append(b"rescale/divisor", divisor)
    point = tr.challenge_vector(b"rescale/point", wide.ref.num_vars)
    identity_opening = _open_tables(key, [wide, narrow, resid], point, tr, rng)
    quant_lookup = prove_lookup(
        narrow.as_secret_vector(),
        compute_multiplicities(narrow.tensor.data, tables.quant_range),
        tables.quant_range,
        key,
        tr,
        rng,
    )
    resid_lookup = prove_lookup(
        resid.as_secret_vector(),
        compute_multiplicities(resid.tensor.data, tables.residue_range),
        tables.residue_range,
        key,
        tr,
        rng,
    )
    return RescaleProof(
        divisor=divisor,
        shape=shape,
        identity_opening=identity_opening,
        quant_lookup=quant_lookup,
        resid_lookup=resid_lookup,
    )


def verify_rescale(wide_ref, narrow_ref, resid_ref, proof, tables, key, tr):
    p = tr.modulus
    zeta = tables.params.zeta
    divisor = proof.divisor
    if divisor <= 0 or zeta % divisor:
        return False
    shape = tuple(proof.shape)
    for ref in (wide_ref, narrow_ref, resid_ref):
        if (ref.row_vars, ref.col_vars) != shape:
            return False
    _absorb_operands(tr, b"rescale", [wide_ref, narrow_ref, resid_ref], key.group)
    tr.append(b"rescale/divisor", divisor)
    point = tr.challenge_vector(b"rescale/point", wide_ref.num_vars)
    if not _verify_open(
        key, [wide_ref, narrow_ref, resid_ref], point, proof.identity_opening, tr
    ):
        return False
    w_val, q_val, r_val = proof.identity_opening.values
    lift = zeta // divisor
    if lift * w_val % p != (zeta * q_val + r_val) % p:
        return False
    if not verify_lookup(
        narrow_ref.commitment, tables.quant_range, proof.quant_lookup, key, tr
    ):
        return False
    return verify_lookup(
        resid_ref.commitment, tables.residue_range, proof.resid_lookup, key, tr
    )


# ---------------------------------------------------------------------------
# pair-table activation lookups (swiglu / rsqrt share the machinery)


def _combined_secret(x, y, alpha, key, modulus):
    entries = tuple(
        (xv + alpha * yv) % modulus for xv, yv in zip(x.tensor.data, y.tensor.data)
    )
    rows, _ = split_shape(x.ref.num_vars)
    bx = list(x.blinding) if x.blinding else [0] * rows
    by = list(y.blinding) if y.blinding else [0] * rows
    blinding = tuple((a + alpha * b) % modulus for a, b in zip(bx, by))
    com = combine_commitments(
        key.group, [x.ref.commitment, y.ref.commitment], [1, alpha]
    )
    return SecretVector(entries, com, blinding)


def _combined_ref(x_ref, y_ref, alpha, key):
    return combine_commitments(
        key.group, [x_ref.commitment, y_ref.commitment], [1, alpha]
    )


def _prove_pair_lookup(label, x, y, pair_table, key, tr, rng):
    """Lookup of committed (x, y) rows in a two-column table."""
    p = tr.modulus
    tr.append(label + b"/x", x.ref.digest(key.group))
    tr.append(label + b"/y", y.ref.digest(key.group))
    alpha = tr.challenge(label + b"/alpha")
    secret = _combined_secret(x, y, alpha, key, p)
    table = pair_table.combined(alpha, key, p)
    counts = compute_multiplicities(secret.entries, table)
    return prove_lookup(secret, counts, table, key, tr, rng)


def _verify_pair_lookup(label, x_ref, y_ref, pair_table, lookup_proof, key, tr):
    p = tr.modulus
    tr.append(label + b"/x", x_ref.digest(key.group))
    tr.append(label + b"/y", y_ref.digest(key.group))
    alpha = tr.challenge(label + b"/alpha")
    com = _combined_ref(x_ref, y_ref, alpha, key)
    table = pair_table.combined(alpha, key, p)
    return verify_lookup(com, table, lookup_proof, key, tr)


# ---------------------------------------------------------------------------
# swiglu (activation correctness with built-in narrowing)


@dataclass
class SwigluProof:
    tag = "swiglu"
    mode: str  # "phi" | "phi_prime"
    shape: tuple
    narrow_ref: object
    resid_ref: object
    identity_opening: object
    activation_lookup: object
    resid_lookup: object


def _require_unpadded(tensor, what):
    """Activation tables need not map 0 to 0, so padded cells would break
    the lookup; activation gadgets therefore take power-of-two shapes only."""
    if (tensor.padded_rows, tensor.padded_cols) != (tensor.rows, tensor.cols):
        raise ShapeMismatch("%s requires power-of-two tensor shapes" % what)


def swiglu_witness(wide, params, modulus, mode="phi"):
    """Narrowed input, residue, and activation output for a wide tensor."""
    _require_unpadded(wide, "swiglu")
    zeta = params.zeta
    value_fn = silu_value if mode == "phi" else silu_deriv_value
    q_entries, r_entries, g_entries = [], [], []
    for v in wide.data:
        q, r = centered_divmod(to_signed(v, modulus), zeta)
        try:
            g = value_fn(params, q)
        except KeyError:
            raise RangeViolation("activation input %d outside table domain" % q)
        q_entries.append(from_signed(q, modulus))
        r_entries.append(from_signed(r, modulus))
        g_entries.append(from_signed(g, modulus))
    rows, cols = wide.rows, wide.cols
    gamma = params.gamma_fp
    narrow = QuantizedTensor(rows, cols, q_entries, params, modulus, gamma)
    resid = QuantizedTensor(rows, cols, r_entries, params, modulus, zeta)
    out = QuantizedTensor(rows, cols, g_entries, params, modulus, gamma)
    return narrow, resid, out


def prove_swiglu(wide, out, narrow, resid, mode, tables, key, tr, rng):
    """Prove out = activation(round(wide / zeta)) with ranged residues."""
    if mode not in ("phi", "phi_prime"):
        raise ValueError("mode must be phi or phi_prime")
    shape = (wide.ref.row_vars, wide.ref.col_vars)
    for t in (out, narrow, resid):
        if (t.ref.row_vars, t.ref.col_vars) != shape:
            raise ShapeMismatch("swiglu operands must share a shape")
    pair = tables.silu if mode == "phi" else tables.silu_deriv
    _absorb_operands(tr, b"swiglu", [wide.ref, out.ref], key.group)
    tr.append(b"swiglu/mode", mode.encode())
    _absorb_operands(tr, b"swiglu/wit", [narrow.ref, resid.ref], key.group)
    point = tr.challenge_vector(b"swiglu/point", wide.ref.num_vars)
    identity_opening = _open_tables(key, [wide, narrow, resid], point, tr, rng)
    activation_lookup = _prove_pair_lookup(
        b"swiglu/act", narrow, out, pair, key, tr, rng
    )
    resid_lookup = prove_lookup(
        resid.as_secret_vector(),
        compute_multiplicities(resid.tensor.data, tables.residue_range),
        tables.residue_range,
        key,
        tr,
        rng,
    )
    return SwigluProof(
        mode=mode,
        shape=shape,
        narrow_ref=narrow.ref,
        resid_ref=resid.ref,
        identity_opening=identity_opening,
        activation_lookup=activation_lookup,
        resid_lookup=resid_lookup,
    )


def verify_swiglu(wide_ref, out_ref, proof, tables, key, tr):
    p = tr.modulus
    zeta = tables.params.zeta
    shape = tuple(proof.shape)
    narrow_ref, resid_ref = proof.narrow_ref, proof.resid_ref
    for ref in (wide_ref, out_ref, narrow_ref, resid_ref):
        if (ref.row_vars, ref.col_vars) != shape:
            return False
    if proof.mode not in ("phi", "phi_prime"):
        return False
    pair = tables.silu if proof.mode == "phi" else tables.silu_deriv
    _absorb_operands(tr, b"swiglu", [wide_ref, out_ref], key.group)
    tr.append(b"swiglu/mode", proof.mode.encode())
    _absorb_operands(tr, b"swiglu/wit", [narrow_ref, resid_ref], key.group)
    point = tr.challenge_vector(b"swiglu/point", wide_ref.num_vars)
    if not _verify_open(
        key, [wide_ref, narrow_ref, resid_ref], point, proof.identity_opening, tr
    ):
        return False
    w_val, q_val, r_val = proof.identity_opening.values
    if w_val != (zeta * q_val + r_val) % p:
        return False
    if not _verify_pair_lookup(
        b"swiglu/act", narrow_ref, out_ref, pair, proof.activation_lookup, key, tr
    ):
        return False
    return verify_lookup(
        resid_ref.commitment, tables.residue_range, proof.resid_lookup, key, tr
    )


# ---------------------------------------------------------------------------
# rsqrt


@dataclass
class RsqrtProof:
    tag = "rsqrt"
    shape: tuple
    lookup: object


def rsqrt_witness(v, params, eps, modulus):
    """Output tensor u = table(v); inputs must already sit in the domain."""
    _require_unpadded(v, "rsqrt")
    out = []
    for entry in v.data:
        x = to_signed(entry, modulus)
        try:
            out.append(from_signed(rsqrt_value(params, eps, x), modulus))
        except KeyError:
            raise RangeViolation("rsqrt input %d outside table domain" % x)
    return QuantizedTensor(v.rows, v.cols, out, params, modulus, params.gamma_fp)


def prove_rsqrt(v, u, tables, key, tr, rng):
    if (u.ref.row_vars, u.ref.col_vars) != (v.ref.row_vars, v.ref.col_vars):
        raise ShapeMismatch("rsqrt operands must share a shape")
    _absorb_operands(tr, b"rsqrt", [v.ref, u.ref], key.group)
    lookup = _prove_pair_lookup(b"rsqrt/pair", v, u, tables.rsqrt, key, tr, rng)
    return RsqrtProof(shape=(v.ref.row_vars, v.ref.col_vars), lookup=lookup)


def verify_rsqrt(v_ref, u_ref, proof, tables, key, tr):
    shape = tuple(proof.shape)
    for ref in (v_ref, u_ref):
        if (ref.row_vars, ref.col_vars) != shape:
            return False
    _absorb_operands(tr, b"rsqrt", [v_ref, u_ref], key.group)
    return _verify_pair_lookup(
        b"rsqrt/pair", v_ref, u_ref, tables.rsqrt, proof.lookup, key, tr
    )


# ---------------------------------------------------------------------------
# softmax (one row)


@dataclass
class SoftmaxRowProof:
    tag = "softmax_row"
    num_vars: int
    xi_prime: int
    digit_refs: tuple
    partial_refs: tuple
    chain_wide_refs: tuple
    chain_narrow_refs: tuple
    chain_resid_refs: tuple
    decomposition_opening: object
    digit_lookups: tuple
    chain_prod_proofs: tuple
    chain_rescale_proofs: tuple
    normalization_opening: object


def softmax_row_witness(z_row, params, modulus):
    """Everything the prover needs for one row: shift, digits, partials,
    product-chain intermediates, and the output probabilities.

    z_row: signed integers at scale gamma (length a power of two).
    Returns (xi_prime, digits[k][i], partials[k][i], chain, p_row) with
    chain a list of (wide, narrow, resid) triples of signed ints.
    """
    if params.num_radices < 2:
        raise ValueError("softmax needs at least two radix positions")
    if len(z_row) & (len(z_row) - 1):
        raise ShapeMismatch("softmax rows must have power-of-two length")
    g = params.gamma_fp
    zeta = params.zeta
    m = max(z_row)
    total = sum(math.exp((z - m) / g) for z in z_row)
    xi_prime = m + round_half_away(g * math.log(total))
    bases = radix_bases(params.radices)
    digits, partials = [], []
    for z in z_row:
        v = xi_prime - z
        if v < 0 or v >= params.xi:
            raise DigitOutOfRange("shifted exponent %d outside [0, xi)" % v)
        ds = mixed_radix_digits(v, params.radices)
        digits.append(ds)
        partials.append(
            [exp_segment_value(params, k, d) for k, d in enumerate(ds)]
        )
    k_count = params.num_radices
    digit_cols = [[digits[i][k] for i in range(len(z_row))] for k in range(k_count)]
    partial_cols = [
        [partials[i][k] for i in range(len(z_row))] for k in range(k_count)
    ]
    chain = []
    current = list(partial_cols[0])
    for k in range(1, k_count):
        wide = [c * y for c, y in zip(current, partial_cols[k])]
        narrow, resid = [], []
        for w in wide:
            q, r = centered_divmod(w, zeta)
            narrow.append(q)
            resid.append(r)
        chain.append((wide, narrow, resid))
        current = narrow
    return xi_prime, digit_cols, partial_cols, chain, current


def normalization_budget(row_len, params):
    """Allowed |sum p - gamma| in table units after chained rounding."""
    return row_len * (params.num_radices + 1)


def prove_softmax_row(z_row, p_row, witness, tables, key, tr, rng):
    """Prove p_row = softmax(z_row) for one committed row.

    witness comes from softmax_row_witness on z_row's plaintext; p_row
    must be committed over the final chain output.
    """
    p = tr.modulus
    params = tables.params
    xi_prime, digit_cols, partial_cols, chain, final = witness
    n = z_row.ref.num_vars
    row_len = 1 << n
    if p_row.ref.num_vars != n:
        raise ShapeMismatch("probability row shape differs from score row")
    if list(to_signed(v, p) for v in p_row.tensor.data) != final:
        raise ValueError("p_row does not match the witness chain output")
    k_count = params.num_radices

    def vec(entries, scale):
        return QuantizedTensor(
            1, row_len, [from_signed(int(e), p) for e in entries], params, p, scale
        )

    digit_ts = [commit_tensor(vec(digit_cols[k], 1), key, rng) for k in range(k_count)]
    partial_ts = [
        commit_tensor(vec(partial_cols[k], params.gamma_fp), key, rng)
        for k in range(k_count)
    ]
    wide_ts, narrow_ts, resid_ts = [], [], []
    for idx, (wide, narrow, resid) in enumerate(chain):
        wide_ts.append(
            commit_tensor(vec(wide, params.gamma_fp * params.gamma_fp), key, rng)
        )
        if idx == len(chain) - 1:
            narrow_ts.append(p_row)
        else:
            narrow_ts.append(commit_tensor(vec(narrow, params.gamma_fp), key, rng))
        resid_ts.append(commit_tensor(vec(resid, params.zeta), key, rng))

    _absorb_operands(tr, b"softmax", [z_row.ref, p_row.ref], key.group)
    tr.append(b"softmax/xi", xi_prime % p)
    for t in digit_ts + partial_ts + wide_ts + narrow_ts[:-1] + resid_ts:
        tr.append(b"softmax/witness", t.ref.digest(key.group))

    # (a) digit decomposition at a random point
    rho = tr.challenge_vector(b"softmax/decomp", n)
    decomposition_opening = _open_tables(key, digit_ts + [z_row], rho, tr, rng)

    # (b) one pair lookup per radix position
    digit_lookups = tuple(
        _prove_pair_lookup(
            b"softmax/exp%d" % k,
            digit_ts[k],
            partial_ts[k],
            tables.exp_segments[k],
            key,
            tr,
            rng,
        )
        for k in range(k_count)
    )

    # (c) the product chain: current * partial_{k+1} -> wide -> narrowed
    chain_prod_proofs = []
    chain_rescale_proofs = []
    current = partial_ts[0]
    for idx in range(len(chain)):
        chain_prod_proofs.append(
            prove_elementprod(current, partial_ts[idx + 1], wide_ts[idx], key, tr, rng)
        )
        chain_rescale_proofs.append(
            prove_rescale(
                wide_ts[idx],
                narrow_ts[idx],
                resid_ts[idx],
                params.zeta,
                tables,
                key,
                tr,
                rng,
            )
        )
        current = narrow_ts[idx]

    # (d) normalization: row total from the half-point opening
    half = inverse(2, p)
    normalization_opening = _open_tables(key, [p_row], [half] * n, tr, rng)
    total = (1 << n) * normalization_opening.values[0] % p
    drift = to_signed((total - params.gamma_fp) % p, p)
    if abs(drift) > normalization_budget(row_len, params):
        raise NormalizationBudgetExceeded(
            "row sum off by %d units (budget %d)"
            % (drift, normalization_budget(row_len, params))
        )
    return SoftmaxRowProof(
        num_vars=n,
        xi_prime=xi_prime,
        digit_refs=tuple(t.ref for t in digit_ts),
        partial_refs=tuple(t.ref for t in partial_ts),
        chain_wide_refs=tuple(t.ref for t in wide_ts),
        chain_narrow_refs=tuple(t.ref for t in narrow_ts[:-1]),
        chain_resid_refs=tuple(t.ref for t in resid_ts),
        decomposition_opening=decomposition_opening,
        digit_lookups=digit_lookups,
        chain_prod_proofs=tuple(chain_prod_proofs),
        chain_rescale_proofs=tuple(chain_rescale_proofs),
        normalization_opening=normalization_opening,
    )


def verify_softmax_row(z_ref, p_ref, proof, tables, key, tr):
    p = tr.modulus
    params = tables.params
    k_count = params.num_radices
    n = proof.num_vars
    row_len = 1 << n
    if z_ref.num_vars != n or p_ref.num_vars != n:
        return False
    if k_count < 2:
        return False
    if len(proof.digit_refs) != k_count or len(proof.partial_refs) != k_count:
        return False
    if len(proof.chain_wide_refs) != k_count - 1:
        return False
    if len(proof.chain_narrow_refs) != k_count - 2:
        return False
    if len(proof.chain_resid_refs) != k_count - 1:
        return False

    narrow_chain = list(proof.chain_narrow_refs) + [p_ref]

    _absorb_operands(tr, b"softmax", [z_ref, p_ref], key.group)
    tr.append(b"softmax/xi", proof.xi_prime % p)
    for ref in (
        list(proof.digit_refs)
        + list(proof.partial_refs)
        + list(proof.chain_wide_refs)
        + list(proof.chain_narrow_refs)
        + list(proof.chain_resid_refs)
    ):
        tr.append(b"softmax/witness", ref.digest(key.group))

    rho = tr.challenge_vector(b"softmax/decomp", n)
    refs = list(proof.digit_refs) + [z_ref]
    if not _verify_open(key, refs, rho, proof.decomposition_opening, tr):
        return False
    bases = radix_bases(params.radices)
    vals = proof.decomposition_opening.values
    acc = sum(b * d for b, d in zip(bases, vals[:-1])) + vals[-1]
    if acc % p != proof.xi_prime % p:
        return False

    for k in range(k_count):
        if not _verify_pair_lookup(
            b"softmax/exp%d" % k,
            proof.digit_refs[k],
            proof.partial_refs[k],
            tables.exp_segments[k],
            proof.digit_lookups[k],
            key,
            tr,
        ):
            return False

    current = proof.partial_refs[0]
    for idx in range(k_count - 1):
        if not verify_elementprod(
            current,
            proof.partial_refs[idx + 1],
            proof.chain_wide_refs[idx],
            proof.chain_prod_proofs[idx],
            key,
            tr,
        ):
            return False
        if not verify_rescale(
            proof.chain_wide_refs[idx],
            narrow_chain[idx],
            proof.chain_resid_refs[idx],
            proof.chain_rescale_proofs[idx],
            tables,
            key,
            tr,
        ):
            return False
        if proof.chain_rescale_proofs[idx].divisor != params.zeta:
            return False
        current = narrow_chain[idx]

    half = inverse(2, p)
    if not _verify_open(
        key, [p_ref], [half] * n, proof.normalization_opening, tr
    ):
        return False
    total = (1 << n) * proof.normalization_opening.values[0] % p
    drift = to_signed((total - params.gamma_fp) % p, p)
    return abs(drift) <= normalization_budget(row_len, params)


# ---------------------------------------------------------------------------
# dispatch


def verify_gadget(proof, refs, tables, key, tr):
    """Verify any gadget proof against its operand references.

    refs is the gadget-specific operand list in declaration order.
    """
    tag = proof.tag
    if tag == "matmul":
        return verify_matmul(refs[0], refs[1], refs[2], proof, key, tr)
    if tag == "matadd":
        return verify_matadd(refs[0], refs[1], refs[2], proof, key, tr)
    if tag == "elementprod":
        return verify_elementprod(refs[0], refs[1], refs[2], proof, key, tr)
    if tag == "transpose":
        return verify_transpose(refs[0], refs[1], proof, key, tr)
    if tag == "row_slice":
        return verify_row_slice(refs[0], refs[1], proof.row, proof, key, tr)
    if tag == "rescale":
        return verify_rescale(refs[0], refs[1], refs[2], proof, tables, key, tr)
    if tag == "swiglu":
        return verify_swiglu(refs[0], refs[1], proof, tables, key, tr)
    if tag == "rsqrt":
        return verify_rsqrt(refs[0], refs[1], proof, tables, key, tr)
    if tag == "softmax_row":
        return verify_softmax_row(refs[0], refs[1], proof, tables, key, tr)
    raise ValueError("unknown gadget tag %r" % tag)
