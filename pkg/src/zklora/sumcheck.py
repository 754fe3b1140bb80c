"""Sumcheck prover and verifier over products of multilinear tables.

A claim is a target sum plus a combination rule: a list of terms, each a
coefficient times a product of at most three of the claim's factor
tables.  Round polynomials travel as evaluations at 0..degree; the
verifier interpolates.  The verifier's output is the final challenge
point and the prover's claimed factor values there; binding those values
to commitments (or to direct public evaluation) is the caller's job.
"""

from dataclasses import dataclass

from .field import inverse
from .mle import fold_table


class DegreeOverflow(ValueError):
    pass


class SumcheckError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    coefficient: int
    factors: tuple


@dataclass
class SumcheckClaim:
    claimed_sum: int
    tables: list
    terms: list
    degree: int
    modulus: int

    def __post_init__(self):
        if self.degree > 3:
            raise DegreeOverflow("per-variable degree above 3 unsupported")
        for t in self.terms:
            if len(t.factors) > self.degree:
                raise DegreeOverflow(
                    "term with %d factors exceeds degree %d" % (len(t.factors), self.degree)
                )
        sizes = {len(t) for t in self.tables}
        if len(sizes) != 1:
            raise SumcheckError("factor tables must share one variable count")
        size = sizes.pop()
        if size & (size - 1):
            raise SumcheckError("table length must be a power of two")

    @property
    def num_vars(self):
        return (len(self.tables[0]) - 1).bit_length()


@dataclass(frozen=True)
class RoundPolynomial:
    evaluations: tuple


@dataclass
class SumcheckProof:
    rounds: list
    final_values: tuple


def combine(terms, values, modulus):
    """Apply the combination rule to one value per factor table."""
    total = 0
    for t in terms:
        prod = t.coefficient
        for idx in t.factors:
            prod = prod * values[idx] % modulus
        total = (total + prod) % modulus
    return total


def direct_sum(claim):
    """Oracle-style direct summation over the whole cube; test sizes only."""
    p = claim.modulus
    total = 0
    for i in range(len(claim.tables[0])):
        total = (total + combine(claim.terms, [t[i] for t in claim.tables], p)) % p
    return total


def _absorb_claim(tr, claimed_sum, terms, degree, num_vars):
    tr.append(b"sumcheck/sum", claimed_sum)
    tr.append(b"sumcheck/shape", bytes([degree, num_vars, len(terms)]))
    for t in terms:
        tr.append(b"sumcheck/coeff", t.coefficient)
        tr.append(b"sumcheck/factors", bytes(t.factors))


def prove_sumcheck(claim, tr):
    """Run the prover; return (proof, point) with the bound challenges.

    The caller uses `point` to open factor commitments at the location
    the verifier will independently reconstruct.
    """
    p = claim.modulus
    degree = claim.degree
    tables = [list(t) for t in claim.tables]
    _absorb_claim(tr, claim.claimed_sum, claim.terms, degree, claim.num_vars)
    rounds = []
    point = []
    for _ in range(claim.num_vars):
        half = len(tables[0]) // 2
        evals = [0] * (degree + 1)
        for i in range(half):
            lows = [t[i] for t in tables]
            highs = [t[i + half] for t in tables]
            diffs = [(h - l) % p for h, l in zip(highs, lows)]
            at_x = lows
            for x in range(degree + 1):
                if x == 1:
                    at_x = highs
                elif x > 1:
                    at_x = [(v + d) % p for v, d in zip(at_x, diffs)]
                evals[x] = (evals[x] + combine(claim.terms, at_x, p)) % p
        rounds.append(RoundPolynomial(tuple(evals)))
        for e in evals:
            tr.append(b"sumcheck/eval", e)
        r = tr.challenge(b"sumcheck/round")
        point.append(r)
        tables = [fold_table(t, r, p) for t in tables]
    return SumcheckProof(rounds, tuple(t[0] for t in tables)), point


def _interpolate(evals, x, modulus):
    """Lagrange interpolation from evaluations at 0..d."""
    d = len(evals) - 1
    total = 0
    for j, y in enumerate(evals):
        num, den = 1, 1
        for k in range(d + 1):
            if k == j:
                continue
            num = num * ((x - k) % modulus) % modulus
            den = den * (j - k)
        total = (total + y * num % modulus * inverse(den % modulus, modulus)) % modulus
    return total


def verify_sumcheck(claimed_sum, terms, degree, num_vars, proof, tr):
    """Check round consistency; return (ok, point, expected_final_value).

    expected_final_value is what combine(terms, opened factor values)
    must equal; the caller performs that comparison after validating the
    openings.
    """
    p = tr.modulus
    if len(proof.rounds) != num_vars:
        return False, [], 0
    _absorb_claim(tr, claimed_sum, terms, degree, num_vars)
    running = claimed_sum % p
    point = []
    for rp in proof.rounds:
        evals = rp.evaluations
        if len(evals) != degree + 1:
            return False, [], 0
        if (evals[0] + evals[1]) % p != running:
            return False, [], 0
        for e in evals:
            tr.append(b"sumcheck/eval", e)
        r = tr.challenge(b"sumcheck/round")
        point.append(r)
        running = _interpolate(evals, r, p)
    return True, point, running
