"""Dense multilinear extensions: evaluation tables over the boolean cube.

Variable order is fixed globally: x1 is the most significant index bit,
and for matrix-shaped tables the row bits precede the column bits.
Internally tables are plain lists of int residues for speed; the public
types wrap them.
"""


class DimensionMismatch(ValueError):
    pass


class FoldOnConstant(ValueError):
    pass


class DenseMultilinear:
    """An n-variable multilinear polynomial given by its cube table."""

    __slots__ = ("num_vars", "table", "modulus")

    def __init__(self, table, modulus):
        n = (len(table) - 1).bit_length()
        if len(table) != 1 << n:
            raise ValueError("table length %d is not a power of two" % len(table))
        self.num_vars = n
        self.table = table
        self.modulus = modulus

    def evaluate(self, point):
        if len(point) != self.num_vars:
            raise DimensionMismatch(
                "point has %d coordinates, polynomial has %d variables"
                % (len(point), self.num_vars)
            )
        return mle_evaluate(self.table, point, self.modulus)

    def fold(self, r):
        if self.num_vars == 0:
            raise FoldOnConstant("cannot fold a 0-variable polynomial")
        return DenseMultilinear(fold_table(self.table, r, self.modulus), self.modulus)


def mle_from_tensor(tensor):
    """Multilinear over log2(rows)+log2(cols) variables, row bits first."""
    return DenseMultilinear(list(tensor.data), tensor.modulus)


def fold_table(table, r, modulus):
    """Bind the most significant variable to r."""
    half = len(table) // 2
    one_minus = (1 - r) % modulus
    return [
        (one_minus * table[i] + r * table[i + half]) % modulus for i in range(half)
    ]


def mle_evaluate(table, point, modulus):
    """Evaluate by iterative folding, O(2^n) multiplications."""
    t = table
    for r in point:
        t = fold_table(t, r, modulus)
    return t[0]


def eq_table(point, modulus):
    """Table of the equality kernel eq(point, .) over the cube.

    eq(u, x) = prod_i (u_i x_i + (1-u_i)(1-x_i)); summing any multilinear
    against this table evaluates it at `point`.
    """
    out = [1]
    for r in point:
        r %= modulus
        one_minus = (1 - r) % modulus
        nxt = [0] * (len(out) * 2)
        for i, v in enumerate(out):
            nxt[2 * i] = v * one_minus % modulus
            nxt[2 * i + 1] = v * r % modulus
        out = nxt
    return out


def eq_eval(u, x, modulus):
    """eq(u, x) for two field points."""
    if len(u) != len(x):
        raise DimensionMismatch("eq kernel arity mismatch")
    acc = 1
    for a, b in zip(u, x):
        acc = acc * ((a * b + (1 - a) * (1 - b)) % modulus) % modulus
    return acc


def zero_prefix_eval(point, count, modulus):
    """MLE of the indicator [first `count` variables are all 0] at a point."""
    acc = 1
    for r in point[:count]:
        acc = acc * ((1 - r) % modulus) % modulus
    return acc
