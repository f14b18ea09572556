"""Kernel and cokernel vectors of symbolic matrices.

Fraction-free Gauss-Jordan: a pivot never divides, it cross-multiplies
(row_r <- pivot * row_r - entry * row_p), so entries stay in the expression
ring.  Pivot choice consults the zero tester; a column whose only nonzero
candidates are merely *probably* zero cannot be pivoted or skipped safely,
which surfaces as EliminationStuck.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Sequence

from .expr import Add, Const, Expr, Mul, Neg, Pow, ZERO, simplify, walk
from .zerotest import Prober


class NullspaceError(RuntimeError):
    pass


class EliminationStuck(NullspaceError):
    """A pivot column is blocked by entries that are only probably zero."""

    def __init__(self, col: int, entry: Expr):
        super().__init__("cannot pivot column %d: entry %r is only probably "
                         "zero" % (col + 1, entry))
        self.col = col
        self.entry = entry


def _pivot_choice(entries, prober: Prober):
    """Among (row, expr) candidates pick the pivot: proven-nonzero constants
    first, then proven-nonzero expressions, smallest row index deciding ties.
    Returns (row, kind) where kind is 'pivot', 'free', or 'stuck'."""
    const_rows = []
    expr_rows = []
    saw_probable = None
    for r, e in entries:
        v = prober.verdict(e)
        if v.proven_nonzero:
            if isinstance(e, Const):
                const_rows.append(r)
            else:
                expr_rows.append(r)
        elif v.probably_zero and saw_probable is None:
            saw_probable = e
    if const_rows:
        return const_rows[0], "pivot"
    if expr_rows:
        return expr_rows[0], "pivot"
    if saw_probable is not None:
        return saw_probable, "stuck"
    return None, "free"


def kernel_vector(matrix: Sequence[Sequence[Expr]], prober: Prober,
                  basis_index: int = 0) -> Optional[tuple]:
    """basis_index-th kernel basis vector (free columns in ascending order),
    or None when the kernel has no that-many dimensions."""
    n = len(matrix)
    m: List[List[Expr]] = [[simplify(e) for e in row] for row in matrix]
    if any(len(row) != n for row in m):
        raise NullspaceError("matrix must be square")
    pivots = []          # (row, col)
    pivot_rows = set()
    free_cols = []
    for col in range(n):
        cands = [(r, m[r][col]) for r in range(n) if r not in pivot_rows]
        chosen, kind = _pivot_choice(cands, prober)
        if kind == "stuck":
            raise EliminationStuck(col, chosen)
        if kind == "free":
            free_cols.append(col)
            continue
        p = chosen
        pv = m[p][col]
        for r in range(n):
            if r == p:
                continue
            e = m[r][col]
            if prober.verdict(e).proven_zero:
                continue
            m[r] = [simplify(Mul((pv, m[r][k])) - Mul((e, m[p][k])))
                    for k in range(n)]
            m[r][col] = ZERO  # exact by construction; mask any residue
        pivots.append((p, col))
        pivot_rows.add(p)
    if basis_index >= len(free_cols):
        return None
    fc = free_cols[basis_index]
    v: List[Expr] = [ZERO] * n
    v[fc] = Const(Fraction(1))
    for p, col in reversed(pivots):
        # pivot columns hold a single nonzero entry, so only free columns
        # feed the numerator
        num = [Mul((m[p][k], v[k])) for k in free_cols
               if m[p][k] != ZERO and v[k] != ZERO]
        if not num:
            v[col] = ZERO
            continue
        total = num[0] if len(num) == 1 else _sum(num)
        v[col] = simplify(Mul((Neg(total), Pow(m[p][col], -1))))
    vec = tuple(v)
    verify_nullvector(matrix, vec, prober, left=False, strict=True)
    return vec


def _sum(terms):
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def cokernel_vector(matrix: Sequence[Sequence[Expr]], prober: Prober,
                    basis_index: int = 0) -> Optional[tuple]:
    n = len(matrix)
    transpose = [[matrix[i][j] for i in range(n)] for j in range(n)]
    return kernel_vector(transpose, prober, basis_index)


def verify_nullvector(matrix, vec, prober: Prober, left: bool = False,
                      strict: bool = False) -> bool:
    """vec must not be all zeros and the residual must zero-test clean.
    With strict=True a failure raises instead of returning False."""
    n = len(matrix)
    ok = any(prober.verdict(e).proven_nonzero for e in vec)
    if ok:
        for i in range(n):
            if left:
                dot = _sum([Mul((vec[k], matrix[k][i])) for k in range(n)])
            else:
                dot = _sum([Mul((matrix[i][k], vec[k])) for k in range(n)])
            if prober.verdict(dot).proven_nonzero:
                ok = False
                break
    if not ok and strict:
        raise NullspaceError("candidate vector fails residual verification")
    return ok


def constant_mask(vec) -> tuple:
    """True where the entry is literally a nonzero constant."""
    return tuple(isinstance(e, Const) and e.value != 0 for e in vec)


def _denominator_bases(e: Expr):
    out = []
    for node in walk(simplify(e)):
        if isinstance(node, Pow) and node.exponent < 0:
            out.append(node.base)
    return out


def normalize_candidates(vec, matrix, prober: Prober,
                         left: bool = False) -> list:
    """Orderly list of rescalings of a null vector.

    The original, then the vector divided by each proven-nonzero entry
    (constant 1 excepted), then a cleared-denominator form.  Duplicates drop,
    every survivor is re-verified against the matrix, and candidates with
    more constant entries sort first (stable, so the original leads ties)."""
    base = tuple(simplify(e) for e in vec)
    cands = [base]
    for e in base:
        if e == Const(Fraction(1)):
            continue
        if prober.verdict(e).proven_nonzero:
            inv = Pow(e, -1) if not isinstance(e, Const) \
                else Const(Fraction(1) / e.value)
            cands.append(tuple(simplify(Mul((x, inv))) for x in base))
    bases = []
    seen_b = set()
    for e in base:
        for b in _denominator_bases(e):
            if b not in seen_b:
                seen_b.add(b)
                bases.append(b)
    if bases:
        clear = bases[0] if len(bases) == 1 else Mul(tuple(bases))
        cands.append(tuple(simplify(Mul((x, clear))) for x in base))
    out = []
    seen = set()
    for c in cands:
        if c in seen:
            continue
        seen.add(c)
        if verify_nullvector(matrix, c, prober, left=left):
            out.append(c)
    out.sort(key=lambda c: -sum(1 for f in constant_mask(c) if f))
    return out
