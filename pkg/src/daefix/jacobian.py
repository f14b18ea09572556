"""System Jacobian for a signature matrix and an offset pair.

J_ij = d f_i / d x_j^(sigma_ij) where the offsets are tight (d_j - c_i equals
sigma_ij); everywhere else the entry is zero, including the shaded positions
where d_j - c_i > sigma_ij.  Different valid offset pairs can give different
matrices, but they all share one determinant.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import List, Optional, Sequence

from .expr import (
    Add, Const, DomainError, Expr, Mul, NEG_INF, Neg, StateDeriv, ZERO,
    atoms, evaluate_ex, partial, simplify,
)
from .model import DaeSystem
from .structural import OffsetPair, SignatureMatrix, _assignment_max
from .zerotest import Prober, Verdict

DET_BOUND = 8
_RANK_POINTS = 3
_MAX_REDRAWS = 10


class SizeExceeded(Exception):
    """Symbolic determinant expansion was declined; matrix too large."""


def system_jacobian(system: DaeSystem, sig: SignatureMatrix,
                    off: OffsetPair) -> tuple:
    n = system.n
    out = []
    for i in range(n):
        f = system.equations[i].expr
        row = []
        for j in range(n):
            s = sig.rows[i][j]
            if s == NEG_INF or off.d[j] - off.c[i] != s:
                row.append(ZERO)
            else:
                row.append(simplify(partial(f, StateDeriv(j, int(s)))))
        out.append(tuple(row))
    return tuple(out)


def determinant(matrix: Sequence[Sequence[Expr]], bound: int = DET_BOUND) -> Expr:
    """Exact determinant by memoized cofactor expansion (division-free)."""
    n = len(matrix)
    if n > bound:
        raise SizeExceeded(n)
    if n == 0:
        return Const(Fraction(1))
    memo: dict = {}

    def det(cols: tuple) -> Expr:
        if not cols:
            return Const(Fraction(1))
        got = memo.get(cols)
        if got is not None:
            return got
        i = n - len(cols)
        terms = []
        for idx, j in enumerate(cols):
            a = matrix[i][j]
            if a == ZERO:
                continue
            sub = det(cols[:idx] + cols[idx + 1:])
            if sub == ZERO:
                continue
            term: Expr = Mul((a, sub))
            if idx % 2:
                term = Neg(term)
            terms.append(term)
        r = simplify(Add(tuple(terms))) if terms else ZERO
        memo[cols] = r
        return r

    return det(tuple(range(n)))


class JacobianClass(Enum):
    GENERICALLY_NONSINGULAR = "generically_nonsingular"
    STRUCTURALLY_SINGULAR = "structurally_singular"
    IDENTICALLY_SINGULAR = "identically_singular"
    PROBABLY_SINGULAR = "probably_singular"


@dataclass(frozen=True)
class JacobianReport:
    matrix: tuple
    klass: JacobianClass
    det: Optional[Expr]            # None when expansion was skipped
    det_verdict: Optional[Verdict]

    @property
    def singular(self) -> bool:
        return self.klass is not JacobianClass.GENERICALLY_NONSINGULAR

    @property
    def uncertain(self) -> bool:
        return self.klass is JacobianClass.PROBABLY_SINGULAR


def classify_jacobian(matrix: Sequence[Sequence[Expr]], prober: Prober,
                      bound: int = DET_BOUND) -> JacobianReport:
    """Sort the matrix into one of four kinds.

    Structural singularity is decided first: if the not-provenly-zero
    positions admit no transversal, every determinant term dies.  Otherwise
    the determinant is expanded and zero-tested; above the size bound three
    rational rank probes stand in for it.
    """
    matrix = tuple(tuple(row) for row in matrix)
    n = len(matrix)
    support = [[(0 if not prober.verdict(matrix[i][j]).proven_zero else NEG_INF)
                for j in range(n)] for i in range(n)]
    _, assign = _assignment_max(support)
    if assign is None:
        return JacobianReport(matrix, JacobianClass.STRUCTURALLY_SINGULAR,
                              ZERO, prober.verdict(ZERO))
    try:
        det = determinant(matrix, bound)
    except SizeExceeded:
        return _classify_by_rank(matrix, prober)
    v = prober.verdict(det)
    if v.proven_nonzero:
        klass = JacobianClass.GENERICALLY_NONSINGULAR
    elif v.proven_zero:
        klass = JacobianClass.IDENTICALLY_SINGULAR
    else:
        klass = JacobianClass.PROBABLY_SINGULAR
    return JacobianReport(matrix, klass, det, v)


def _classify_by_rank(matrix, prober: Prober) -> JacobianReport:
    n = len(matrix)
    ats = sorted({a for row in matrix for e in row for a in atoms(e)},
                 key=lambda a: repr(a))
    rng = random.Random("%s:rank:%r" % (prober.seed, matrix))
    redraws = 0
    points = 0
    while points < _RANK_POINTS and redraws < _MAX_REDRAWS:
        b = {a: Fraction(rng.randint(-50, 50), rng.randint(1, 50)) for a in ats}
        try:
            evals = [[evaluate_ex(e, b) for e in row] for row in matrix]
        except DomainError:
            redraws += 1
            continue
        points += 1
        rows = [[v for v, _ in row] for row in evals]
        if _fraction_rank(rows) == n:
            if not all(ex for row in evals for _, ex in row):
                prober.uncertain_seen = True
            return JacobianReport(matrix,
                                  JacobianClass.GENERICALLY_NONSINGULAR,
                                  None, None)
    prober.uncertain_seen = True
    return JacobianReport(matrix, JacobianClass.PROBABLY_SINGULAR, None, None)


def _fraction_rank(rows: List[List[Fraction]]) -> int:
    m = [row[:] for row in rows]
    n_rows = len(m)
    n_cols = len(m[0]) if m else 0
    rank = 0
    r = 0
    for c in range(n_cols):
        pivot = None
        for i in range(r, n_rows):
            if m[i][c] != 0:
                pivot = i
                break
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        pv = m[r][c]
        for i in range(r + 1, n_rows):
            if m[i][c]:
                f = m[i][c] / pv
                for jj in range(c, n_cols):
                    m[i][jj] -= f * m[r][jj]
        r += 1
        rank += 1
        if r == n_rows:
            break
    return rank
