"""Signature-matrix analysis of a square DAE system.

For each equation i and state j the signature entry is the highest derivative
order of x_j in f_i (NEG_INF when absent).  A highest-value transversal (HVT)
gives the structural value; the canonical offset pair (c; d) is the smallest
valid one and drives the structural index, the degrees of freedom and the
solution scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .expr import NEG_INF, StateDeriv, hod, partial, simplify, ZERO
from .model import DaeSystem

_MAX_OFFSET_SWEEPS = 1000


class StructuralError(ValueError):
    pass


@dataclass(frozen=True)
class SignatureMatrix:
    rows: tuple            # entries are int or NEG_INF
    value: object          # int, or NEG_INF when no finite transversal exists
    hvt: Optional[tuple]   # lexicographically smallest HVT as ((i, j), ...)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def swp(self) -> bool:
        """Structurally well posed: some transversal has only finite entries."""
        return self.hvt is not None

    def entry(self, i: int, j: int):
        return self.rows[i][j]


def sigma_from_rows(rows: Sequence[Sequence]) -> SignatureMatrix:
    rows = tuple(tuple(r) for r in rows)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise StructuralError("signature matrix must be square")
    value, assign = _assignment_max(rows)
    if assign is None:
        return SignatureMatrix(rows, NEG_INF, None)
    hvt = _lex_smallest_hvt(rows, value)
    return SignatureMatrix(rows, value, hvt)


def signature_matrix(system: DaeSystem, formal: bool = False) -> SignatureMatrix:
    """True signatures come from the normal form; formal ones from the raw
    trees, where cancelled derivatives still count."""
    rows = []
    for eq in system.equations:
        tree = eq.raw if formal else eq.expr
        rows.append(tuple(hod(tree, j, presimplify=not formal)
                          for j in range(system.n)))
    return sigma_from_rows(rows)


# ---------------------------------------------------------------------------
# max-weight assignment (Hungarian with potentials, exact integer arithmetic)

def _hungarian_min(cost: List[List[int]]) -> List[int]:
    """Minimum-cost perfect assignment; returns row -> column."""
    n = len(cost)
    INF = float("inf")
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)      # p[j] = row matched to column j (1-based, 0 = none)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign


def _assignment_max(rows) -> Tuple[object, Optional[List[int]]]:
    """Best transversal value and one witness; (NEG_INF, None) if every
    transversal hits a NEG_INF entry."""
    n = len(rows)
    if n == 0:
        return 0, []
    big = -(1 + sum(abs(w) for r in rows for w in r if w != NEG_INF))
    W = [[(w if w != NEG_INF else big) for w in r] for r in rows]
    assign = _hungarian_min([[-w for w in r] for r in W])
    if any(rows[i][assign[i]] == NEG_INF for i in range(n)):
        return NEG_INF, None
    return sum(rows[i][assign[i]] for i in range(n)), assign


def _best_completion(rows, start_row: int, used_cols: set):
    """Best assignment value for rows start_row.. over unused columns."""
    n = len(rows)
    rest_rows = list(range(start_row, n))
    rest_cols = [j for j in range(n) if j not in used_cols]
    if not rest_rows:
        return 0
    sub = [[rows[i][j] for j in rest_cols] for i in rest_rows]
    value, assign = _assignment_max(sub)
    return value


def _lex_smallest_hvt(rows, total) -> tuple:
    """Among all transversals of maximal value, the one whose column sequence
    (row by row) is lexicographically smallest."""
    n = len(rows)
    used: set = set()
    picked = []
    acc = 0
    for i in range(n):
        for j in range(n):
            if j in used or rows[i][j] == NEG_INF:
                continue
            rest = _best_completion(rows, i + 1, used | {j})
            if rest == NEG_INF:
                continue
            if acc + rows[i][j] + rest == total:
                picked.append((i, j))
                used.add(j)
                acc += rows[i][j]
                break
        else:
            raise StructuralError("internal: could not extend transversal")
    return tuple(picked)


# ---------------------------------------------------------------------------
# offsets

@dataclass(frozen=True)
class OffsetPair:
    c: tuple
    d: tuple

    @property
    def value(self) -> int:
        return sum(self.d) - sum(self.c)


def canonical_offsets(sig: SignatureMatrix) -> OffsetPair:
    """Element-wise smallest valid offset pair, by fixed-point iteration."""
    if not sig.swp:
        raise StructuralError("system is structurally ill posed; no offsets")
    n = sig.n
    hvt = sig.hvt
    c = [0] * n
    for _ in range(_MAX_OFFSET_SWEEPS):
        d = [max(sig.rows[i][j] + c[i] for i in range(n)
                 if sig.rows[i][j] != NEG_INF) for j in range(n)]
        c2 = [d[j] - sig.rows[i][j] for i, j in hvt]
        # hvt pairs are (i, j) with i ascending, so c2 lines up with rows
        if c2 == c:
            return OffsetPair(tuple(c), tuple(d))
        c = c2
    raise StructuralError("offset iteration did not converge")


def validate_offsets(sig: SignatureMatrix, c: Sequence[int],
                     d: Sequence[int]) -> bool:
    """Valid means: nonnegative, d_j - c_i >= sigma_ij wherever finite, and
    equality along some transversal."""
    n = sig.n
    if len(c) != n or len(d) != n:
        return False
    if any(ci < 0 for ci in c) or any(dj < 0 for dj in d):
        return False
    eq_rows = []
    for i in range(n):
        row = []
        for j in range(n):
            s = sig.rows[i][j]
            if s == NEG_INF:
                row.append(NEG_INF)
                continue
            if d[j] - c[i] < s:
                return False
            row.append(0 if d[j] - c[i] == s else NEG_INF)
        eq_rows.append(row)
    value, assign = _assignment_max(eq_rows)
    return assign is not None


def structural_index(off: OffsetPair) -> int:
    nu = max(off.c)
    if min(off.d) == 0:
        nu += 1
    return nu


def degrees_of_freedom(off: OffsetPair) -> int:
    return off.value


# ---------------------------------------------------------------------------
# solution scheme

@dataclass(frozen=True)
class Stage:
    """One step of the scheme: which equation derivatives determine which
    state derivatives.  equations holds (eq_index, derivative_order) pairs,
    unknowns holds (var_index, derivative_order) pairs."""

    k: int
    equations: tuple
    unknowns: tuple
    linear: bool


@dataclass(frozen=True)
class SolutionScheme:
    stages: tuple      # k = -max(d) .. -1
    generic: Stage     # the k = 0 stage, same shape for every k >= 0

    @property
    def generic_linear(self) -> bool:
        return self.generic.linear


def _stage_linear(system: DaeSystem, eqs, unknowns) -> bool:
    """A stage is linear when every undifferentiated equation in it depends
    jointly linearly on the stage unknowns.  Differentiated equations are
    linear in their newest derivatives automatically."""
    unknown_atoms = [StateDeriv(j, o) for j, o in unknowns]
    for i, order in eqs:
        if order > 0:
            continue
        f = system.equations[i].expr
        for u in unknown_atoms:
            first = simplify(partial(f, u))
            if first == ZERO:
                continue
            for w in unknown_atoms:
                if simplify(partial(first, w)) != ZERO:
                    return False
    return True


def solution_scheme(system: DaeSystem, off: OffsetPair) -> SolutionScheme:
    n = len(off.c)
    stages = []
    for k in range(-max(off.d), 0):
        eqs = tuple((i, k + off.c[i]) for i in range(n) if k + off.c[i] >= 0)
        unknowns = tuple((j, k + off.d[j]) for j in range(n) if k + off.d[j] >= 0)
        stages.append(Stage(k, eqs, unknowns,
                            _stage_linear(system, eqs, unknowns)))
    eqs0 = tuple((i, off.c[i]) for i in range(n))
    unk0 = tuple((j, off.d[j]) for j in range(n))
    generic = Stage(0, eqs0, unk0, _stage_linear(system, eqs0, unk0))
    return SolutionScheme(tuple(stages), generic)


# ---------------------------------------------------------------------------
# formal vs true signatures

@dataclass(frozen=True)
class SignatureComparison:
    formal: SignatureMatrix
    true: SignatureMatrix

    @property
    def value_equal(self) -> bool:
        return self.formal.value == self.true.value

    @property
    def mismatches(self) -> tuple:
        out = []
        for i in range(self.formal.n):
            for j in range(self.formal.n):
                a = self.formal.rows[i][j]
                b = self.true.rows[i][j]
                if a != b:
                    out.append((i, j, a, b))
        return tuple(out)


def compare_signatures(system: DaeSystem) -> SignatureComparison:
    return SignatureComparison(signature_matrix(system, formal=True),
                               signature_matrix(system, formal=False))
