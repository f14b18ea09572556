"""Shared generators and invariant checkers for the rewrite suites.

test_convert and test_acceptance both draw on these: random expression and
system generators, the derivative-shift identity, the combination recovery
identity, and the block-structure check for substitution rewrites.
"""

from fractions import Fraction

from daefix.expr import (NEG_INF, ZERO, Add, Const, DomainError, DrivingFn,
                         Func, Mul, Neg, Pow, StateDeriv, TimeVar, hod,
                         partial, simplify, total_derivative)
from daefix.model import (DaeSystem, append_equation_and_variable,
                          fresh_indexed, make_equation)
from daefix.structural import signature_matrix

_FUNCS = ("sin", "cos", "exp")
_ATOMS = (StateDeriv(0, 0), StateDeriv(0, 1), StateDeriv(1, 0),
          StateDeriv(1, 2), StateDeriv(2, 1), TimeVar(), DrivingFn("w"))


def rand_expr(rng, depth=3):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.15:
            return Const(rng.randint(-3, 3))
        return _ATOMS[rng.randrange(len(_ATOMS))]
    k = rng.randrange(6)
    if k == 0:
        return Add((rand_expr(rng, depth - 1), rand_expr(rng, depth - 1)))
    if k == 1:
        return Mul((rand_expr(rng, depth - 1), rand_expr(rng, depth - 1)))
    if k == 2:
        return Neg(rand_expr(rng, depth - 1))
    if k == 3:
        return Pow(rand_expr(rng, depth - 1), rng.choice((2, 3, -1)))
    if k == 4:
        return Func(rng.choice(_FUNCS), rand_expr(rng, depth - 1))
    return Add((rand_expr(rng, depth - 1), Neg(rand_expr(rng, depth - 1))))


def derivative_shift_holds(rng):
    """d(D^p f)/dx_j^(k+p) = df/dx_j^(k) at k = hod(x_j, f).

    Returns None for draws that cannot exercise the identity: the variable
    does not occur, or the expression hides a division by zero.
    """
    f = rand_expr(rng)
    j = rng.randrange(3)
    try:
        k = hod(f, j)
        if k == NEG_INF:
            return None
        p = rng.randint(1, 3)
        lhs = partial(total_derivative(f, p), StateDeriv(j, k + p))
        rhs = partial(f, StateDeriv(j, k))
        return simplify(Add((lhs, Neg(rhs)))) == ZERO
    except DomainError:
        return None


# ---------------------------------------------------------------------------
# random singular linear systems: A x' + B x = 0 with det(A) = 0, det(B) != 0

def _rank(rows):
    m = [[Fraction(v) for v in row] for row in rows]
    n = len(m)
    rank = 0
    for col in range(n):
        piv = next((r for r in range(rank, n) if m[r][col]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(n):
            if r != rank and m[r][col]:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def singular_linear_system(rng, tag: str) -> DaeSystem:
    n = rng.randint(3, 5)
    while True:
        A = [[rng.randint(-3, 3) for _ in range(n)] for _ in range(n)]
        if _rank(A) < n:
            continue
        B = [[rng.randint(-3, 3) for _ in range(n)] for _ in range(n)]
        if _rank(B) < n:
            continue
        row = rng.randrange(n)
        coeffs = [rng.randint(-2, 2) for _ in range(n)]
        coeffs[row] = 0
        if not any(coeffs):
            coeffs[(row + 1) % n] = 1
        A[row] = [sum(coeffs[i] * A[i][j] for i in range(n))
                  for j in range(n)]
        eqs = []
        for i in range(n):
            terms = [Mul((Const(A[i][j]), StateDeriv(j, 1)))
                     for j in range(n) if A[i][j]]
            terms += [Mul((Const(B[i][j]), StateDeriv(j, 0)))
                      for j in range(n) if B[i][j]]
            raw = terms[0] if len(terms) == 1 else Add(tuple(terms))
            eqs.append(make_equation("f%d" % (i + 1), raw))
        system = DaeSystem("lin_%s" % tag,
                           tuple("x%d" % (j + 1) for j in range(n)),
                           tuple(eqs))
        sig = signature_matrix(system)
        if sig.swp and sig.value == n:
            return system


# ---------------------------------------------------------------------------
# rewrite invariants

def assert_lc_recovery(before: DaeSystem, app):
    """The replaced equation recovers the original: the combination minus
    the other summands equals u_l times the old pivot equation."""
    a = app.analysis
    l = app.pivot
    terms = [app.system.equations[l].expr]
    for i in a.rows:
        if i == l:
            continue
        fi = total_derivative(before.equations[i].expr, a.off.c[i] - a.c_under)
        terms.append(Neg(Mul((a.u[i], fi))))
    back = Add((Add(tuple(terms)),
                Neg(Mul((a.u[l], before.equations[l].expr)))))
    assert simplify(back) == ZERO


def assert_es_block_structure(before: DaeSystem, app):
    """The substituted system, closed with a state for the pivot's leading
    derivative, has the signature layout that keeps the offsets covering:
    no leading derivatives left in the old rows, fresh states entering at
    most at the defining offset, and defining rows tight exactly on their
    own column and the pivot column."""
    a = app.analysis
    off = a.off
    n = before.n
    l = app.pivot
    c_bar = a.c_over
    conv = app.system
    taken = set(conv.var_names) | {p for p, _ in conv.params} \
        | set(conv.input_names)
    yl_name = fresh_indexed("x", conv.n + 1, taken)
    gl_name = fresh_indexed("f", conv.n + 1, {e.name for e in conv.equations})
    yl_index = conv.n
    raw = Add((Neg(StateDeriv(yl_index, 0)), StateDeriv(l, off.d[l] - c_bar)))
    gl = make_equation(gl_name, raw, origin="es_appended",
                       alias="y%d" % (l + 1))
    aug = append_equation_and_variable(conv, yl_name, gl)
    sig = signature_matrix(aug)

    jset = set(a.cols)
    own_col = {rec.new_index: rec.col for rec in app.renamed}
    own_col[yl_index] = l
    for i in range(n):
        for j in range(aug.n):
            s = sig.entry(i, j)
            if j < n:
                lim = off.d[j] - off.c[i]
                if j in jset:
                    assert s < lim, (i, j)
                else:
                    assert s <= lim, (i, j)
            elif j == yl_index:
                assert s == NEG_INF, (i, j)
            else:
                assert s <= c_bar - off.c[i], (i, j)
    for i in range(n, aug.n):
        k = own_col[i]
        for j in range(aug.n):
            s = sig.entry(i, j)
            if j < n:
                lim = off.d[j] - c_bar
                if j == k or j == l:
                    assert s == lim, (i, j)
                elif j in jset:
                    assert s < lim, (i, j)
                else:
                    assert s <= lim, (i, j)
            else:
                assert s == (0 if j == i else NEG_INF), (i, j)
