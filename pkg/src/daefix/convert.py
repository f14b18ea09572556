"""Rewrites that repair an identically singular System Jacobian.

A nonzero cokernel vector u of J drives the combination rewrite: one
equation is replaced by sum_i u_i * f_i^(c_i - c), where c = min c_i over
the rows u touches.  The leading derivatives cancel, so the signature
value drops.  A kernel vector v drives the substitution rewrite: the
combination of leading derivatives it annihilates is captured in fresh
states y_j = x_j^(d_j-c) - (v_j/v_l) x_l^(d_l-c), which are substituted
through the equations that pin those derivatives down.  Both rewrites
preserve solutions (globally when the pivot entry is constant, locally
where it stays nonzero) and both strictly decrease the signature value,
so iterating them terminates.

fix_dae below is the driver: analyze, classify, pick a method, rewrite,
repeat until the Jacobian is generically nonsingular or nothing applies.
"""

import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import zip_longest

from .expr import (Add, Const, DomainError, Expr, Mul, Neg, Param, Pow,
                   StateDeriv, atoms, evaluate_ex, hod, simplify,
                   total_derivative)
from .jacobian import classify_jacobian, system_jacobian
from .model import (DaeSystem, Substitution, append_equation_and_variable,
                    apply_substitutions, fresh_indexed, make_equation)
from .nullspace import (EliminationStuck, cokernel_vector, kernel_vector,
                        normalize_candidates, verify_nullvector)
from .structural import OffsetPair, canonical_offsets, signature_matrix
from .zerotest import Prober

PROBE_POINTS = 5
_MAX_REDRAWS = 10
_NUMERIC_GUARD = Fraction(1, 10 ** 9)


class ConvertError(RuntimeError):
    """An invariant of a rewrite failed; the conversion cannot proceed."""


class VectorRejected(ConvertError):
    """A forced vector is not a null vector of the System Jacobian."""


class ConditionRejected(ConvertError):
    """A forced vector verifies but fails the method's order condition."""


class PivotRejected(ConvertError):
    """A forced pivot is outside the candidate set or unsafe to divide by."""


class MethodKind(Enum):
    LC = "lc"
    ES = "es"
    NEITHER = "neither"


# ---------------------------------------------------------------------------
# combination rewrite (cokernel side)

@dataclass(frozen=True)
class LcAnalysis:
    """What a cokernel vector u allows.

    rows: indices i with u_i not proven zero.
    candidates: rows of minimal offset, empty when the order condition
    fails.  const_rows: candidates whose entry is a nonzero constant
    (replacing one of those preserves solutions globally).
    """

    u: tuple
    rows: tuple
    c_under: int
    candidates: tuple
    const_rows: tuple
    condition_ok: bool
    off: OffsetPair


def lc_analyze(system: DaeSystem, off: OffsetPair, u, prober: Prober) -> LcAnalysis:
    u = tuple(simplify(e) for e in u)
    rows = tuple(i for i, e in enumerate(u)
                 if not prober.verdict(e).proven_zero)
    if not rows:
        return LcAnalysis(u, (), 0, (), (), False, off)
    c_under = min(off.c[i] for i in rows)
    # order condition: u must not involve derivatives of x_j at or above
    # order d_j - c_under, otherwise the replacement breaks the offsets
    ok = True
    n = len(system.var_names)
    for j in range(n):
        ho = max(hod(u[i], j, presimplify=False) for i in rows)
        if not ho < off.d[j] - c_under:
            ok = False
            break
    if not ok:
        return LcAnalysis(u, rows, c_under, (), (), False, off)
    candidates = tuple(i for i in rows if off.c[i] == c_under)
    const_rows = tuple(i for i in candidates if isinstance(u[i], Const))
    return LcAnalysis(u, rows, c_under, candidates, const_rows, True, off)


@dataclass(frozen=True)
class LcApplication:
    system: DaeSystem
    analysis: LcAnalysis
    pivot: int


def lc_apply(system: DaeSystem, analysis: LcAnalysis, pivot: int) -> LcApplication:
    """Replaces equation `pivot` by the combination sum u_i f_i^(c_i-c)."""
    if not analysis.condition_ok:
        raise ConditionRejected("combination order condition fails")
    if pivot not in analysis.candidates:
        raise PivotRejected("row %d is not a minimal-offset row of the "
                            "combination" % (pivot + 1))
    off, u = analysis.off, analysis.u
    terms = []
    for i in analysis.rows:
        fi = total_derivative(system.equations[i].expr, off.c[i] - analysis.c_under)
        terms.append(Mul((u[i], fi)))
    raw = terms[0] if len(terms) == 1 else Add(tuple(terms))
    old = system.equations[pivot]
    new_eq = make_equation(old.name, raw, origin="lc_replaced", alias=old.alias)
    # the leading derivatives must have cancelled
    for j in range(system.n):
        if not hod(new_eq.expr, j, presimplify=False) < off.d[j] - analysis.c_under:
            raise ConvertError("combination kept a leading derivative of %s"
                               % system.var_names[j])
    eqs = list(system.equations)
    eqs[pivot] = new_eq
    return LcApplication(system.with_equations(eqs), analysis, pivot)


def lc_equivalence_probes(before: DaeSystem, app: LcApplication,
                          prober: Prober, points: int = PROBE_POINTS) -> int:
    """Numerically checks f_new = sum u_i f_i^(c_i-c) at random points.

    Returns the number of points actually compared; exhausted redraws at a
    point mark the prober uncertain and skip it.
    """
    a = app.analysis
    new = app.system.equations[app.pivot].expr
    parts = [(a.u[i],
              total_derivative(before.equations[i].expr, a.off.c[i] - a.c_under))
             for i in a.rows]
    needed = set(atoms(new))
    for ui, fi in parts:
        needed |= atoms(ui) | atoms(fi)
    rng = random.Random("%s:lc:%s:%d" % (prober.seed, before.name, app.pivot))
    compared = 0
    for _ in range(points):
        got = _compare_point(rng, needed, before.param_values,
                             lambda b: _eval_combination(new, parts, b))
        if got is None:
            prober.uncertain_seen = True
            continue
        compared += 1
    if compared == 0:
        prober.uncertain_seen = True
    return compared


def _eval_combination(new, parts, b):
    lhs, exact = evaluate_ex(new, b)
    rhs = Fraction(0)
    for ui, fi in parts:
        vu, eu = evaluate_ex(ui, b)
        vf, ef = evaluate_ex(fi, b)
        rhs += vu * vf
        exact = exact and eu and ef
    return lhs, rhs, exact


# ---------------------------------------------------------------------------
# substitution rewrite (kernel side)

@dataclass(frozen=True)
class EsAnalysis:
    """What a kernel vector v allows.

    cols: indices j with v_j not proven zero.  rows: equations whose
    signature is tight in one of those columns.  const_cols: cols whose
    entry is a nonzero constant.
    """

    v: tuple
    cols: tuple
    rows: tuple
    c_over: int
    const_cols: tuple
    condition_ok: bool
    off: OffsetPair

    @property
    def usable(self) -> bool:
        return len(self.cols) >= 2 and bool(self.rows) and self.condition_ok


def es_analyze(system: DaeSystem, sig, off: OffsetPair, v,
               prober: Prober) -> EsAnalysis:
    v = tuple(simplify(e) for e in v)
    cols = tuple(j for j, e in enumerate(v)
                 if not prober.verdict(e).proven_zero)
    rows = tuple(i for i in range(system.n)
                 if any(off.d[j] - off.c[i] == sig.entry(i, j) for j in cols))
    if not rows or len(cols) < 2:
        return EsAnalysis(v, cols, rows, 0, (), False, off)
    c_over = max(off.c[i] for i in rows)
    ok = True
    for j in range(system.n):
        ho = max(hod(v[k], j, presimplify=False) for k in cols)
        lim = off.d[j] - c_over
        if j in cols and not (ho < lim and lim >= 0):
            ok = False
            break
        if j not in cols and not ho <= lim:
            ok = False
            break
    const_cols = tuple(j for j in cols if isinstance(v[j], Const))
    return EsAnalysis(v, cols, rows, c_over, const_cols if ok else (), ok, off)


@dataclass(frozen=True)
class Renaming:
    """One fresh state introduced by the substitution rewrite."""

    col: int           # original variable index j
    new_index: int
    var_name: str
    eq_name: str
    alias: str
    order: int         # d_j - c_over, the derivative the state captures
    definition: Expr   # x_j^(order) - (v_j/v_l) x_l^(d_l-c_over)


@dataclass(frozen=True)
class EsApplication:
    system: DaeSystem
    analysis: EsAnalysis
    pivot: int
    renamed: tuple     # Renaming records, one per col except the pivot
    rewritten: tuple   # row indices that were substituted into


def es_apply(system: DaeSystem, sig, analysis: EsAnalysis, pivot: int,
             prober: Prober) -> EsApplication:
    """Substitutes the kernel relation through the tight rows.

    Each non-pivot column j gets a fresh state for
    x_j^(d_j-c) - (v_j/v_l) x_l^(d_l-c); occurrences of x_j at that order
    and above are rewritten in terms of it.
    """
    if not analysis.condition_ok:
        raise ConditionRejected("substitution order condition fails")
    if len(analysis.cols) < 2 or not analysis.rows:
        raise ConditionRejected("kernel vector touches too little of the system")
    if pivot not in analysis.cols:
        raise PivotRejected("column %d is not in the kernel support" % (pivot + 1))
    v_l = analysis.v[pivot]
    if not prober.verdict(v_l).proven_nonzero:
        raise PivotRejected("cannot divide by entry %d, not proven nonzero"
                            % (pivot + 1))
    off = analysis.off
    c_bar = analysis.c_over
    r_l = off.d[pivot] - c_bar
    if isinstance(v_l, Const):
        inv = Const(Fraction(1) / v_l.value)
    else:
        inv = Pow(v_l, -1)

    grown = system
    taken_vars = set(system.var_names) | {p for p, _ in system.params} \
        | set(system.input_names)
    taken_eqs = {eq.name for eq in system.equations}
    renamed = []
    bases = {}
    for j in analysis.cols:
        if j == pivot:
            continue
        ratio = simplify(Mul((analysis.v[j], inv)))
        q = Mul((ratio, StateDeriv(pivot, r_l)))
        r_j = off.d[j] - c_bar
        definition = simplify(Add((StateDeriv(j, r_j), Neg(q))))
        var_name = fresh_indexed("x", system.n + 1, taken_vars)
        eq_name = fresh_indexed("f", system.n + 1, taken_eqs)
        taken_vars.add(var_name)
        taken_eqs.add(eq_name)
        new_index = grown.n
        raw = Add((Neg(StateDeriv(new_index, 0)), StateDeriv(j, r_j), Neg(q)))
        g = make_equation(eq_name, raw, origin="es_appended",
                          alias="y%d" % (j + 1))
        grown = append_equation_and_variable(grown, var_name, g)
        renamed.append(Renaming(j, new_index, var_name, eq_name,
                                "y%d" % (j + 1), r_j, definition))
        # what x_j^(r_j) becomes: the fresh state plus the pivot share
        bases[j] = Add((StateDeriv(new_index, 0), q))

    per_row = {}
    for i in analysis.rows:
        present = atoms(system.equations[i].expr)
        subs = []
        for rec in renamed:
            for k in range(rec.order, off.d[rec.col] - off.c[i] + 1):
                if StateDeriv(rec.col, k) not in present:
                    continue
                subs.append(Substitution(rec.col, k,
                                         total_derivative(bases[rec.col],
                                                          k - rec.order)))
        if subs:
            per_row[i] = tuple(subs)
    converted = apply_substitutions(grown, per_row, origin="es_rewritten")
    return EsApplication(converted, analysis, pivot, tuple(renamed),
                         tuple(sorted(per_row)))


def es_equivalence_probes(before: DaeSystem, app: EsApplication,
                          prober: Prober, points: int = PROBE_POINTS) -> int:
    """Checks each rewritten row against its original at random points.

    Fresh states are bound through their defining relations (and the
    derivatives of those), so a rewritten row and its original must agree;
    appended rows must vanish.
    """
    defs = {}
    max_order = {rec.new_index: 0 for rec in app.renamed}
    exprs = [app.system.equations[i].expr
             for i in app.rewritten + tuple(r.new_index for r in app.renamed)]
    for e in exprs:
        for a in atoms(e):
            if isinstance(a, StateDeriv) and a.index in max_order:
                max_order[a.index] = max(max_order[a.index], a.order)
    base_atoms = set()
    for rec in app.renamed:
        for m in range(max_order[rec.new_index] + 1):
            d = total_derivative(rec.definition, m)
            defs[StateDeriv(rec.new_index, m)] = d
            base_atoms |= atoms(d)
    originals = [before.equations[i].expr for i in app.rewritten]
    for e in originals:
        base_atoms |= atoms(e)
    for e in exprs:
        base_atoms |= {a for a in atoms(e)
                       if not (isinstance(a, StateDeriv) and a.index in max_order)}

    def check(b):
        full = dict(b)
        exact = True
        for atom, d in defs.items():
            val, ex = evaluate_ex(d, b)
            full[atom] = val
            exact = exact and ex
        worst = Fraction(0)
        for i in app.rewritten:
            lhs, e1 = evaluate_ex(app.system.equations[i].expr, full)
            rhs, e2 = evaluate_ex(before.equations[i].expr, b)
            exact = exact and e1 and e2
            worst = max(worst, abs(Fraction(lhs) - Fraction(rhs)))
        for rec in app.renamed:
            val, e3 = evaluate_ex(app.system.equations[rec.new_index].expr, full)
            exact = exact and e3
            worst = max(worst, abs(Fraction(val)))
        return Fraction(0), worst, exact

    rng = random.Random("%s:es:%s:%d" % (prober.seed, before.name, app.pivot))
    compared = 0
    for _ in range(points):
        got = _compare_point(rng, base_atoms, before.param_values, check)
        if got is None:
            prober.uncertain_seen = True
            continue
        compared += 1
    if compared == 0:
        prober.uncertain_seen = True
    return compared


# ---------------------------------------------------------------------------
# shared probe-point machinery

def _compare_point(rng, needed, param_values, check):
    """Draws one binding and runs check(b) -> (lhs, rhs, exact).

    Returns True on agreement, None when the domain kept rejecting draws,
    raises ConvertError on a genuine mismatch.
    """
    ats = sorted(needed, key=repr)
    for _ in range(_MAX_REDRAWS):
        b = {}
        for a in ats:
            if isinstance(a, Param) and param_values.get(a.name) is not None:
                b[a] = Fraction(param_values[a.name])
            else:
                b[a] = Fraction(rng.randint(-50, 50), rng.randint(1, 50))
        try:
            lhs, rhs, exact = check(b)
        except DomainError:
            continue
        diff = abs(Fraction(lhs) - Fraction(rhs))
        if exact:
            if diff != 0:
                raise ConvertError("rewrite is not equivalent at a probe point")
        elif diff > _NUMERIC_GUARD:
            raise ConvertError("rewrite drifted past the numeric guard")
        return True
    return None


# ---------------------------------------------------------------------------
# method choice

@dataclass(frozen=True)
class MethodChoice:
    kind: MethodKind
    pivot: int = -1


def choose_method(lc, es, prober: Prober) -> MethodChoice:
    """Picks a rewrite from a candidate pair of analyses.

    Constant pivots are preferred since they preserve solutions globally:
    a constant combination row wins outright; otherwise a constant
    substitution column; otherwise whichever method still applies, the
    substitution side needing a proven-nonzero entry to divide by.
    """
    L = lc.candidates if lc is not None else ()
    L_hat = lc.const_rows if lc is not None else ()
    usable = es is not None and es.usable
    Jset = es.cols if usable else ()
    J_hat = es.const_cols if usable else ()
    if L_hat:
        return MethodChoice(MethodKind.LC, min(L_hat))
    if L:
        if J_hat:
            return MethodChoice(MethodKind.ES, min(J_hat))
        return MethodChoice(MethodKind.LC, min(L))
    if J_hat:
        return MethodChoice(MethodKind.ES, min(J_hat))
    for j in Jset:
        if prober.verdict(es.v[j]).proven_nonzero:
            return MethodChoice(MethodKind.ES, j)
    return MethodChoice(MethodKind.NEITHER)


# ---------------------------------------------------------------------------
# driver

class FixStatus(Enum):
    SUCCESS = "success"
    ILL_POSED = "ill_posed"
    NO_METHOD = "no_method"
    ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class StepRecord:
    index: int            # 1-based
    kind: MethodKind
    pivot: int            # 0-based
    vector: tuple
    grade: str            # "global" or "local"
    value_before: int
    value_after: object   # int, or -inf when the step exposed ill-posedness
    application: object   # LcApplication or EsApplication
    system: DaeSystem


@dataclass(frozen=True)
class FixReport:
    status: FixStatus
    steps: tuple
    system: DaeSystem
    uncertain: bool
    initial_value: object
    final_value: object
    signature: object     # of the final system
    offsets: object       # None when the final system lost its transversal
    jacobian: object      # final JacobianReport, None when ill-posed

    @property
    def ok(self) -> bool:
        return self.status is FixStatus.SUCCESS


def fix_dae(system: DaeSystem, prober: Prober = None, method: str = None,
            vector=None, pivot: int = None, max_steps: int = None,
            max_basis: int = 4, formal: bool = False) -> FixReport:
    """Iterates conversion steps until the Jacobian is generically
    nonsingular.

    method restricts every step to one rewrite; vector and pivot force the
    first step only (vector entries are used verbatim after verification).
    The step budget defaults to the initial signature value plus one,
    which the strict value decrease makes sufficient for any fixable
    system.
    """
    if prober is None:
        prober = Prober()
    if vector is not None and method is None:
        raise ValueError("a forced vector needs a method to interpret it")
    if method not in (None, "lc", "es"):
        raise ValueError("method must be 'lc' or 'es'")
    current = system
    steps = []
    initial_value = None
    cap = max_steps
    while True:
        sig = signature_matrix(current, formal=formal)
        if not sig.swp:
            return _report(FixStatus.ILL_POSED, steps, current, prober,
                           initial_value, sig, None, None)
        off = canonical_offsets(sig)
        value = sig.value
        if initial_value is None:
            initial_value = value
            if cap is None:
                cap = value + 1
        J = system_jacobian(current, sig, off)
        rep = classify_jacobian(J, prober)
        if not rep.singular:
            return _report(FixStatus.SUCCESS, steps, current, prober,
                           initial_value, sig, off, rep)
        if len(steps) >= cap:
            return _report(FixStatus.ITERATION_CAP, steps, current, prober,
                           initial_value, sig, off, rep)

        forced = vector if not steps else None
        found = None
        if forced is not None:
            found = _forced_candidate(current, sig, off, J, forced,
                                      pivot, method, prober)
        else:
            found = _search_candidates(current, sig, off, J, method,
                                       prober, max_basis)
        if found is None:
            return _report(FixStatus.NO_METHOD, steps, current, prober,
                           initial_value, sig, off, rep)
        kind, analysis, chosen_pivot = found
        if kind is MethodKind.LC:
            app = lc_apply(current, analysis, chosen_pivot)
            lc_equivalence_probes(current, app, prober)
            entry = analysis.u[chosen_pivot]
        else:
            app = es_apply(current, sig, analysis, chosen_pivot, prober)
            es_equivalence_probes(current, app, prober)
            entry = analysis.v[chosen_pivot]
        after_sig = signature_matrix(app.system, formal=formal)
        value_after = after_sig.value if after_sig.swp else float("-inf")
        if not value_after < value:
            raise ConvertError("conversion step did not decrease the "
                               "signature value")
        grade = "global" if isinstance(entry, Const) else "local"
        steps.append(StepRecord(len(steps) + 1, kind, chosen_pivot,
                                analysis.u if kind is MethodKind.LC
                                else analysis.v,
                                grade, value, value_after, app, app.system))
        current = app.system


def _report(status, steps, system, prober, initial_value, sig, off, rep):
    final = sig.value if sig.swp else float("-inf")
    return FixReport(status, tuple(steps), system, prober.uncertain_seen,
                     initial_value, final, sig, off, rep)


def _forced_candidate(system, sig, off, J, vector, pivot, method, prober):
    vec = tuple(simplify(e) for e in vector)
    if len(vec) != system.n:
        raise VectorRejected("vector has %d entries, system has %d"
                             % (len(vec), system.n))
    left = method == "lc"
    if not verify_nullvector(J, vec, prober, left=left):
        raise VectorRejected("vector is not a %s null vector of the "
                             "System Jacobian" % ("left" if left else "right"))
    if method == "lc":
        analysis = lc_analyze(system, off, vec, prober)
        if not analysis.condition_ok or not analysis.candidates:
            raise ConditionRejected("combination order condition fails")
        if pivot is None:
            pick = min(analysis.const_rows) if analysis.const_rows \
                else min(analysis.candidates)
        else:
            pick = pivot
        return MethodKind.LC, analysis, pick
    analysis = es_analyze(system, sig, off, vec, prober)
    if not analysis.usable:
        raise ConditionRejected("substitution order condition fails")
    if pivot is None:
        if analysis.const_cols:
            pick = min(analysis.const_cols)
        else:
            pick = next((j for j in analysis.cols
                         if prober.verdict(analysis.v[j]).proven_nonzero), None)
            if pick is None:
                raise PivotRejected("no entry of the vector is proven nonzero")
    else:
        pick = pivot
    return MethodKind.ES, analysis, pick


def _search_candidates(system, sig, off, J, method, prober, max_basis):
    stuck = False
    for basis_index in range(max_basis):
        us = vs = ()
        if method != "es":
            try:
                u0 = cokernel_vector(J, prober, basis_index)
            except EliminationStuck:
                u0, stuck = None, True
            if u0 is not None:
                us = normalize_candidates(u0, J, prober, left=True)
        if method != "lc":
            try:
                v0 = kernel_vector(J, prober, basis_index)
            except EliminationStuck:
                v0, stuck = None, True
            if v0 is not None:
                vs = normalize_candidates(v0, J, prober)
        if not us and not vs:
            break
        for u_c, v_c in zip_longest(us, vs):
            lc = lc_analyze(system, off, u_c, prober) if u_c else None
            es = es_analyze(system, sig, off, v_c, prober) if v_c else None
            choice = choose_method(lc, es, prober)
            if choice.kind is MethodKind.LC:
                return MethodKind.LC, lc, choice.pivot
            if choice.kind is MethodKind.ES:
                return MethodKind.ES, es, choice.pivot
    if stuck:
        prober.uncertain_seen = True
    return None
