"""Expression trees for DAE equations.

Everything is exact: constants are Fractions, arithmetic on trees never
rounds.  Transcendental evaluation goes through mpmath at high precision and
the caller is told the result is inexact.

The normal form produced by simplify() is an expanded polynomial over the
atoms (time, state derivatives, driving functions, parameters) and function
factors: an Add of terms, each term a Mul of a Fraction coefficient and
sorted factor powers.  Products are always distributed over sums so that
cancellation across rows of a linear combination actually happens; huge
expansions are capped and the offending sum is kept as an opaque factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Sequence, Union

import mpmath

NEG_INF = float("-inf")

FUNCS = ("sin", "cos", "exp", "ln", "sqrt")

_MP_DPS = 70

# term-count ceiling when distributing products / expanding integer powers
_TERM_CAP = 3000


class DomainError(ValueError):
    """Raised when evaluation leaves a function's domain (ln(x<=0), sqrt(x<0), 0**-n)."""


class MissingBinding(KeyError):
    """An atom had no value in the bindings passed to evaluate()."""

    def __init__(self, atom: "Expr"):
        super().__init__(atom)
        self.atom = atom


Number = Union[int, Fraction]


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add((self, _wrap(other)))

    def __radd__(self, other):
        return Add((_wrap(other), self))

    def __sub__(self, other):
        return Add((self, Neg(_wrap(other))))

    def __rsub__(self, other):
        return Add((_wrap(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, _wrap(other)))

    def __rmul__(self, other):
        return Mul((_wrap(other), self))

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("exponents must be int")
        return Pow(self, n)

    def __truediv__(self, other):
        other = _wrap(other)
        if isinstance(other, Const):
            return Mul((self, Const(Fraction(1) / other.value)))
        return Mul((self, Pow(other, -1)))

    def __rtruediv__(self, other):
        return Mul((_wrap(other), Pow(self, -1)))


def _wrap(v) -> "Expr":
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return Const(Fraction(v))
    raise TypeError("cannot use %r in an expression" % (v,))


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class TimeVar(Expr):
    """The independent variable t."""


@dataclass(frozen=True)
class StateDeriv(Expr):
    """order-th time derivative of state variable number `index` (0-based)."""

    index: int
    order: int = 0


@dataclass(frozen=True)
class DrivingFn(Expr):
    """order-th derivative of a known driving (input) function of t."""

    name: str
    order: int = 0


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Mul(Expr):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int):
            raise TypeError("Pow exponent must be int")


@dataclass(frozen=True)
class Neg(Expr):
    child: Expr


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCS:
            raise ValueError("unknown function %r" % (self.name,))


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def con(v: Number) -> Const:
    return Const(Fraction(v))


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (Add, Mul)):
        for c in e.children:
            yield from walk(c)
    elif isinstance(e, Pow):
        yield from walk(e.base)
    elif isinstance(e, Neg):
        yield from walk(e.child)
    elif isinstance(e, Func):
        yield from walk(e.arg)


def atoms(e: Expr) -> set:
    """All leaf atoms (TimeVar / StateDeriv / DrivingFn / Param) in e."""
    return {n for n in walk(e) if isinstance(n, (TimeVar, StateDeriv, DrivingFn, Param))}


def hod(e: Expr, index: int, presimplify: bool = True):
    """Highest derivative order of state `index` in e; NEG_INF when absent.

    With presimplify=True the tree is brought to normal form first, so
    occurrences that cancel symbolically do not count.  presimplify=False
    reads the tree as written (formal signature).
    """
    if presimplify:
        e = simplify(e)
    best = NEG_INF
    for n in walk(e):
        if isinstance(n, StateDeriv) and n.index == index and n.order > best:
            best = n.order
    return best


def state_indices(e: Expr, presimplify: bool = False) -> set:
    if presimplify:
        e = simplify(e)
    return {n.index for n in walk(e) if isinstance(n, StateDeriv)}


# ---------------------------------------------------------------------------
# normal form

# a polynomial is {monomial: coefficient}; a monomial is a sorted tuple of
# (factor, int exponent) pairs; factors are canonical non-Const subtrees

_SIMPLIFY_CACHE: dict = {}


def simplify(e: Expr) -> Expr:
    r = _SIMPLIFY_CACHE.get(e)
    if r is None:
        r = _from_poly(_trig_reduce(_poly(e)))
        _SIMPLIFY_CACHE[e] = r
        _SIMPLIFY_CACHE[r] = r
    return r


def _key(e: Expr):
    if isinstance(e, TimeVar):
        return (0,)
    if isinstance(e, StateDeriv):
        return (1, e.index, e.order)
    if isinstance(e, DrivingFn):
        return (2, e.name, e.order)
    if isinstance(e, Param):
        return (3, e.name)
    if isinstance(e, Func):
        return (4, e.name, _key(e.arg))
    if isinstance(e, Pow):
        return (5, _key(e.base), e.exponent)
    if isinstance(e, Mul):
        return (6, tuple(_key(c) for c in e.children))
    if isinstance(e, Add):
        return (7, tuple(_key(c) for c in e.children))
    if isinstance(e, Neg):
        return (8, _key(e.child))
    if isinstance(e, Const):
        return (9, e.value)
    raise TypeError("not an Expr: %r" % (e,))


def _mono_key(m):
    # constants (empty monomial) sort after everything else
    if not m:
        return (1,)
    return (0, tuple((_key(f), k) for f, k in m))


def _poly(e: Expr) -> dict:
    if isinstance(e, Const):
        return {(): e.value} if e.value else {}
    if isinstance(e, (TimeVar, StateDeriv, DrivingFn, Param)):
        return {((e, 1),): Fraction(1)}
    if isinstance(e, Neg):
        return {m: -c for m, c in _poly(e.child).items()}
    if isinstance(e, Add):
        out: dict = {}
        for ch in e.children:
            for m, c in _poly(ch).items():
                c2 = out.get(m, 0) + c
                if c2:
                    out[m] = c2
                else:
                    out.pop(m, None)
        return out
    if isinstance(e, Mul):
        out = {(): Fraction(1)}
        for ch in e.children:
            out = _p_mul(out, _poly(ch))
        return out
    if isinstance(e, Pow):
        return _p_pow(_poly(e.base), e.exponent)
    if isinstance(e, Func):
        return _func_poly(e.name, simplify(e.arg))
    raise TypeError("not an Expr: %r" % (e,))


def _func_poly(name: str, arg: Expr) -> dict:
    """Poly for name(arg), arg already canonical; folds exact constant cases."""
    if isinstance(arg, Const):
        v = arg.value
        if name == "sin" and v == 0:
            return {}
        if name == "cos" and v == 0:
            return {(): Fraction(1)}
        if name == "exp" and v == 0:
            return {(): Fraction(1)}
        if name == "ln":
            if v <= 0:
                raise DomainError("ln of nonpositive constant %s" % v)
            if v == 1:
                return {}
        if name == "sqrt":
            if v < 0:
                raise DomainError("sqrt of negative constant %s" % v)
            rn = math.isqrt(v.numerator)
            rd = math.isqrt(v.denominator)
            if rn * rn == v.numerator and rd * rd == v.denominator:
                return {(): Fraction(rn, rd)} if rn else {}
    return {((Func(name, arg), 1),): Fraction(1)}


def _collapse(p: dict) -> dict:
    if len(p) <= 1:
        return p
    return {((_from_poly(p), 1),): Fraction(1)}


def _p_mul(p: dict, q: dict) -> dict:
    if not p or not q:
        return {}
    if len(p) * len(q) > _TERM_CAP:
        p = _collapse(p)
        q = _collapse(q)
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            exps: dict = {}
            for f, k in m1:
                exps[f] = exps.get(f, 0) + k
            for f, k in m2:
                exps[f] = exps.get(f, 0) + k
            for m3, c3 in _mono_from_exps(exps).items():
                c = c1 * c2 * c3
                c4 = out.get(m3, 0) + c
                if c4:
                    out[m3] = c4
                else:
                    out.pop(m3, None)
    return out


def _mono_from_exps(exps: dict) -> dict:
    """Rebuild a monomial from a factor->exponent map, applying power rewrites.

    exp(a)**k -> exp(k*a); sqrt(u)**(2m+r) -> u**m * sqrt(u)**r.  Rewrites can
    cascade (merged exp factors colliding, sqrt bases expanding), so this may
    recurse; every step shrinks the rewritten material.
    """
    plain: list = []
    extras: list = []
    for f in sorted(exps, key=_key):
        k = exps[f]
        if k == 0:
            continue
        if isinstance(f, Func) and f.name == "exp" and k != 1:
            arg2 = simplify(Mul((Const(Fraction(k)), f.arg)))
            extras.append(_func_poly("exp", arg2))
            continue
        if isinstance(f, Func) and f.name == "sqrt" and not (0 <= k <= 1):
            half, rem = divmod(k, 2)
            extras.append(_p_pow(_poly(f.arg), half))
            if rem:
                plain.append((f, 1))
            continue
        plain.append((f, k))
    # collisions created by the rewrites are re-merged by _p_mul below
    out = {tuple(plain): Fraction(1)}
    for q in extras:
        out = _p_mul(out, q)
    return out


def _p_pow(p: dict, n: int) -> dict:
    if n == 0:
        return {(): Fraction(1)}
    if n < 0:
        if not p:
            raise DomainError("zero raised to a negative power")
        if len(p) == 1:
            ((m, c),) = p.items()
            inv = _mono_from_exps({f: -k for f, k in m})
            inv = {mm: cc / c for mm, cc in inv.items()}
            return _p_pow(inv, -n)
        return {((_from_poly(p), n),): Fraction(1)}
    out = dict(p)
    for _ in range(n - 1):
        out = _p_mul(out, p)
    return out


def _trig_reduce(p: dict) -> dict:
    """Collapse sin(a)^2 * R against a matching cos(a)^2 * R partner."""
    p = dict(p)
    changed = True
    while changed:
        changed = False
        for m in sorted(p, key=_mono_key):
            c1 = p.get(m)
            if c1 is None:
                continue
            hit = None
            for f, k in m:
                if isinstance(f, Func) and f.name == "sin" and k >= 2:
                    hit = (f, k)
                    break
            if hit is None:
                continue
            f, k = hit
            partner = _mono_adjusted(m, f.arg, k - 2, 2)
            c2 = p.get(partner)
            if c2 is None:
                continue
            target = _mono_adjusted(m, f.arg, k - 2, 0)
            del p[m]
            p.pop(partner, None)
            tc = p.get(target, 0) + c1
            if tc:
                p[target] = tc
            else:
                p.pop(target, None)
            if c2 != c1:
                p[partner] = c2 - c1
            changed = True
            break
    return p


def _mono_adjusted(m, arg, sin_exp, cos_delta):
    exps: dict = {}
    for f, k in m:
        exps[f] = exps.get(f, 0) + k
    sinf, cosf = Func("sin", arg), Func("cos", arg)
    exps[sinf] = sin_exp
    if cos_delta:
        exps[cosf] = exps.get(cosf, 0) + cos_delta
    items = [(f, k) for f, k in exps.items() if k != 0]
    items.sort(key=lambda fk: _key(fk[0]))
    return tuple(items)


def _term_expr(m, c: Fraction) -> Expr:
    if not m:
        return Const(c)
    factors = [f if k == 1 else Pow(f, k) for f, k in m]
    if c == 1:
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))
    return Mul((Const(c), *factors))


def _from_poly(p: dict) -> Expr:
    if not p:
        return ZERO
    terms = [_term_expr(m, p[m]) for m in sorted(p, key=_mono_key)]
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


# ---------------------------------------------------------------------------
# calculus

def total_derivative(e: Expr, k: int = 1) -> Expr:
    """k-th total time derivative; returns a raw (unsimplified) tree."""
    for _ in range(k):
        e = _dt(e)
    return e


def _dt(e: Expr) -> Expr:
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, TimeVar):
        return ONE
    if isinstance(e, StateDeriv):
        return StateDeriv(e.index, e.order + 1)
    if isinstance(e, DrivingFn):
        return DrivingFn(e.name, e.order + 1)
    if isinstance(e, Neg):
        return Neg(_dt(e.child))
    if isinstance(e, Add):
        return Add(tuple(_dt(c) for c in e.children))
    if isinstance(e, Mul):
        terms = []
        for i, c in enumerate(e.children):
            dc = _dt(c)
            if dc == ZERO:
                continue
            parts = list(e.children)
            parts[i] = dc
            terms.append(Mul(tuple(parts)))
        if not terms:
            return ZERO
        return terms[0] if len(terms) == 1 else Add(tuple(terms))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return ZERO
        return Mul((Const(Fraction(e.exponent)), Pow(e.base, e.exponent - 1), _dt(e.base)))
    if isinstance(e, Func):
        da = _dt(e.arg)
        if da == ZERO:
            return ZERO
        if e.name == "sin":
            outer: Expr = Func("cos", e.arg)
        elif e.name == "cos":
            outer = Neg(Func("sin", e.arg))
        elif e.name == "exp":
            outer = e
        elif e.name == "ln":
            outer = Pow(e.arg, -1)
        else:  # sqrt
            outer = Mul((Const(Fraction(1, 2)), Pow(e, -1)))
        return Mul((outer, da))
    raise TypeError("not an Expr: %r" % (e,))


def partial(e: Expr, atom: Expr) -> Expr:
    """Partial derivative with respect to one atom, all other atoms held fixed."""
    if e == atom:
        return ONE
    if isinstance(e, (Const, TimeVar, StateDeriv, DrivingFn, Param)):
        return ZERO
    if isinstance(e, Neg):
        return Neg(partial(e.child, atom))
    if isinstance(e, Add):
        return Add(tuple(partial(c, atom) for c in e.children))
    if isinstance(e, Mul):
        terms = []
        for i, c in enumerate(e.children):
            dc = partial(c, atom)
            if dc == ZERO:
                continue
            parts = list(e.children)
            parts[i] = dc
            terms.append(Mul(tuple(parts)))
        if not terms:
            return ZERO
        return terms[0] if len(terms) == 1 else Add(tuple(terms))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return ZERO
        db = partial(e.base, atom)
        if db == ZERO:
            return ZERO
        return Mul((Const(Fraction(e.exponent)), Pow(e.base, e.exponent - 1), db))
    if isinstance(e, Func):
        da = partial(e.arg, atom)
        if da == ZERO:
            return ZERO
        if e.name == "sin":
            outer: Expr = Func("cos", e.arg)
        elif e.name == "cos":
            outer = Neg(Func("sin", e.arg))
        elif e.name == "exp":
            outer = e
        elif e.name == "ln":
            outer = Pow(e.arg, -1)
        else:
            outer = Mul((Const(Fraction(1, 2)), Pow(e, -1)))
        return Mul((outer, da))
    raise TypeError("not an Expr: %r" % (e,))


def subst_atoms(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    """Replace atom occurrences simultaneously; replacements are not re-scanned."""
    if e in mapping:
        return mapping[e]
    if isinstance(e, (Const, TimeVar, StateDeriv, DrivingFn, Param)):
        return e
    if isinstance(e, Add):
        return Add(tuple(subst_atoms(c, mapping) for c in e.children))
    if isinstance(e, Mul):
        return Mul(tuple(subst_atoms(c, mapping) for c in e.children))
    if isinstance(e, Pow):
        return Pow(subst_atoms(e.base, mapping), e.exponent)
    if isinstance(e, Neg):
        return Neg(subst_atoms(e.child, mapping))
    if isinstance(e, Func):
        return Func(e.name, subst_atoms(e.arg, mapping))
    raise TypeError("not an Expr: %r" % (e,))


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, bindings: Mapping[Expr, Fraction]) -> Fraction:
    return _evaluate_ex(e, bindings)[0]


def evaluate_ex(e: Expr, bindings: Mapping[Expr, Fraction]):
    """Returns (value, exact) where exact is False once mpmath was involved."""
    return _evaluate_ex(e, bindings)


def _evaluate_ex(e: Expr, b: Mapping[Expr, Fraction]):
    if isinstance(e, Const):
        return e.value, True
    if isinstance(e, (TimeVar, StateDeriv, DrivingFn, Param)):
        try:
            return Fraction(b[e]), True
        except KeyError:
            raise MissingBinding(e) from None
    if isinstance(e, Neg):
        v, ex = _evaluate_ex(e.child, b)
        return -v, ex
    if isinstance(e, Add):
        total, exact = Fraction(0), True
        for c in e.children:
            v, ex = _evaluate_ex(c, b)
            total += v
            exact = exact and ex
        return total, exact
    if isinstance(e, Mul):
        total, exact = Fraction(1), True
        for c in e.children:
            v, ex = _evaluate_ex(c, b)
            total *= v
            exact = exact and ex
        return total, exact
    if isinstance(e, Pow):
        v, ex = _evaluate_ex(e.base, b)
        if v == 0 and e.exponent < 0:
            raise DomainError("zero raised to a negative power")
        return v ** e.exponent, ex
    if isinstance(e, Func):
        v, ex = _evaluate_ex(e.arg, b)
        if e.name == "sin":
            if v == 0:
                return Fraction(0), ex
        elif e.name == "cos":
            if v == 0:
                return Fraction(1), ex
        elif e.name == "exp":
            if v == 0:
                return Fraction(1), ex
        elif e.name == "ln":
            if v <= 0:
                raise DomainError("ln of nonpositive value %s" % v)
            if v == 1:
                return Fraction(0), ex
        else:  # sqrt
            if v < 0:
                raise DomainError("sqrt of negative value %s" % v)
            rn = math.isqrt(v.numerator)
            rd = math.isqrt(v.denominator)
            if rn * rn == v.numerator and rd * rd == v.denominator:
                return Fraction(rn, rd), ex
        return _mp_call(e.name, v), False
    raise TypeError("not an Expr: %r" % (e,))


_MP_FUNCS = {"sin": mpmath.sin, "cos": mpmath.cos, "exp": mpmath.exp,
             "ln": mpmath.log, "sqrt": mpmath.sqrt}


def _mp_call(name: str, v: Fraction) -> Fraction:
    with mpmath.workdps(_MP_DPS):
        r = _MP_FUNCS[name](mpmath.mpf(v.numerator) / mpmath.mpf(v.denominator))
        if not mpmath.isfinite(r):
            raise DomainError("%s(%s) is not finite" % (name, v))
        return _mpf_to_fraction(r)


def _mpf_to_fraction(r) -> Fraction:
    sign, man, exp, _ = r._mpf_
    man = int(man)
    if man == 0:
        return Fraction(0)
    v = Fraction(man << exp) if exp >= 0 else Fraction(man, 1 << -exp)
    return -v if sign else v


# ---------------------------------------------------------------------------
# printing

def _prime_marks(order: int) -> str:
    return "'" * order


def format_expr(e: Expr, var_names: Optional[Sequence[str]] = None) -> str:
    return _fmt(e, var_names, 0)


def _state_name(index: int, var_names) -> str:
    if var_names is not None and 0 <= index < len(var_names):
        return var_names[index]
    return "x%d" % (index + 1)


def _split_sign(e: Expr):
    if isinstance(e, Const) and e.value < 0:
        return True, Const(-e.value)
    if isinstance(e, Neg):
        return True, e.child
    if isinstance(e, Mul) and e.children and isinstance(e.children[0], Const) \
            and e.children[0].value < 0:
        c = Const(-e.children[0].value)
        rest = e.children[1:]
        if c.value == 1:
            body = rest[0] if len(rest) == 1 else Mul(rest)
        else:
            body = Mul((c, *rest))
        return True, body
    return False, e


def _fmt(e: Expr, names, prec: int) -> str:
    # precedence: 1 add, 2 mul, 3 unary minus payload, 4 power, 5 atom
    if isinstance(e, Const):
        v = e.value
        s = str(v.numerator) if v.denominator == 1 else "%d/%d" % (v.numerator, v.denominator)
        if v < 0 and prec > 1:
            return "(" + s + ")"
        if v.denominator != 1 and prec >= 4:
            return "(" + s + ")"
        return s
    if isinstance(e, TimeVar):
        return "t"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, StateDeriv):
        nm = _state_name(e.index, names)
        if e.order <= 3:
            return nm + _prime_marks(e.order)
        return "diff(%s,%d)" % (nm, e.order)
    if isinstance(e, DrivingFn):
        if e.order <= 3:
            return "%s%s(t)" % (e.name, _prime_marks(e.order))
        return "diff(%s(t),%d)" % (e.name, e.order)
    if isinstance(e, Func):
        return "%s(%s)" % (e.name, _fmt(e.arg, names, 0))
    if isinstance(e, Pow):
        b = _fmt(e.base, names, 4)
        return "%s^%d" % (b, e.exponent)
    if isinstance(e, Neg):
        s = "-" + _fmt(e.child, names, 3)
        return "(" + s + ")" if prec >= 2 else s
    if isinstance(e, Mul):
        neg, body = _split_sign(e)
        if neg:
            s = "-" + _fmt(body, names, 2)
            return "(" + s + ")" if prec >= 2 else s
        parts = [_fmt(c, names, 2) for c in e.children]
        s = "*".join(parts)
        return "(" + s + ")" if prec >= 3 else s
    if isinstance(e, Add):
        first = True
        out = []
        for c in e.children:
            neg, body = _split_sign(c)
            piece = _fmt(body, names, 2)
            if first:
                out.append(("-" + piece) if neg else piece)
                first = False
            else:
                out.append((" - " if neg else " + ") + piece)
        s = "".join(out)
        return "(" + s + ")" if prec >= 2 else s
    raise TypeError("not an Expr: %r" % (e,))
