"""DAE system model: named equations over named state variables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .expr import (
    DrivingFn, Expr, Param, StateDeriv, hod, simplify, subst_atoms, walk,
)

RESERVED = {"t", "dae", "vars", "params", "input", "eq",
            "sin", "cos", "exp", "ln", "sqrt", "diff"}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Equation:
    """One equation f = 0.

    raw is the tree as written (or as combined/substituted during
    conversion); expr is its normal form.  Signature entries read from raw
    are the formal ones, entries read from expr the true ones.
    """

    name: str
    raw: Expr
    expr: Expr
    origin: str = "original"
    alias: Optional[str] = None


def make_equation(name: str, raw: Expr, origin: str = "original",
                  alias: Optional[str] = None) -> Equation:
    return Equation(name, raw, simplify(raw), origin, alias)


@dataclass(frozen=True, eq=False)
class DaeSystem:
    name: str
    var_names: tuple
    equations: tuple
    params: tuple = ()          # (name, Fraction value or None) pairs
    input_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "var_names", tuple(self.var_names))
        object.__setattr__(self, "equations", tuple(self.equations))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        self._validate()

    def _validate(self):
        if len(self.equations) != len(self.var_names):
            raise ModelError("system must be square: %d equations, %d variables"
                             % (len(self.equations), len(self.var_names)))
        if not self.var_names:
            raise ModelError("system has no variables")
        names = list(self.var_names) + [p for p, _ in self.params] \
            + list(self.input_names)
        seen = set()
        for nm in names:
            if nm in RESERVED:
                raise ModelError("name %r is reserved" % nm)
            if nm in seen:
                raise ModelError("name %r declared twice" % nm)
            seen.add(nm)
        eq_names = set()
        for eq in self.equations:
            if eq.name in eq_names:
                raise ModelError("equation name %r declared twice" % eq.name)
            eq_names.add(eq.name)
        param_names = {p for p, _ in self.params}
        inputs = set(self.input_names)
        n = len(self.var_names)
        for eq in self.equations:
            for node in walk(eq.raw):
                if isinstance(node, StateDeriv) and not 0 <= node.index < n:
                    raise ModelError("equation %s uses undeclared state %d"
                                     % (eq.name, node.index))
                if isinstance(node, Param) and node.name not in param_names:
                    raise ModelError("equation %s uses undeclared parameter %r"
                                     % (eq.name, node.name))
                if isinstance(node, DrivingFn) and node.name not in inputs:
                    raise ModelError("equation %s uses undeclared input %r"
                                     % (eq.name, node.name))

    @property
    def n(self) -> int:
        return len(self.var_names)

    @property
    def param_values(self) -> dict:
        return {p: v for p, v in self.params}

    def var_index(self, name: str) -> int:
        try:
            return self.var_names.index(name)
        except ValueError:
            raise ModelError("unknown variable %r" % name) from None

    def with_equations(self, equations: Sequence[Equation]) -> "DaeSystem":
        return DaeSystem(self.name, self.var_names, tuple(equations),
                         self.params, self.input_names)


@dataclass(frozen=True)
class Substitution:
    """Replace the atom d^order x_{var_index}/dt^order by `replacement`."""

    var_index: int
    order: int
    replacement: Expr

    def __post_init__(self):
        if self.order < 0:
            raise ModelError("substitution order must be nonnegative")
        if hod(self.replacement, self.var_index, presimplify=False) >= self.order:
            raise ModelError(
                "substitution for state %d order %d would reintroduce an "
                "equal or higher derivative of the same state"
                % (self.var_index, self.order))


def apply_substitutions(system: DaeSystem,
                        per_row: Mapping[int, Sequence[Substitution]],
                        origin: str = "es_rewritten") -> DaeSystem:
    """Rewrite the given rows, each with its own simultaneous substitution set."""
    eqs = list(system.equations)
    for row, subs in per_row.items():
        if not 0 <= row < len(eqs):
            raise ModelError("row %d out of range" % row)
        if not subs:
            continue
        mapping = {}
        for s in subs:
            key = StateDeriv(s.var_index, s.order)
            if key in mapping:
                raise ModelError("duplicate substitution for %r" % (key,))
            mapping[key] = s.replacement
        old = eqs[row]
        raw = subst_atoms(old.expr, mapping)
        eqs[row] = Equation(old.name, raw, simplify(raw), origin, old.alias)
    return system.with_equations(eqs)


def append_equation_and_variable(system: DaeSystem, var_name: str,
                                 equation: Equation) -> DaeSystem:
    """Grow the square system by one fresh variable and one equation."""
    taken = set(system.var_names) | {p for p, _ in system.params} \
        | set(system.input_names)
    if var_name in taken or var_name in RESERVED:
        raise ModelError("variable name %r is already in use" % var_name)
    return DaeSystem(system.name, system.var_names + (var_name,),
                     system.equations + (equation,), system.params,
                     system.input_names)


def fresh_indexed(prefix: str, start: int, taken) -> str:
    """First of prefix<start>, prefix<start+1>, ... not in `taken`."""
    k = start
    while "%s%d" % (prefix, k) in taken:
        k += 1
    return "%s%d" % (prefix, k)
