"""Text format for DAE systems.

    dae pendulum
    vars x, y, lambda
    params G = 9.8, L = 1
    input h1
    eq f1: x'' + x*lambda = 0

Expressions use + - * / ^ with integer exponents, primes up to ''' for
derivatives (diff(x,k) beyond that), and driving functions always in call
form: h1(t), h1'(t), diff(h1(t),4).  '#' starts a comment.  Decimal literals
are read exactly (9.8 is the rational 49/5).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from .expr import (
    FUNCS, Add, Const, DrivingFn, Expr, Func, Mul, Neg, Param, Pow,
    StateDeriv, TimeVar, format_expr, total_derivative,
)
from .model import RESERVED, DaeSystem, ModelError, make_equation


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__("line %d, col %d: %s" % (line, col, msg))
        self.msg = msg
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<prime>'+)"
    r"|(?P<op>[-+*/^(),=:])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str   # name | num | prime | op | end
    text: str
    col: int


def _tokenize(s: str, line: int, col0: int = 1) -> List[_Tok]:
    out = []
    pos = 0
    while pos < len(s):
        m = _TOKEN_RE.match(s, pos)
        if m is None:
            raise ParseError("unexpected character %r" % s[pos], line, col0 + pos)
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), col0 + m.start()))
    out.append(_Tok("end", "", col0 + len(s)))
    return out


class _ExprParser:
    """Precedence-climbing parser over one tokenized line."""

    def __init__(self, toks: List[_Tok], line: int, var_names, param_names,
                 input_names):
        self.toks = toks
        self.i = 0
        self.line = line
        self.vars = {nm: j for j, nm in enumerate(var_names)}
        self.params = set(param_names)
        self.inputs = set(input_names)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str) -> _Tok:
        t = self.next()
        if t.kind != "op" or t.text != op:
            raise ParseError("expected %r" % op, self.line, t.col)
        return t

    def fail(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        raise ParseError(msg, self.line, tok.col)

    _BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}

    def parse(self, min_bp: int = 0) -> Expr:
        lhs = self.unary()
        while True:
            t = self.peek()
            if t.kind != "op" or t.text not in self._BP:
                return lhs
            bp = self._BP[t.text]
            if bp < min_bp:
                return lhs
            self.next()
            if t.text == "^":
                lhs = Pow(lhs, self.integer_exponent())
                continue
            rhs = self.parse(bp + 1)
            if t.text == "+":
                lhs = Add((lhs, rhs))
            elif t.text == "-":
                lhs = Add((lhs, Neg(rhs)))
            elif t.text == "*":
                lhs = Mul((lhs, rhs))
            else:
                if isinstance(rhs, Const):
                    if rhs.value == 0:
                        self.fail("division by zero", t)
                    lhs = Mul((lhs, Const(Fraction(1) / rhs.value)))
                else:
                    lhs = Mul((lhs, Pow(rhs, -1)))

    def integer_exponent(self) -> int:
        neg = False
        t = self.next()
        if t.kind == "op" and t.text == "(":
            n = self.integer_exponent()
            self.expect_op(")")
            return n
        if t.kind == "op" and t.text == "-":
            neg = True
            t = self.next()
        if t.kind != "num" or not t.text.isdigit():
            raise ParseError("exponent must be an integer literal", self.line, t.col)
        return -int(t.text) if neg else int(t.text)

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            return Neg(self.parse(25))
        if t.kind == "op" and t.text == "+":
            self.next()
            return self.parse(25)
        return self.primary()

    def primary(self) -> Expr:
        t = self.next()
        if t.kind == "op" and t.text == "(":
            e = self.parse()
            self.expect_op(")")
            return e
        if t.kind == "num":
            return Const(Fraction(t.text))
        if t.kind == "name":
            return self.named(t)
        self.fail("expected an expression", t)

    def primes(self) -> int:
        t = self.peek()
        if t.kind == "prime":
            self.next()
            if len(t.text) > 3:
                raise ParseError("more than three primes; use diff(...,k)",
                                 self.line, t.col)
            return len(t.text)
        return 0

    def named(self, t: _Tok) -> Expr:
        name = t.text
        if name == "t":
            return TimeVar()
        if name == "diff":
            return self.diff_call(t)
        if name in FUNCS:
            self.expect_op("(")
            arg = self.parse()
            self.expect_op(")")
            return Func(name, arg)
        if name in self.vars:
            return StateDeriv(self.vars[name], self.primes())
        if name in self.inputs:
            order = self.primes()
            nxt = self.peek()
            if not (nxt.kind == "op" and nxt.text == "("):
                self.fail("driving function %s must be applied to t: %s(t)"
                          % (name, name), t)
            self.next()
            arg = self.next()
            if arg.kind != "name" or arg.text != "t":
                raise ParseError("driving functions take t only", self.line, arg.col)
            self.expect_op(")")
            return DrivingFn(name, order)
        if name in self.params:
            if self.peek().kind == "prime":
                self.fail("parameter %s is constant and cannot be differentiated"
                          % name, t)
            return Param(name)
        self.fail("unknown name %r" % name, t)

    def diff_call(self, t: _Tok) -> Expr:
        self.expect_op("(")
        inner = self.parse()
        self.expect_op(",")
        k_tok = self.peek()
        k = self.integer_exponent()
        if k < 0:
            raise ParseError("derivative order must be nonnegative",
                             self.line, k_tok.col)
        self.expect_op(")")
        if isinstance(inner, StateDeriv):
            return StateDeriv(inner.index, inner.order + k)
        if isinstance(inner, DrivingFn):
            return DrivingFn(inner.name, inner.order + k)
        return total_derivative(inner, k)

    def at_end(self) -> bool:
        return self.peek().kind == "end"


def _parse_expr_tokens(toks, line, var_names, param_names, input_names) -> Expr:
    p = _ExprParser(toks, line, var_names, param_names, input_names)
    e = p.parse()
    if not p.at_end():
        p.fail("unexpected trailing input")
    return e


def parse_expr(text: str, system: DaeSystem, line: int = 1) -> Expr:
    """Parse a standalone expression in the naming environment of `system`."""
    toks = _tokenize(text, line)
    return _parse_expr_tokens(toks, line, system.var_names,
                              [p for p, _ in system.params],
                              system.input_names)


_NAME_ONLY = re.compile(r"[A-Za-z_]\w*$")


def _check_name(name: str, line: int, col: int):
    if not _NAME_ONLY.match(name):
        raise ParseError("invalid name %r" % name, line, col)
    if name in RESERVED:
        raise ParseError("%r is reserved" % name, line, col)


def parse_dae(text: str) -> DaeSystem:
    sys_name = None
    var_names: list = []
    params: list = []
    input_names: list = []
    equations: list = []
    for line_no, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        head = stripped.split(None, 1)[0]
        if sys_name is None:
            if head != "dae":
                raise ParseError("file must start with 'dae <name>'", line_no, 1)
            rest = stripped[3:].strip()
            if not _NAME_ONLY.match(rest):
                raise ParseError("invalid system name %r" % rest, line_no, 5)
            sys_name = rest
            continue
        if head == "dae":
            raise ParseError("duplicate 'dae' line", line_no, 1)
        if head in ("vars", "params", "input"):
            toks = _tokenize(stripped[len(head):], line_no, len(head) + 1)
            i = 0
            while toks[i].kind != "end":
                t = toks[i]
                if t.kind != "name":
                    raise ParseError("expected a name", line_no, t.col)
                _check_name(t.text, line_no, t.col)
                i += 1
                if head == "params" and toks[i].kind == "op" and toks[i].text == "=":
                    i += 1
                    negative = False
                    if toks[i].kind == "op" and toks[i].text == "-":
                        negative = True
                        i += 1
                    if toks[i].kind != "num":
                        raise ParseError("expected a number", line_no, toks[i].col)
                    v = Fraction(toks[i].text)
                    i += 1
                    if toks[i].kind == "op" and toks[i].text == "/":
                        i += 1
                        if toks[i].kind != "num" or not toks[i].text.isdigit():
                            raise ParseError("expected an integer denominator",
                                             line_no, toks[i].col)
                        v /= Fraction(toks[i].text)
                        i += 1
                    params.append((t.text, -v if negative else v))
                elif head == "params":
                    params.append((t.text, None))
                elif head == "vars":
                    var_names.append(t.text)
                else:
                    input_names.append(t.text)
                if toks[i].kind == "op" and toks[i].text == ",":
                    i += 1
                elif toks[i].kind != "end":
                    raise ParseError("expected ',' or end of line", line_no,
                                     toks[i].col)
            continue
        if head == "eq":
            toks = _tokenize(stripped[2:], line_no, 3)
            if toks[0].kind != "name":
                raise ParseError("expected an equation name", line_no, toks[0].col)
            eq_name = toks[0].text
            _check_name(eq_name, line_no, toks[0].col)
            if toks[1].kind != "op" or toks[1].text != ":":
                raise ParseError("expected ':' after equation name", line_no,
                                 toks[1].col)
            p = _ExprParser(toks[2:], line_no, var_names,
                            [nm for nm, _ in params], input_names)
            lhs = p.parse()
            eq_tok = p.next()
            if eq_tok.kind != "op" or eq_tok.text != "=":
                raise ParseError("expected '=' in equation", line_no, eq_tok.col)
            rhs_start = p.peek()
            rhs = p.parse()
            if not p.at_end():
                p.fail("unexpected trailing input")
            if isinstance(rhs, Const) and rhs.value == 0 \
                    and rhs_start.kind == "num":
                raw = lhs
            else:
                raw = Add((lhs, Neg(rhs)))
            equations.append(make_equation(eq_name, raw))
            continue
        raise ParseError("unknown directive %r" % head, line_no, 1)
    if sys_name is None:
        raise ParseError("empty input", 1, 1)
    try:
        return DaeSystem(sys_name, tuple(var_names), tuple(equations),
                         tuple(params), tuple(input_names))
    except ModelError as err:
        raise ParseError(str(err), len(text.splitlines()), 1) from err


def emit_dae(system: DaeSystem) -> str:
    """Render a system back to the text format (normal-form right-hand sides).

    parse_dae(emit_dae(s)) reproduces s up to simplification of each
    equation.  Non-original equations carry their provenance as comments.
    """
    lines = ["dae %s" % system.name]
    if system.var_names:
        lines.append("vars %s" % ", ".join(system.var_names))
    if system.params:
        parts = []
        for nm, v in system.params:
            parts.append(nm if v is None else "%s = %s" % (nm, v))
        lines.append("params %s" % ", ".join(parts))
    if system.input_names:
        lines.append("input %s" % ", ".join(system.input_names))
    for eq in system.equations:
        if eq.origin != "original":
            note = "# %s: %s" % (eq.name, eq.origin.replace("_", " "))
            if eq.alias:
                note += " (%s)" % eq.alias
            lines.append(note)
        lines.append("eq %s: %s = 0"
                     % (eq.name, format_expr(eq.expr, system.var_names)))
    return "\n".join(lines) + "\n"
