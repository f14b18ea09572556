"""Deciding whether an expression is identically zero.

Three outcomes: PROVEN_ZERO (normal form is the zero constant),
PROVEN_NONZERO (a probe point evaluates to something nonzero), and
PROBABLY_ZERO (a probe budget was spent without finding a nonzero value).
Probing is deterministic: the RNG is keyed on the seed and on the normal form
of the expression, so the same question always gets the same answer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .expr import (
    Const, DomainError, Expr, _key, atoms, evaluate_ex, simplify,
)

DEFAULT_BUDGET = 8
DEFAULT_SEED = "daefix"

# below this magnitude an mpmath-tainted value counts as zero evidence
NONZERO_GUARD = Fraction(1, 10 ** 40)

_MAX_REDRAWS = 10


class ZeroKind(Enum):
    PROVEN_ZERO = "proven_zero"
    PROVEN_NONZERO = "proven_nonzero"
    PROBABLY_ZERO = "probably_zero"


@dataclass(frozen=True)
class Verdict:
    kind: ZeroKind
    value: Optional[Fraction] = None
    witness: Optional[dict] = field(default=None, compare=False)
    probes: int = 0
    domain_warning: bool = False

    @property
    def proven_zero(self) -> bool:
        return self.kind is ZeroKind.PROVEN_ZERO

    @property
    def proven_nonzero(self) -> bool:
        return self.kind is ZeroKind.PROVEN_NONZERO

    @property
    def probably_zero(self) -> bool:
        return self.kind is ZeroKind.PROBABLY_ZERO

    @property
    def is_zero(self) -> bool:
        """Zero for decision purposes; PROBABLY_ZERO keeps uncertainty alive."""
        return self.kind is not ZeroKind.PROVEN_NONZERO


class Prober:
    """Zero-tests expressions with a fixed budget of rational probe points.

    uncertain_seen flips to True whenever a PROBABLY_ZERO verdict is handed
    out; drivers use it to mark results that rest on unproven zeros.
    """

    def __init__(self, budget: int = DEFAULT_BUDGET, seed=DEFAULT_SEED):
        if budget < 1:
            raise ValueError("budget must be at least 1")
        self.budget = budget
        self.seed = seed
        self.uncertain_seen = False
        self._cache: dict = {}

    def verdict(self, e: Expr) -> Verdict:
        s = simplify(e)
        v = self._cache.get(s)
        if v is None:
            v = self._decide(s)
            self._cache[s] = v
        if v.probably_zero:
            self.uncertain_seen = True
        return v

    def is_zero(self, e: Expr) -> bool:
        return self.verdict(e).is_zero

    def _decide(self, s: Expr) -> Verdict:
        if isinstance(s, Const):
            if s.value == 0:
                return Verdict(ZeroKind.PROVEN_ZERO)
            return Verdict(ZeroKind.PROVEN_NONZERO, value=s.value)
        rng = random.Random("%s:%r" % (self.seed, s))
        ats = sorted(atoms(s), key=_key)
        probes = 0
        redraws = 0
        warning = False
        while probes < self.budget:
            b = {a: Fraction(rng.randint(-50, 50), rng.randint(1, 50)) for a in ats}
            try:
                v, exact = evaluate_ex(s, b)
            except DomainError:
                redraws += 1
                if redraws >= _MAX_REDRAWS:
                    warning = True
                    break
                continue
            if (exact and v != 0) or (not exact and abs(v) >= NONZERO_GUARD):
                return Verdict(ZeroKind.PROVEN_NONZERO, value=v, witness=b,
                               probes=probes + 1)
            probes += 1
        return Verdict(ZeroKind.PROBABLY_ZERO, probes=probes,
                       domain_warning=warning)
