"""Exact differential-polynomial arithmetic over the rationals.

A differential variable is a triple ``(family, index, order)``: the ``order``-th
x-derivative of the function ``family_index``.  The main family is ``u`` (the
curvatures ``u_1 .. u_{n-1}``); auxiliary families (``xi``, ``eta``, ``v``,
``h``, ...) are used by the geometry, Poisson and Backlund layers.  Families
listed in ``CONSTANT_FAMILIES`` are x-independent parameters (``k``): their
total derivative is zero.

A monomial is a sorted tuple of ``(DVar, exponent)`` pairs.  A polynomial is
stored as integer numerators over one common positive denominator,

    poly = (1/den) * sum_m num[m] * m,     gcd(den, content(num)) == 1,

so the inner loops run on machine/bignum integers and each ring operation
normalizes exactly once.  Coefficients are exact rationals throughout;
equality is structural.  The zero polynomial has an empty numerator dict.
All operations return new objects; DiffPoly instances are immutable by
convention and safe to share.
"""

from __future__ import annotations

import json
from fractions import Fraction
from math import gcd
from typing import Callable, Iterable, Mapping, NamedTuple

CONSTANT_FAMILIES = frozenset({"k"})

RationalLike = int | Fraction


class DVar(NamedTuple):
    family: str
    index: int
    order: int


Monomial = tuple[tuple[DVar, int], ...]

_ONE_MONO: Monomial = ()


class DimensionMismatchError(ValueError):
    """A differential variable is out of range for the ambient dimension."""


def u_var(n: int, i: int, m: int = 0) -> "DiffPoly":
    """The curvature variable u_i^{(m)} in ambient dimension n."""
    if not 1 <= i <= n - 1:
        raise DimensionMismatchError(f"u_{i} does not exist for n={n}")
    if m < 0:
        raise ValueError("derivative order must be >= 0")
    return DiffPoly.var("u", i, m)


def _norm_mono(pairs: Iterable[tuple[DVar, int]]) -> Monomial:
    acc: dict[DVar, int] = {}
    for var, exp in pairs:
        if exp:
            acc[var] = acc.get(var, 0) + exp
    return tuple(sorted((v, e) for v, e in acc.items() if e))


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    out: list[tuple[DVar, int]] = []
    i = j = 0
    la, lb = len(a), len(b)
    while i < la and j < lb:
        va, ea = a[i]
        vb, eb = b[j]
        if va == vb:
            out.append((va, ea + eb))
            i += 1
            j += 1
        elif va < vb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out)


class DiffPoly:
    __slots__ = ("num", "den")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        if not terms:
            self.num, self.den = {}, 1
            return
        den = 1
        for c in terms.values():
            c = Fraction(c)
            den = den * c.denominator // gcd(den, c.denominator)
        num = {}
        for m, c in terms.items():
            c = Fraction(c)
            v = c.numerator * (den // c.denominator)
            if v:
                num[m] = v
        self.num, self.den = _normalize(num, den)

    @staticmethod
    def _raw(num: dict[Monomial, int], den: int) -> "DiffPoly":
        p = object.__new__(DiffPoly)
        p.num, p.den = _normalize(num, den)
        return p

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "DiffPoly":
        return DiffPoly._raw({}, 1)

    @staticmethod
    def const(c: RationalLike) -> "DiffPoly":
        c = Fraction(c)
        return DiffPoly._raw({_ONE_MONO: c.numerator} if c else {}, c.denominator)

    @staticmethod
    def var(family: str, index: int, order: int = 0) -> "DiffPoly":
        return DiffPoly._raw({((DVar(family, index, order), 1),): 1}, 1)

    @property
    def terms(self) -> dict[Monomial, Fraction]:
        """Coefficient view as exact Fractions (for inspection/serialization)."""
        return {m: Fraction(v, self.den) for m, v in self.num.items()}

    # -- ring structure ----------------------------------------------------

    def __bool__(self) -> bool:
        return bool(self.num)

    def is_zero(self) -> bool:
        return not self.num

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = DiffPoly.const(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        return self.den == other.den and self.num == other.num

    def __hash__(self):
        return hash((self.den, frozenset(self.num.items())))

    def __add__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            other = DiffPoly.const(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        da, db = self.den, other.den
        if da == db:
            num = dict(self.num)
            for m, v in other.num.items():
                s = num.get(m, 0) + v
                if s:
                    num[m] = s
                else:
                    num.pop(m, None)
            return DiffPoly._raw(num, da)
        g = gcd(da, db)
        sa, sb = db // g, da // g
        num = {m: v * sa for m, v in self.num.items()}
        for m, v in other.num.items():
            s = num.get(m, 0) + v * sb
            if s:
                num[m] = s
            else:
                num.pop(m, None)
        return DiffPoly._raw(num, da * sa)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly._raw({m: -v for m, v in self.num.items()}, self.den)

    def __sub__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            other = DiffPoly.const(other)
        return self + (-other)

    def __rsub__(self, other) -> "DiffPoly":
        return (-self) + other

    def __mul__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if not c:
                return DiffPoly.zero()
            return DiffPoly._raw({m: v * c.numerator for m, v in self.num.items()},
                                 self.den * c.denominator)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        num: dict[Monomial, int] = {}
        for ma, ca in self.num.items():
            for mb, cb in other.num.items():
                m = _mono_mul(ma, mb)
                s = num.get(m, 0) + ca * cb
                if s:
                    num[m] = s
                else:
                    num.pop(m, None)
        return DiffPoly._raw(num, self.den * other.den)

    __rmul__ = __mul__

    def __pow__(self, p: int) -> "DiffPoly":
        if p < 0:
            raise ValueError("negative powers are not polynomial")
        out = DiffPoly.const(1)
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base
            p >>= 1
        return out

    # -- calculus ----------------------------------------------------------

    def derive(self, times: int = 1) -> "DiffPoly":
        """Total x-derivative (Leibniz rule); constants differentiate to 0."""
        poly = self
        for _ in range(times):
            num: dict[Monomial, int] = {}
            for mono, c in poly.num.items():
                for pos, (var, exp) in enumerate(mono):
                    if var.family in CONSTANT_FAMILIES:
                        continue
                    bumped = DVar(var.family, var.index, var.order + 1)
                    rest = list(mono)
                    if exp == 1:
                        del rest[pos]
                    else:
                        rest[pos] = (var, exp - 1)
                    m = _norm_mono(rest + [(bumped, 1)])
                    s = num.get(m, 0) + c * exp
                    if s:
                        num[m] = s
                    else:
                        num.pop(m, None)
            poly = DiffPoly._raw(num, poly.den)
        return poly

    def partial(self, var: DVar) -> "DiffPoly":
        """Partial derivative with respect to one differential variable."""
        num: dict[Monomial, int] = {}
        for mono, c in self.num.items():
            for pos, (v, exp) in enumerate(mono):
                if v != var:
                    continue
                rest = list(mono)
                if exp == 1:
                    del rest[pos]
                else:
                    rest[pos] = (v, exp - 1)
                m = _norm_mono(rest)
                s = num.get(m, 0) + c * exp
                if s:
                    num[m] = s
                else:
                    num.pop(m, None)
        return DiffPoly._raw(num, self.den)

    def euler_lagrange(self, family: str, index: int) -> "DiffPoly":
        """Variational derivative sum_m (-1)^m d^m/dx^m (d/d var^(m))."""
        out = DiffPoly.zero()
        for m in range(self.max_order(family, index) + 1):
            piece = self.partial(DVar(family, index, m)).derive(m)
            out = out + (piece if m % 2 == 0 else -piece)
        return out

    # -- substitution ------------------------------------------------------

    def substitute(self, repl: Mapping[tuple[str, int], "DiffPoly"]) -> "DiffPoly":
        """Replace whole variable families: an occurrence of f_i^{(m)} becomes
        the m-th derivative of repl[(f, i)]."""
        cache: dict[DVar, DiffPoly] = {}

        def resolve(var: DVar) -> DiffPoly:
            got = cache.get(var)
            if got is None:
                base = repl.get((var.family, var.index))
                got = DiffPoly.var(*var) if base is None else base.derive(var.order)
                cache[var] = got
            return got

        out = DiffPoly.zero()
        for mono, c in self.num.items():
            term = DiffPoly._raw({_ONE_MONO: c}, self.den)
            for var, exp in mono:
                term = term * resolve(var) ** exp
            out = out + term
        return out

    def substitute_min_order(self, family: str, index: int, base_order: int,
                             replacement: "DiffPoly") -> "DiffPoly":
        """Replace f_i^{(base_order + r)} by the r-th derivative of
        ``replacement`` for all r >= 0, iterating until no occurrence of order
        >= base_order is left (the replacement may itself contain lower-order
        derivatives of f_i)."""
        poly = self
        while poly.max_order(family, index) >= base_order:
            out = DiffPoly.zero()
            for mono, c in poly.num.items():
                term = DiffPoly._raw({_ONE_MONO: c}, poly.den)
                for var, exp in mono:
                    if (var.family, var.index) == (family, index) and var.order >= base_order:
                        term = term * replacement.derive(var.order - base_order) ** exp
                    else:
                        term = term * DiffPoly._raw({((var, 1),): 1}, 1) ** exp
                out = out + term
            poly = out
        return poly

    # -- structure queries ---------------------------------------------------

    def variables(self) -> set[DVar]:
        return {v for mono in self.num for v, _ in mono}

    def max_order(self, family: str | None = None, index: int | None = None) -> int:
        best = -1
        for var in self.variables():
            if family is not None and var.family != family:
                continue
            if index is not None and var.index != index:
                continue
            best = max(best, var.order)
        return best

    def constant_term(self) -> Fraction:
        return Fraction(self.num.get(_ONE_MONO, 0), self.den)

    def coefficient(self, mono: Monomial) -> Fraction:
        return Fraction(self.num.get(mono, 0), self.den)

    def evaluate(self, resolver: Callable[[DVar], object]):
        """Evaluate over any commutative arithmetic (floats, arrays, jets).

        ``resolver(var)`` supplies the value of each differential variable;
        coefficients enter as floats.
        """
        scale = 1.0 / self.den
        total = None
        for mono, c in self.num.items():
            term = c * scale
            for var, exp in mono:
                term = term * resolver(var) ** exp
            total = term if total is None else total + term
        return 0.0 if total is None else total

    # -- density normalization ----------------------------------------------

    def int_zero_mean_part(self) -> tuple["DiffPoly", "DiffPoly"]:
        """Split self = r + d/dx(s) by repeated integration by parts.

        In every monomial of ``r`` the top-ranked variable (largest
        (family, index)) either appears only underived or has its highest
        derivative to a power > 1, so no monomial is a pure leading
        derivative.  Deterministic: ties are broken by reducing the largest
        derivative order first.
        """
        remainder = DiffPoly.zero()
        s_total = DiffPoly.zero()
        work = self
        while work.num:
            mono = next(iter(work.num))
            coeff = Fraction(work.num[mono], work.den)
            piece = DiffPoly({mono: coeff})
            work = work - piece
            nonconst = [(v, e) for v, e in mono if v.family not in CONSTANT_FAMILIES]
            if not nonconst:
                remainder = remainder + piece
                continue
            top_fi = max((v.family, v.index) for v, _ in nonconst)
            k = max(v.order for v, _ in nonconst if (v.family, v.index) == top_fi)
            top = DVar(top_fi[0], top_fi[1], k)
            exp_top = dict(mono).get(top, 0)
            if k == 0 or exp_top != 1:
                remainder = remainder + piece
                continue
            below = DVar(top_fi[0], top_fi[1], k - 1)
            p = dict(mono).get(below, 0)
            rest = _norm_mono([(v, e) for v, e in mono if v not in (top, below)])
            rest_poly = DiffPoly({rest: Fraction(1)})
            lead = DiffPoly.var(*below) ** (p + 1) * Fraction(1, p + 1)
            s_total = s_total + lead * rest_poly * coeff
            work = work - lead * rest_poly.derive() * coeff
        return remainder, s_total

    # -- rendering & serialization -------------------------------------------

    @staticmethod
    def _var_text(var: DVar) -> str:
        s = f"{var.family}{var.index}"
        if var.order:
            s += f"^({var.order})"
        return s

    def to_text(self) -> str:
        if not self.num:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items()):
            factors = [str(c)]
            for var, exp in mono:
                t = self._var_text(var)
                factors.append(t if exp == 1 else f"{t}**{exp}")
            parts.append("*".join(factors))
        return " + ".join(parts)

    @staticmethod
    def from_text(text: str) -> "DiffPoly":
        text = text.strip()
        if text == "0":
            return DiffPoly()
        out = DiffPoly()
        for chunk in text.split(" + "):
            factors = chunk.split("*")
            coeff = Fraction(factors[0])
            pairs: list[tuple[DVar, int]] = []
            i = 1
            while i < len(factors):
                var = _parse_var(factors[i])
                # '**' splits into ['var', '', 'exp']
                if i + 1 < len(factors) and factors[i + 1] == "":
                    pairs.append((var, int(factors[i + 2])))
                    i += 3
                else:
                    pairs.append((var, 1))
                    i += 1
            out = out + DiffPoly({_norm_mono(pairs): coeff})
        return out

    def to_latex(self, names: Mapping[str, str] | None = None) -> str:
        names = dict(names or {})
        primes = {1: "'", 2: "''", 3: "'''"}
        if not self.num:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items()):
            body = ""
            for var, exp in mono:
                sym = names.get(var.family, "\\" + var.family if var.family in ("xi", "eta") else var.family)
                t = f"{sym}_{{{var.index}}}" if var.index else sym
                if var.order:
                    t += primes.get(var.order, f"^{{({var.order})}}")
                body += t if exp == 1 else f"({t})^{{{exp}}}"
            if c == 1 and body:
                coeff = ""
            elif c == -1 and body:
                coeff = "-"
            else:
                coeff = str(c.numerator) if c.denominator == 1 else f"\\tfrac{{{c.numerator}}}{{{c.denominator}}}"
            parts.append(coeff + body if body else str(c))
        out = parts[0]
        for p in parts[1:]:
            out += p if p.startswith("-") else "+" + p
        return out

    def to_json(self) -> str:
        items = [[[[v.family, v.index, v.order], e] for v, e in mono] + [str(c)]
                 for mono, c in sorted(self.terms.items())]
        return json.dumps(items, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "DiffPoly":
        out: dict[Monomial, Fraction] = {}
        for item in json.loads(text):
            coeff = Fraction(item[-1])
            mono = _norm_mono([(DVar(f, i, o), e) for (f, i, o), e in item[:-1]])
            out[mono] = coeff
        return DiffPoly(out)

    def __repr__(self) -> str:
        return f"DiffPoly({self.to_text()})"


def _normalize(num: dict[Monomial, int], den: int) -> tuple[dict[Monomial, int], int]:
    if not num:
        return {}, 1
    if den < 0:
        den = -den
        num = {m: -v for m, v in num.items()}
    g = den
    for v in num.values():
        g = gcd(g, v)
        if g == 1:
            return num, den
    if g > 1:
        num = {m: v // g for m, v in num.items()}
        den //= g
    return num, den


def _parse_var(tok: str) -> DVar:
    order = 0
    if "^(" in tok:
        tok, tail = tok.split("^(")
        order = int(tail.rstrip(")"))
    pos = len(tok)
    while pos > 0 and (tok[pos - 1].isdigit() or tok[pos - 1] == "-"):
        pos -= 1
    return DVar(tok[:pos], int(tok[pos:]), order)


class ProductAccumulator:
    """Accumulates sum_i a_i * b_i without intermediate polynomial objects."""

    __slots__ = ("num", "den")

    def __init__(self):
        self.num: dict[Monomial, int] = {}
        self.den = 1

    def add_product(self, a: DiffPoly, b: DiffPoly) -> None:
        d = a.den * b.den
        if d == self.den:
            scale = 1
        else:
            g = gcd(self.den, d)
            scale = d // g
            up = self.den // g
            if scale != 1:
                self.num = {m: v * scale for m, v in self.num.items()}
                self.den *= scale
            scale = up
        num = self.num
        for ma, ca in a.num.items():
            for mb, cb in b.num.items():
                m = _mono_mul(ma, mb)
                s = num.get(m, 0) + ca * cb * scale
                if s:
                    num[m] = s
                else:
                    num.pop(m, None)

    def is_empty(self) -> bool:
        return not self.num

    def build(self) -> DiffPoly:
        return DiffPoly._raw(self.num, self.den)


def mul_accumulate(a: DiffPoly, b: DiffPoly, acc: ProductAccumulator) -> None:
    acc.add_product(a, b)


# Spec-facing aliases; the methods above are the primary API.

def dp_add(a: DiffPoly, b: DiffPoly) -> DiffPoly:
    return a + b


def dp_mul(a: DiffPoly, b: DiffPoly) -> DiffPoly:
    return a * b


def dp_derive(a: DiffPoly) -> DiffPoly:
    return a.derive()


def dp_int_zero_mean_part(a: DiffPoly) -> tuple[DiffPoly, DiffPoly]:
    return a.int_zero_mean_part()


def densities_equivalent(a: DiffPoly, b: DiffPoly) -> bool:
    """Whether two densities define the same closed-curve functional, i.e.
    differ by a total x-derivative.  Exact: the difference must have vanishing
    variational derivative in every variable and no constant part."""
    diff = a - b
    if diff.constant_term() != 0:
        return False
    fams = {(v.family, v.index) for v in diff.variables()}
    return all(diff.euler_lagrange(f, i).is_zero() for f, i in fams)
