"""Matrices over the differential-polynomial ring.

``DPMatrix`` is a dense n x n matrix of DiffPoly entries.  ``LaurentDPMatrix``
is a finite Laurent polynomial in the spectral parameter with DPMatrix
coefficients; truncation is by *principal degree*

    deg(E_ab * lam^k) = (a - b) + n*k      (rows/cols 1-based)

so that the shift matrix b = sum e_{i+1,i} and the element J = e_{1n} lam + b
are homogeneous of degree 1, while a curvature perturbation u = sum u_i e_{in}
has strictly negative degrees.  Each object tracks ``floor``: the lowest
degree at which its components are still exact (coefficients below the floor
may have been dropped).  Products propagate floors; reading a component below
the floor raises.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable

from .diffalg import DiffPoly, ProductAccumulator

Scalar = int | Fraction | DiffPoly


def _as_poly(x: Scalar) -> DiffPoly:
    return x if isinstance(x, DiffPoly) else DiffPoly.const(x)


class DPMatrix:
    __slots__ = ("n", "rows")

    def __init__(self, n: int, rows: Iterable[Iterable[Scalar]] | None = None):
        self.n = n
        if rows is None:
            self.rows = [[DiffPoly.zero() for _ in range(n)] for _ in range(n)]
        else:
            self.rows = [[_as_poly(x) for x in row] for row in rows]
            if len(self.rows) != n or any(len(r) != n for r in self.rows):
                raise ValueError("matrix shape mismatch")

    # 1-based accessors keep the code aligned with the e_{ij} conventions.
    def at(self, i: int, j: int) -> DiffPoly:
        return self.rows[i - 1][j - 1]

    def put(self, i: int, j: int, value: Scalar) -> None:
        self.rows[i - 1][j - 1] = _as_poly(value)

    @staticmethod
    def zero(n: int) -> "DPMatrix":
        return DPMatrix(n)

    @staticmethod
    def identity(n: int) -> "DPMatrix":
        m = DPMatrix(n)
        for i in range(1, n + 1):
            m.put(i, i, 1)
        return m

    @staticmethod
    def unit(n: int, i: int, j: int, c: Scalar = 1) -> "DPMatrix":
        m = DPMatrix(n)
        m.put(i, j, c)
        return m

    @staticmethod
    def shift_b(n: int) -> "DPMatrix":
        """b = sum_{i=1}^{n-1} e_{i+1,i}."""
        m = DPMatrix(n)
        for i in range(1, n):
            m.put(i + 1, i, 1)
        return m

    @staticmethod
    def curvature_u(n: int) -> "DPMatrix":
        """u = sum_{i=1}^{n-1} u_i e_{in} with symbolic entries."""
        m = DPMatrix(n)
        for i in range(1, n):
            m.put(i, n, DiffPoly.var("u", i, 0))
        return m

    def __add__(self, other: "DPMatrix") -> "DPMatrix":
        return DPMatrix(self.n, [[a + b for a, b in zip(ra, rb)]
                                 for ra, rb in zip(self.rows, other.rows)])

    def __sub__(self, other: "DPMatrix") -> "DPMatrix":
        return DPMatrix(self.n, [[a - b for a, b in zip(ra, rb)]
                                 for ra, rb in zip(self.rows, other.rows)])

    def __neg__(self) -> "DPMatrix":
        return DPMatrix(self.n, [[-a for a in row] for row in self.rows])

    def __mul__(self, other):
        if isinstance(other, DPMatrix):
            n = self.n
            out = DPMatrix(n)
            acc = [[ProductAccumulator() for _ in range(n)] for _ in range(n)]
            for i in range(n):
                for k in range(n):
                    a = self.rows[i][k]
                    if a.is_zero():
                        continue
                    for j in range(n):
                        b = other.rows[k][j]
                        if not b.is_zero():
                            acc[i][j].add_product(a, b)
            for i in range(n):
                for j in range(n):
                    if not acc[i][j].is_empty():
                        out.rows[i][j] = acc[i][j].build()
            return out
        return self.scale(other)

    def scale(self, c: Scalar) -> "DPMatrix":
        c = _as_poly(c)
        return DPMatrix(self.n, [[a * c for a in row] for row in self.rows])

    def commutator(self, other: "DPMatrix") -> "DPMatrix":
        return self * other - other * self

    def derive(self) -> "DPMatrix":
        return DPMatrix(self.n, [[a.derive() for a in row] for row in self.rows])

    def trace(self) -> DiffPoly:
        t = DiffPoly.zero()
        for i in range(self.n):
            t = t + self.rows[i][i]
        return t

    def is_zero(self) -> bool:
        return all(a.is_zero() for row in self.rows for a in row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DPMatrix):
            return NotImplemented
        return self.n == other.n and self.rows == other.rows

    def map(self, f: Callable[[DiffPoly], DiffPoly]) -> "DPMatrix":
        return DPMatrix(self.n, [[f(a) for a in row] for row in self.rows])

    def substitute(self, repl) -> "DPMatrix":
        return self.map(lambda p: p.substitute(repl))

    def column(self, j: int) -> list[DiffPoly]:
        return [self.rows[i][j - 1] for i in range(self.n)]

    def bottom_row_head(self) -> list[DiffPoly]:
        """pi_0: the (n,1)..(n,n-1) entries, coordinates along V_n^t."""
        return [self.rows[self.n - 1][j] for j in range(self.n - 1)]

    def v_components(self) -> list[DiffPoly]:
        """The (i,n) entries for i=1..n-1, coordinates along V_n."""
        return [self.rows[i][self.n - 1] for i in range(self.n - 1)]

    def off_v_part(self) -> "DPMatrix":
        """Everything outside the V_n positions; zero iff the matrix is in V_n."""
        out = DPMatrix(self.n, self.rows)
        for i in range(1, self.n):
            out.put(i, self.n, DiffPoly.zero())
        return out

    def __repr__(self) -> str:
        body = ";  ".join(", ".join(p.to_text() for p in row) for row in self.rows)
        return f"DPMatrix[{body}]"


def ad_connection(b_plus_u: DPMatrix, c: DPMatrix) -> DPMatrix:
    """[d/dx + b + u, C] = C_x + (b+u)C - C(b+u)."""
    return c.derive() + b_plus_u * c - c * b_plus_u


class FloorError(RuntimeError):
    """A Laurent coefficient was requested below the exactness floor."""


class LaurentDPMatrix:
    __slots__ = ("n", "coeffs", "floor")

    def __init__(self, n: int, coeffs: dict[int, DPMatrix] | None = None,
                 floor: float = float("-inf")):
        self.n = n
        self.coeffs: dict[int, DPMatrix] = {}
        self.floor = floor  # lowest exact principal degree; -inf means exact
        if coeffs:
            for k, m in coeffs.items():
                if not m.is_zero():
                    self.coeffs[k] = m

    # -- degree bookkeeping --------------------------------------------------

    def degree_range_of_exp(self, k: int) -> tuple[int, int]:
        n = self.n
        return n * k - (n - 1), n * k + (n - 1)

    def top_degree(self) -> float:
        top = float("-inf")
        for k, m in self.coeffs.items():
            for i in range(1, self.n + 1):
                for j in range(1, self.n + 1):
                    if not m.at(i, j).is_zero():
                        top = max(top, (i - j) + self.n * k)
        return top

    def truncate_below(self, floor_degree: int) -> "LaurentDPMatrix":
        """Drop all components of principal degree < floor_degree.  The floor
        only degrades if something nonzero was actually discarded."""
        n = self.n
        dropped = False
        out = LaurentDPMatrix(n, floor=self.floor)
        for k, m in self.coeffs.items():
            keep = DPMatrix(n)
            any_kept = False
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if m.at(i, j).is_zero():
                        continue
                    if (i - j) + n * k >= floor_degree:
                        keep.put(i, j, m.at(i, j))
                        any_kept = True
                    else:
                        dropped = True
            if any_kept:
                out.coeffs[k] = keep
        if dropped:
            out.floor = max(out.floor, floor_degree)
        return out

    # -- constructors ----------------------------------------------------------

    @staticmethod
    def from_const(m: DPMatrix) -> "LaurentDPMatrix":
        return LaurentDPMatrix(m.n, {0: m})

    @staticmethod
    def identity(n: int) -> "LaurentDPMatrix":
        return LaurentDPMatrix(n, {0: DPMatrix.identity(n)})

    @staticmethod
    def j_element(n: int) -> "LaurentDPMatrix":
        """J = e_{1n} lam + b, homogeneous of principal degree 1."""
        return LaurentDPMatrix(n, {1: DPMatrix.unit(n, 1, n), 0: DPMatrix.shift_b(n)})

    # -- arithmetic -------------------------------------------------------------

    def coeff(self, k: int) -> DPMatrix:
        lo, _ = self.degree_range_of_exp(k)
        if lo < self.floor:
            raise FloorError(f"lambda^{k} block extends below exact floor {self.floor}")
        return self.coeffs.get(k, DPMatrix.zero(self.n))

    def component(self, degree: int) -> DPMatrix:
        """The homogeneous part of the given principal degree, as entries of a
        DPMatrix tagged with their lambda exponents folded away (each position
        (i,j) contributes only if (i-j) + n*k == degree for some stored k)."""
        if degree < self.floor:
            raise FloorError(f"degree {degree} below exact floor {self.floor}")
        n = self.n
        out = DPMatrix(n)
        for k, m in self.coeffs.items():
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if (i - j) + n * k == degree:
                        out.put(i, j, out.at(i, j) + m.at(i, j))
        return out

    def homogeneous(self, degree: int) -> "LaurentDPMatrix":
        n = self.n
        out = LaurentDPMatrix(n, floor=self.floor)
        if degree < self.floor:
            raise FloorError(f"degree {degree} below exact floor {self.floor}")
        for k, m in self.coeffs.items():
            keep = DPMatrix(n)
            used = False
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if (i - j) + n * k == degree and not m.at(i, j).is_zero():
                        keep.put(i, j, m.at(i, j))
                        used = True
            if used:
                out.coeffs[k] = keep
        out.floor = float("-inf") if self.floor <= degree else self.floor
        return out

    def __add__(self, other: "LaurentDPMatrix") -> "LaurentDPMatrix":
        out = LaurentDPMatrix(self.n, dict(self.coeffs),
                              floor=max(self.floor, other.floor))
        for k, m in other.coeffs.items():
            s = out.coeffs.get(k)
            r = m if s is None else s + m
            if r.is_zero():
                out.coeffs.pop(k, None)
            else:
                out.coeffs[k] = r
        return out

    def __sub__(self, other: "LaurentDPMatrix") -> "LaurentDPMatrix":
        return self + other.scale(Fraction(-1))

    def scale(self, c: Scalar) -> "LaurentDPMatrix":
        return LaurentDPMatrix(self.n, {k: m.scale(c) for k, m in self.coeffs.items()},
                               floor=self.floor)

    def __mul__(self, other: "LaurentDPMatrix") -> "LaurentDPMatrix":
        # Exactness: a dropped term of self (degree < self.floor) times the top
        # of other contaminates degrees < self.floor + top(other), and
        # symmetrically; the result floor is the larger of the two bounds.
        fa = self.floor + max(other.top_degree(), float("-inf"))
        fb = other.floor + max(self.top_degree(), float("-inf"))
        if self.floor == float("-inf"):
            fa = float("-inf")
        if other.floor == float("-inf"):
            fb = float("-inf")
        out = LaurentDPMatrix(self.n, floor=max(fa, fb))
        for ka, ma in self.coeffs.items():
            for kb, mb in other.coeffs.items():
                prod = ma * mb
                if prod.is_zero():
                    continue
                k = ka + kb
                cur = out.coeffs.get(k)
                r = prod if cur is None else cur + prod
                if r.is_zero():
                    out.coeffs.pop(k, None)
                else:
                    out.coeffs[k] = r
        return out

    def commutator(self, other: "LaurentDPMatrix") -> "LaurentDPMatrix":
        return self * other - other * self

    def derive(self) -> "LaurentDPMatrix":
        return LaurentDPMatrix(self.n, {k: m.derive() for k, m in self.coeffs.items()},
                               floor=self.floor)

    def trace(self) -> dict[int, DiffPoly]:
        out = {}
        for k, m in self.coeffs.items():
            t = m.trace()
            if not t.is_zero():
                out[k] = t
        return out

    def is_zero_above(self, floor_degree: int) -> bool:
        n = self.n
        for k, m in self.coeffs.items():
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if (i - j) + n * k >= floor_degree and not m.at(i, j).is_zero():
                        return False
        return True

    def substitute(self, repl) -> "LaurentDPMatrix":
        return LaurentDPMatrix(self.n, {k: m.substitute(repl) for k, m in self.coeffs.items()},
                               floor=self.floor)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LaurentDPMatrix):
            return NotImplemented
        return self.n == other.n and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        ks = sorted(self.coeffs)
        return f"LaurentDPMatrix(exps={ks}, floor={self.floor})"


from functools import lru_cache


@lru_cache(maxsize=None)
def j_power(n: int, d: int) -> LaurentDPMatrix:
    """J^d for any integer d, using J^n = lam * I to reach negative powers."""
    if d == 0:
        return LaurentDPMatrix.identity(n)
    if d > 0:
        return j_power(n, d - 1) * LaurentDPMatrix.j_element(n)
    m = (-d + n - 1) // n  # smallest m with d + m*n >= 0
    pos = j_power(n, d + m * n)
    return LaurentDPMatrix(n, {k - m: mat for k, mat in pos.coeffs.items()})
