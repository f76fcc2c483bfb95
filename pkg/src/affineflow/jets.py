"""Truncated Taylor-series (jet) arithmetic for windowed residual checks.

Closed-form solutions live on windows with poles, where periodic spectral
differentiation does not apply.  A Jet carries the derivatives of a function
at a batch of base points: coeffs[p] is the p-th Taylor coefficient (so the
p-th derivative is p! * coeffs[p]).  Elementary operations and the analytic
functions needed by the explicit solution families (exp, sin/cos, tan, sec,
sinh/cosh/tanh/sech) propagate jets exactly, so PDE residuals of closed-form
solutions can be evaluated to machine precision.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=complex)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @staticmethod
    def variable(x0, order: int) -> "Jet":
        x0 = np.asarray(x0, dtype=complex)
        coeffs = np.zeros((order + 1,) + x0.shape, dtype=complex)
        coeffs[0] = x0
        if order >= 1:
            coeffs[1] = 1.0
        return Jet(coeffs)

    @staticmethod
    def const(c, order: int, shape=()) -> "Jet":
        coeffs = np.zeros((order + 1,) + tuple(shape), dtype=complex)
        coeffs[0] = c
        return Jet(coeffs)

    def derivative(self, p: int) -> np.ndarray:
        """The p-th derivative values at the base points."""
        if p > self.order:
            raise ValueError("jet order too low")
        return self.coeffs[p] * _factorial(p)

    def value(self) -> np.ndarray:
        return self.coeffs[0]

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.const(other, self.order, np.shape(self.coeffs[0]))

    def __add__(self, other):
        o = self._coerce(other)
        return Jet(self.coeffs + o.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs)

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet(self.coeffs - o.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * other)
        k = self.order
        out = np.zeros_like(self.coeffs)
        for p in range(k + 1):
            for q in range(p + 1):
                out[p] = out[p] + self.coeffs[q] * other.coeffs[p - q]
        return Jet(out)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        k = self.order
        out = np.zeros_like(self.coeffs)
        out[0] = 1.0 / self.coeffs[0]
        for p in range(1, k + 1):
            acc = np.zeros_like(self.coeffs[0])
            for q in range(1, p + 1):
                acc = acc + self.coeffs[q] * out[p - q]
            out[p] = -out[0] * acc
        return Jet(out)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.coeffs / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p: int):
        if p < 0:
            return self.reciprocal() ** (-p)
        out = Jet.const(1.0, self.order, np.shape(self.coeffs[0]))
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base
            p >>= 1
        return out


def _factorial(p: int) -> float:
    out = 1.0
    for i in range(2, p + 1):
        out *= i
    return out


def _chain_pair(a: Jet, f0, g0, sign: float) -> tuple[Jet, Jet]:
    """Solve f' = g a', g' = sign f a' jointly (sin/cos, sinh/cosh)."""
    k = a.order
    f = np.zeros_like(a.coeffs)
    g = np.zeros_like(a.coeffs)
    f[0], g[0] = f0, g0
    for p in range(1, k + 1):
        af = np.zeros_like(a.coeffs[0])
        ag = np.zeros_like(a.coeffs[0])
        for q in range(1, p + 1):
            af = af + q * a.coeffs[q] * g[p - q]
            ag = ag + q * a.coeffs[q] * f[p - q]
        f[p] = af / p
        g[p] = sign * ag / p
    return Jet(f), Jet(g)


def jet_sin_cos(a: Jet) -> tuple[Jet, Jet]:
    return _chain_pair(a, np.sin(a.coeffs[0]), np.cos(a.coeffs[0]), -1.0)


def jet_sinh_cosh(a: Jet) -> tuple[Jet, Jet]:
    return _chain_pair(a, np.sinh(a.coeffs[0]), np.cosh(a.coeffs[0]), 1.0)


def jet_exp(a: Jet) -> Jet:
    k = a.order
    out = np.zeros_like(a.coeffs)
    out[0] = np.exp(a.coeffs[0])
    for p in range(1, k + 1):
        acc = np.zeros_like(a.coeffs[0])
        for q in range(1, p + 1):
            acc = acc + q * a.coeffs[q] * out[p - q]
        out[p] = acc / p
    return Jet(out)


def jet_tan(a: Jet) -> Jet:
    s, c = jet_sin_cos(a)
    return s / c


def jet_sec(a: Jet) -> Jet:
    _, c = jet_sin_cos(a)
    return c.reciprocal()


def jet_tanh(a: Jet) -> Jet:
    s, c = jet_sinh_cosh(a)
    return s / c


def jet_sech(a: Jet) -> Jet:
    _, c = jet_sinh_cosh(a)
    return c.reciprocal()


def jet_matrix_ode(b_jet: list[list[Jet]], v0: np.ndarray, order: int) -> list[Jet]:
    """Jet of the solution of v' = B(x) v with vector value v0 at the base
    points: B given as a matrix of jets, v0 as (n, ...) values."""
    n = len(b_jet)
    shape = np.shape(v0[0])
    v = [np.zeros((order + 1,) + shape, dtype=complex) for _ in range(n)]
    for i in range(n):
        v[i][0] = v0[i]
    for p in range(order):
        for i in range(n):
            acc = np.zeros(shape, dtype=complex)
            for kk in range(n):
                bj = b_jet[i][kk].coeffs
                for q in range(p + 1):
                    acc = acc + bj[q] * v[kk][p - q]
            v[i][p + 1] = acc / (p + 1)
    return [Jet(c) for c in v]
