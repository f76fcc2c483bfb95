"""Periodic grid functions with spectral calculus.

A GridFunction samples a smooth periodic function at M uniform points of
[0, period).  Derivatives, antiderivatives and off-grid evaluation go through
the FFT, so they are exact for band-limited data.  These carry the numeric
side of the symbolic/numeric bridge: ``dp_eval`` evaluates a DiffPoly on grid
samples, generating derivative samples spectrally.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .diffalg import DiffPoly, DVar


class GridFunction:
    __slots__ = ("values", "period")

    def __init__(self, values, period: float = 2.0 * np.pi):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("GridFunction samples must be one-dimensional")
        self.period = float(period)

    @classmethod
    def from_function(cls, f, m: int, period: float = 2.0 * np.pi) -> "GridFunction":
        return cls(f(cls.grid(m, period)), period)

    @classmethod
    def zeros(cls, m: int, period: float = 2.0 * np.pi) -> "GridFunction":
        return cls(np.zeros(m), period)

    @staticmethod
    def grid(m: int, period: float = 2.0 * np.pi) -> np.ndarray:
        return np.arange(m) * (period / m)

    @property
    def m(self) -> int:
        return self.values.size

    def x(self) -> np.ndarray:
        return self.grid(self.m, self.period)

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi / self.period * np.fft.rfftfreq(self.m, 1.0 / self.m)

    def derivative(self, order: int = 1) -> "GridFunction":
        if order == 0:
            return self
        spec = np.fft.rfft(self.values)
        # roundoff in empty high modes is amplified by k^order; floor it out
        top = np.max(np.abs(spec))
        if top > 0.0:
            spec[np.abs(spec) < 1e-14 * top] = 0.0
        k = self.wavenumbers()
        if self.m % 2 == 0 and order % 2 == 1:
            spec[-1] = 0.0  # Nyquist mode has no well-defined odd derivative
        spec = spec * (1j * k) ** order
        return GridFunction(np.fft.irfft(spec, n=self.m), self.period)

    def antiderivative(self, tol: float = 1e-9) -> "GridFunction":
        """Periodic antiderivative with zero mean; requires zero-mean input."""
        rel = abs(self.mean()) / max(1.0, np.max(np.abs(self.values)))
        if rel > tol:
            raise ValueError(f"antiderivative of non-zero-mean function (mean ratio {rel:.2e})")
        spec = np.fft.rfft(self.values)
        k = self.wavenumbers()
        spec[0] = 0.0
        spec[1:] = spec[1:] / (1j * k[1:])
        return GridFunction(np.fft.irfft(spec, n=self.m), self.period)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def integral(self) -> float:
        """The closed-loop integral over one period (spectrally exact)."""
        return self.mean() * self.period

    def eval_at(self, points) -> np.ndarray:
        """Trigonometric interpolation at arbitrary points."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        spec = np.fft.rfft(self.values) / self.m
        k = self.wavenumbers()
        phase = np.exp(1j * np.outer(pts, k))
        weights = np.full(k.size, 2.0)
        weights[0] = 1.0
        if self.m % 2 == 0:
            weights[-1] = 1.0
        out = (phase * (weights * spec)).sum(axis=1).real
        return out

    def resample(self, m_new: int) -> "GridFunction":
        spec = np.fft.rfft(self.values)
        vals = np.fft.irfft(spec, n=m_new) * (m_new / self.m)
        return GridFunction(vals, self.period)

    def tail_energy_fraction(self) -> float:
        """Energy fraction in the top third of the spectrum (band-limit check)."""
        spec = np.abs(np.fft.rfft(self.values)) ** 2
        if spec.size < 3:
            return 0.0
        total = spec[1:].sum()
        if total == 0.0:
            return 0.0
        cut = int(np.ceil(2 * (spec.size - 1) / 3))
        return float(spec[cut:].sum() / total)

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    # arithmetic (pointwise; periods must agree)

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.m != self.m or abs(other.period - self.period) > 1e-12:
                raise ValueError("grid mismatch")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.values + self._coerce(other), self.period)

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._coerce(other), self.period)

    def __rsub__(self, other):
        return GridFunction(self._coerce(other) - self.values, self.period)

    def __mul__(self, other):
        return GridFunction(self.values * self._coerce(other), self.period)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values, self.period)

    def __pow__(self, p):
        return GridFunction(self.values ** p, self.period)

    def __repr__(self):
        return f"GridFunction(m={self.m}, period={self.period:.6g}, sup={self.norm_inf():.3g})"


class MissingVariableError(KeyError):
    pass


def dp_eval(poly: DiffPoly, samples: Mapping[tuple[str, int], GridFunction | float],
            m: int | None = None, period: float | None = None) -> GridFunction:
    """Evaluate a differential polynomial on grid samples.

    ``samples`` maps (family, index) to a GridFunction (derivative samples are
    generated spectrally) or to a scalar constant.  The result is a
    GridFunction on the common grid.
    """
    base_m, base_period = m, period
    for v in samples.values():
        if isinstance(v, GridFunction):
            base_m, base_period = v.m, v.period
            break
    if base_m is None:
        raise ValueError("no grid in samples; pass m= and period=")
    if base_period is None:
        base_period = 2.0 * np.pi

    cache: dict[DVar, np.ndarray | float] = {}

    def resolver(var: DVar):
        got = cache.get(var)
        if got is not None:
            return got
        try:
            base = samples[(var.family, var.index)]
        except KeyError:
            raise MissingVariableError(f"no sample for {var.family}{var.index}") from None
        if isinstance(base, GridFunction):
            got = base.derivative(var.order).values if var.order else base.values
        else:
            got = float(base) if var.order == 0 else 0.0
        cache[var] = got
        return got

    out = poly.evaluate(resolver)
    if not isinstance(out, np.ndarray):
        out = np.full(base_m, float(out))
    return GridFunction(out, base_period)
