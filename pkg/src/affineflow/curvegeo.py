"""Geometry of closed curves under the unimodular-determinant normalization.

A curve in R^n \\ {0} is admissible when det(gamma, gamma_x, ..., gamma^(n-1))
is everywhere positive; in the arc-length parameter that determinant is 1 and
the moving frame g = (gamma, gamma', ..., gamma^(n-1)) takes values in
SL(n,R).  The n-th derivative then expands as

    gamma^(n) = u_1 gamma + u_2 gamma' + ... + u_{n-1} gamma^(n-2),

and u_1..u_{n-1} are the curvature invariants this module extracts
(curvature_map), inverts (frame_reconstruct) and reparametrizes for
(reparametrize).  The symbolic half builds the tangency-completion polynomial
phi_n and the lift P_u sending a bottom-row datum to the unique trace-free
matrix C with pi_0(C) = v and [d/dx + b + u, C] in V_n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .diffalg import DiffPoly, DVar
from .dpmatrix import DPMatrix, ad_connection
from .gridfn import GridFunction, dp_eval

TWO_PI = 2.0 * np.pi


class CurveError(ValueError):
    pass


@dataclass
class CurvatureField:
    """The n-1 curvature functions on a periodic grid."""
    n: int
    u: list[GridFunction]

    def __post_init__(self):
        if len(self.u) != self.n - 1:
            raise ValueError("need n-1 curvature components")

    @property
    def period(self) -> float:
        return self.u[0].period

    @property
    def m(self) -> int:
        return self.u[0].m

    def samples(self) -> dict[tuple[str, int], GridFunction]:
        return {("u", i + 1): self.u[i] for i in range(self.n - 1)}

    def norm_inf(self) -> float:
        return max(f.norm_inf() for f in self.u)

    def copy_scaled(self, c: float) -> "CurvatureField":
        return CurvatureField(self.n, [GridFunction(f.values * c, f.period) for f in self.u])


@dataclass
class CurveSample:
    """A sampled closed curve gamma: [0, period) -> R^n.

    ``frame_data``, when present, holds the moving frame produced by an ODE
    integration; spectral consumers (curvature_map, det checks) always rebuild
    the frame from gamma so the two routes stay independent.
    """
    n: int
    gamma: np.ndarray          # shape (M, n)
    period: float = TWO_PI
    frame_data: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 2 or self.gamma.shape[1] != self.n:
            raise ValueError("gamma must be (M, n)")

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    def x(self) -> np.ndarray:
        return GridFunction.grid(self.m, self.period)

    def component(self, i: int) -> GridFunction:
        return GridFunction(self.gamma[:, i], self.period)

    def derivatives(self, up_to: int) -> list[np.ndarray]:
        """[gamma, gamma', ..., gamma^(up_to)], each (M, n), spectral."""
        out = [self.gamma]
        comps = [GridFunction(self.gamma[:, i], self.period) for i in range(self.n)]
        for order in range(1, up_to + 1):
            out.append(np.stack([c.derivative(order).values for c in comps], axis=1))
        return out

    def frame(self) -> np.ndarray:
        """Moving frame g(x) = (gamma, ..., gamma^(n-1)) as (M, n, n) arrays."""
        ders = self.derivatives(self.n - 1)
        return np.stack(ders, axis=2)

    def det_values(self) -> np.ndarray:
        return np.linalg.det(self.frame())

    def det_residual(self) -> float:
        return float(np.max(np.abs(self.det_values() - 1.0)))

    def tail_energy(self) -> float:
        return max(self.component(i).tail_energy_fraction() for i in range(self.n))


def det_normalize(gamma: np.ndarray, period: float = TWO_PI) -> CurveSample:
    """Exact retraction onto the det=1 constraint: gamma -> D^{-1/n} gamma.

    Scaling by a function f multiplies the frame determinant by exactly f^n,
    so this projection is exact (up to the spectral accuracy of D itself) and
    preserves the period.
    """
    n = gamma.shape[1]
    c = CurveSample(n, gamma, period)
    d = c.det_values()
    if np.min(d) <= 0.0:
        raise CurveError("curve is not admissible: det <= 0")
    scale = d ** (-1.0 / n)
    return CurveSample(n, gamma * scale[:, None], period)


def reparametrize(gamma: np.ndarray, period_in: float = TWO_PI,
                  det_floor: float = 1e-8) -> CurveSample:
    """Resample a closed curve in an arbitrary parameter to arc-length.

    dx/ds = det(gamma, gamma_s, ..., gamma_s^(n-1))^(2/(n(n-1))); the new
    period is the total integral of that density, and the returned samples
    are uniform in x with det = 1 within spectral accuracy.
    """
    n = gamma.shape[1]
    raw = CurveSample(n, gamma, period_in)
    d = raw.det_values()
    if np.min(d) <= 0.0:
        raise CurveError("curve is not admissible: det <= 0")
    if np.min(d) < det_floor:
        raise CurveError(f"determinant too close to zero (min {np.min(d):.3e})")
    rho = GridFunction(d ** (2.0 / (n * (n - 1))), period_in)
    m = raw.m
    L = rho.integral()
    rho_mean = L / period_in
    osc = GridFunction(rho.values - rho_mean, period_in).antiderivative(tol=1e-6)
    # x(s) = rho_mean * s + osc(s); invert by Newton for uniform x targets
    s = raw.x().copy()
    targets = np.arange(m) * (L / m)
    for _ in range(60):
        fx = rho_mean * s + osc.eval_at(s) - targets
        step = fx / rho.eval_at(s)
        s = s - step
        if np.max(np.abs(step)) < 1e-14:
            break
    new_gamma = np.stack([raw.component(i).eval_at(s) for i in range(n)], axis=1)
    out = CurveSample(n, new_gamma, L)
    res = out.det_residual()
    if res > 1e-6:
        raise CurveError(f"reparametrization failed to normalize det (residual {res:.2e})")
    return out


def curvature_map(c: CurveSample, det_tol: float = 1e-6) -> CurvatureField:
    """Extract the curvature invariants; checks det = 1 and the expansion of
    gamma^(n) in the frame (the top coefficient must vanish)."""
    res = c.det_residual()
    if res > det_tol:
        raise CurveError(f"det invariant violated (residual {res:.2e})")
    ders = c.derivatives(c.n)
    g = np.stack(ders[:c.n], axis=2)
    coeff = np.linalg.solve(g, ders[c.n][..., None])[..., 0]  # (M, n)
    top = float(np.max(np.abs(coeff[:, c.n - 1])))
    scale = max(1.0, float(np.max(np.abs(coeff))))
    if top / scale > 1e-5:
        raise CurveError(f"gamma^(n) expansion has nonzero top coefficient ({top:.2e})")
    u = [GridFunction(coeff[:, i], c.period) for i in range(c.n - 1)]
    return CurvatureField(c.n, u)


def frame_reconstruct(field: CurvatureField, g0: np.ndarray | None = None,
                      substeps: int = 8) -> CurveSample:
    """Integrate g' = g(b + u) over one period from g(0) = g0 (det g0 = 1).

    Classical RK4 on a grid refined ``substeps`` times, with the curvature
    spectrally upsampled to the half-substep grid; returns the curve (first
    frame column) on the original grid, with the frame attached.
    """
    n, m, period = field.n, field.m, field.period
    if g0 is None:
        g0 = np.eye(n)
    g0 = np.asarray(g0, dtype=float)
    d0 = np.linalg.det(g0)
    if abs(d0 - 1.0) > 1e-6:
        raise CurveError("initial frame must be unimodular")
    g0 = g0 * d0 ** (-1.0 / n)
    fine = 2 * substeps * m
    uf = [f.resample(fine).values for f in field.u]
    conn = np.zeros((fine + 1, n, n))
    for i in range(1, n):
        conn[:, i, i - 1] = 1.0
    for i in range(1, n):
        vals = uf[i - 1]
        conn[:-1, i - 1, n - 1] = vals
    conn[-1] = conn[0]
    h = period / (substeps * m)
    g = g0.copy()
    frames = np.empty((m, n, n))
    for idx in range(substeps * m):
        if idx % substeps == 0:
            frames[idx // substeps] = g
        a0 = conn[2 * idx]
        am = conn[2 * idx + 1]
        a1 = conn[2 * idx + 2]
        k1 = g @ a0
        k2 = (g + 0.5 * h * k1) @ am
        k3 = (g + 0.5 * h * k2) @ am
        k4 = (g + h * k3) @ a1
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return CurveSample(n, frames[:, :, 0].copy(), period, frame_data=frames)


def frame_monodromy_defect(field: CurvatureField, g0: np.ndarray | None = None) -> float:
    """|g(period) - g(0)| for the frame ODE: zero iff the curvature closes up."""
    n, m, period = field.n, field.m, field.period
    if g0 is None:
        g0 = np.eye(n)
    substeps = 4
    fine = 2 * substeps * m
    uf = [f.resample(fine).values for f in field.u]
    conn = np.zeros((fine + 1, n, n))
    for i in range(1, n):
        conn[:, i, i - 1] = 1.0
    for i in range(1, n):
        conn[:-1, i - 1, n - 1] = uf[i - 1]
    conn[-1] = conn[0]
    h = period / (substeps * m)
    g = np.asarray(g0, dtype=float).copy()
    for idx in range(substeps * m):
        a0, am, a1 = conn[2 * idx], conn[2 * idx + 1], conn[2 * idx + 2]
        k1 = g @ a0
        k2 = (g + 0.5 * h * k1) @ am
        k3 = (g + 0.5 * h * k2) @ am
        k4 = (g + h * k3) @ a1
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(np.max(np.abs(g - g0)))


# -- symbolic layer: tangency completion and the P_u lift ---------------------


class SolveError(RuntimeError):
    pass


def _build_columns(n: int, first: list[DiffPoly]) -> list[list[DiffPoly]]:
    """Generate all n columns from the first by C_{j+1} = C_j' + (b+u) C_j."""
    cols = [list(first)]
    for _ in range(n - 1):
        prev = cols[-1]
        nxt = []
        for i in range(n):
            entry = prev[i].derive()
            if i >= 1:
                entry = entry + prev[i - 1]
            if i < n - 1:
                entry = entry + DiffPoly.var("u", i + 1) * prev[n - 1]
            nxt.append(entry)
        cols.append(nxt)
    return cols


def _isolate_linear(expr: DiffPoly, family: str, index: int) -> tuple[Fraction, DiffPoly]:
    """Write expr = c*X + rest with X the order-0 variable, c a rational
    constant, and rest free of X at any derivative order."""
    var = DVar(family, index, 0)
    coeff = expr.partial(var)
    if coeff.is_zero() or coeff.variables():
        raise SolveError(f"{family}{index} does not appear linearly with constant coefficient")
    c = coeff.constant_term()
    rest = expr - DiffPoly.var(family, index) * c
    if any(v.family == family and v.index == index for v in rest.variables()):
        raise SolveError(f"derivatives of {family}{index} obstruct the triangular solve")
    return c, rest


@lru_cache(maxsize=None)
def phi_n(n: int) -> DiffPoly:
    """The tangency-completion polynomial: xi_0 = phi_n(u, xi_1..xi_{n-1})
    makes xi_0 gamma + sum xi_i gamma^(i) tangent to the constraint manifold.

    Built from the column recursion plus the trace-free condition.
    """
    if n < 2:
        raise ValueError("n >= 2")
    first = [DiffPoly.var("_x0", 1)] + [DiffPoly.var("xi", i) for i in range(1, n)]
    cols = _build_columns(n, first)
    trace = DiffPoly.zero()
    for j in range(n):
        trace = trace + cols[j][j]
    c, rest = _isolate_linear(trace, "_x0", 1)
    return rest * (Fraction(-1) / c)


@lru_cache(maxsize=None)
def p_u(n: int) -> DPMatrix:
    """The lift P_u(v): the unique trace-free matrix C with bottom row
    v_1..v_{n-1} and [d/dx+b+u, C] in V_n; entries are differential
    polynomials in u and v."""
    if n < 2:
        raise ValueError("n >= 2")
    unknowns = [DiffPoly.var("_c", i) for i in range(1, n)]
    first = unknowns + [DiffPoly.var("v", 1)]
    solved: dict[tuple[str, int], DiffPoly] = {}
    cols = _build_columns(n, first)
    for i in range(2, n):
        expr = cols[i - 1][n - 1].substitute(solved)
        c, rest = _isolate_linear(expr, "_c", n - i + 1)
        solved[("_c", n - i + 1)] = (DiffPoly.var("v", i) - rest) * (Fraction(1) / c)
    trace = DiffPoly.zero()
    for j in range(n):
        trace = trace + cols[j][j]
    trace = trace.substitute(solved)
    c, rest = _isolate_linear(trace, "_c", 1)
    solved[("_c", 1)] = rest * (Fraction(-1) / c)
    mat = DPMatrix(n, [[cols[j][i].substitute(solved) for j in range(n)] for i in range(n)])
    # post-conditions: bottom row, trace, commutator in V_n
    bottom = mat.bottom_row_head()
    for i in range(1, n):
        if bottom[i - 1] != DiffPoly.var("v", i):
            raise SolveError("P_u bottom row mismatch")
    if not mat.trace().is_zero():
        raise SolveError("P_u trace nonzero")
    bu = DPMatrix.shift_b(n) + DPMatrix.curvature_u(n)
    if not ad_connection(bu, mat).off_v_part().is_zero():
        raise SolveError("P_u commutator escaped V_n")
    return mat


def tangent_complete(c: CurveSample, xi: list[GridFunction]) -> np.ndarray:
    """The tangent field phi_n(u, xi) gamma + sum_i xi_i gamma^(i), as (M, n)."""
    n = c.n
    if len(xi) != n - 1:
        raise ValueError("need n-1 xi components")
    field = curvature_map(c)
    samples: dict[tuple[str, int], GridFunction] = field.samples()
    for i, f in enumerate(xi, start=1):
        samples[("xi", i)] = f
    xi0 = dp_eval(phi_n(n), samples).values
    ders = c.derivatives(n - 1)
    out = xi0[:, None] * ders[0]
    for i in range(1, n):
        out = out + xi[i - 1].values[:, None] * ders[i]
    return out


def tangency_residual(c: CurveSample, field_x: np.ndarray) -> float:
    """Max residual of the linearized determinant constraint for a candidate
    tangent field X: sum_i det(gamma, .., X^(i) in slot i, .., gamma^(n-1))."""
    n = c.n
    ders = c.derivatives(n - 1)
    xs = CurveSample(n, field_x, c.period).derivatives(n - 1)
    total = np.zeros(c.m)
    base = np.stack(ders, axis=2)
    for i in range(n):
        mat = base.copy()
        mat[:, :, i] = xs[i]
        total = total + np.linalg.det(mat)
    return float(np.max(np.abs(total)))


# -- closed reference curves ---------------------------------------------------


def save_curve_csv(path: str, c: CurveSample) -> None:
    """CSV with columns x, gamma_1..gamma_n."""
    header = "x," + ",".join(f"gamma{i + 1}" for i in range(c.n))
    np.savetxt(path, np.column_stack([c.x(), c.gamma]), delimiter=",",
               header=header, comments="", fmt="%.17g")


def load_curve_csv(path: str, period: float | None = None) -> CurveSample:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = data[:, 0]
    if period is None:
        period = float(x[-1] + (x[1] - x[0]))
    return CurveSample(data.shape[1] - 1, data[:, 1:], period)


def save_curvature_csv(path: str, field: CurvatureField) -> None:
    header = "x," + ",".join(f"u{i + 1}" for i in range(field.n - 1))
    cols = [GridFunction.grid(field.m, field.period)] + [f.values for f in field.u]
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
               comments="", fmt="%.17g")


def load_curvature_csv(path: str, period: float | None = None) -> CurvatureField:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = data[:, 0]
    if period is None:
        period = float(x[-1] + (x[1] - x[0]))
    n = data.shape[1]
    return CurvatureField(n, [GridFunction(data[:, i], period) for i in range(1, n)])


def curve_to_json_dict(c: CurveSample) -> dict:
    return {"n": c.n, "m": c.m, "period": c.period,
            "gamma": [list(map(float, row)) for row in c.gamma]}


def curve_from_json_dict(d: dict) -> CurveSample:
    return CurveSample(int(d["n"]), np.asarray(d["gamma"], dtype=float), float(d["period"]))


def base_closed_curve(n: int, m: int = 256, winding: float = 1.0) -> CurveSample:
    """An explicit closed admissible curve with constant frame determinant.

    For n = 2, 3 the winding parameter rescales the base frequency (period
    2*pi/winding), trading period against curvature size; n = 4, 5 use the
    two-frequency torus curves at unit winding.
    """
    if n in (2, 3):
        a = float(winding)
        period = TWO_PI / a
        x = GridFunction.grid(m, period)
        if n == 2:
            gamma = np.stack([np.cos(a * x) / np.sqrt(a), np.sin(a * x) / np.sqrt(a)], axis=1)
        else:
            gamma = np.stack([np.cos(a * x), np.sin(a * x),
                              np.full(m, a ** -3.0)], axis=1)
        return CurveSample(n, gamma, period)
    if winding != 1.0:
        raise ValueError("winding only supported for n = 2, 3")
    x = GridFunction.grid(m, TWO_PI)
    if n == 4:
        raw = np.stack([np.cos(x), np.sin(x), np.cos(2 * x), np.sin(2 * x)], axis=1)
    elif n == 5:
        raw = np.stack([np.cos(x), np.sin(x), np.cos(2 * x), np.sin(2 * x),
                        np.full(m, 1.0)], axis=1)
    else:
        raise ValueError("base curves implemented for n = 2..5")
    c = CurveSample(n, raw, TWO_PI)
    d0 = c.det_values()[0]
    if d0 < 0:
        raw[:, 1] *= -1.0
        d0 = -d0
    return CurveSample(n, raw * d0 ** (-1.0 / n), TWO_PI)


def perturbed_closed_curve(n: int, m: int = 256, amplitude: float = 0.05,
                           modes: int = 3, seed: int = 0,
                           winding: float = 1.0) -> CurveSample:
    """A random band-limited perturbation of the base closed curve, projected
    back onto the det = 1 constraint by the exact scalar retraction."""
    base = base_closed_curve(n, m, winding)
    rng = np.random.default_rng(seed)
    x = base.x() * (TWO_PI / base.period)
    pert = np.zeros_like(base.gamma)
    for i in range(n):
        for k in range(1, modes + 1):
            pert[:, i] += (rng.normal() * np.cos(k * x) + rng.normal() * np.sin(k * x)) / k
    scale = np.max(np.abs(pert)) or 1.0
    gamma = base.gamma + amplitude / scale * pert
    return det_normalize(gamma, base.period)
