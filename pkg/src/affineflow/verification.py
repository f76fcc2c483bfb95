"""Verification suites: each check returns {check, max_residual, tol, pass}.

These back the command-line ``verify`` subcommand; the pytest acceptance
module runs the same identities independently.  Symbolic checks are exact
(residual 0 or 1); numeric checks report sup-norm residuals.
"""

from __future__ import annotations

from fractions import Fraction as F

import numpy as np

from .diffalg import DiffPoly, densities_equivalent
from . import backlund as bt
from . import curvegeo as cg
from . import dynamics as dy
from . import hierarchy as hi
from . import looplax as lx
from .gridfn import GridFunction, dp_eval
from .jets import Jet
from .looplax import FlowSpec


def _check(name: str, residual: float, tol: float) -> dict:
    return {"check": name, "max_residual": float(residual), "tol": float(tol),
            "pass": bool(residual <= tol)}


def _exact(name: str, ok: bool) -> dict:
    return _check(name, 0.0 if ok else 1.0, 0.0)


def _uvar(i, m=0):
    return DiffPoly.var("u", i, m)


def _xivar(i, m=0):
    return DiffPoly.var("xi", i, m)


def suite_symbolic(n: int = 3) -> list[dict]:
    out = []
    col = lx.z_matrix(n, 2).column(1)
    ok = (col[0] == F(-2, n) * _uvar(n - 1) and col[2] == DiffPoly.const(1)
          and all(col[i].is_zero() for i in (1, *range(3, n))))
    out.append(_exact(f"second_flow_first_column_n{n}", ok))
    if n >= 4:
        col3 = lx.z_matrix(n, 3).column(1)
        ok = (col3[0] == F(-3, n) * _uvar(n - 2) + F(3 * (n - 3), 2 * n) * _uvar(n - 1, 1)
              and col3[1] == F(-3, n) * _uvar(n - 1) and col3[3] == DiffPoly.const(1))
        out.append(_exact(f"third_flow_first_column_n{n}", ok))
    if n == 3:
        rhs = lx.kdv_rhs(3, 2)
        ok = (rhs[0] == _uvar(1, 2) - F(2, 3) * _uvar(2, 3) + F(2, 3) * _uvar(2) * _uvar(2, 1)
              and rhs[1] == -_uvar(2, 2) + 2 * _uvar(1, 1))
        out.append(_exact("second_flow_equations_n3", ok))
    # tangency completion and P_u post-conditions
    try:
        cg.phi_n(n)
        cg.p_u(n)
        out.append(_exact(f"tangency_completion_and_lift_n{n}", True))
    except Exception:
        out.append(_exact(f"tangency_completion_and_lift_n{n}", False))
    # densities vs gradients
    ok = True
    for i in [k for k in range(1, 2 * n) if k % n][:3]:
        cd = lx.conserved_density(n, i)
        for jj in range(1, n):
            if cd.density_raw.euler_lagrange("u", jj) != cd.gradient[jj - 1]:
                ok = False
    out.append(_exact(f"density_gradients_n{n}", ok))
    # flow route equality (Hamiltonian form of the flows)
    ok = True
    for j in [k for k in (1, 2, 3) if k % n]:
        grad = list(lx.conserved_density(n, j).gradient)
        if list(hi.j2_apply_sym(n, grad)) != list(lx.kdv_rhs(n, j)):
            ok = False
    out.append(_exact(f"second_structure_generates_flows_n{n}", ok))
    return out


def suite_poisson(n: int = 3, m: int = 256) -> list[dict]:
    out = []
    try:
        hi.casimir_check(n)
        out.append(_exact(f"casimirs_n{n}", True))
    except Exception:
        out.append(_exact(f"casimirs_n{n}", False))
    rng = np.random.default_rng(7)
    x = GridFunction.grid(m)
    us = []
    for i in range(n - 1):
        v = sum((rng.normal() * np.cos(k * x) + rng.normal() * np.sin(k * x)) / k
                for k in range(1, 4))
        us.append(GridFunction(0.6 * v / max(1e-9, np.max(np.abs(v)))))
    field = cg.CurvatureField(n, us)

    def rand_cot(seed):
        r = np.random.default_rng(seed)
        return [GridFunction(sum((r.normal() * np.cos(k * x) + r.normal() * np.sin(k * x)) / k
                                 for k in range(1, 4))) for _ in range(n - 1)]

    worst = 0.0
    for s in range(3):
        xi, eta = rand_cot(100 + s), rand_cot(200 + s)
        for op in (hi.j1_apply, hi.j2_apply):
            val = sum((a * b).integral() for a, b in zip(op(field, xi), eta))
            swapped = sum((a * b).integral() for a, b in zip(op(field, eta), xi))
            worst = max(worst, abs(val + swapped) / max(1.0, abs(val)))
    out.append(_check(f"bracket_antisymmetry_n{n}", worst, 1e-8))
    if n == 3:
        grad1 = [GridFunction.zeros(m), GridFunction(np.ones(m))]
        got = hi.recursion_apply(field, grad1, 1)
        want = [dp_eval(p, field.samples()) for p in lx.kdv_rhs(3, 4)]
        worst = max(np.max(np.abs(a.values - b.values)) for a, b in zip(got, want))
        out.append(_check("recursion_reaches_flow4_n3", worst, 1e-7))
    return out


def suite_forms(n: int = 3, m: int = 256) -> list[dict]:
    out = []
    c = cg.perturbed_closed_curve(n, m, amplitude=0.05, seed=n)

    def rand_tangent(seed, amp=0.5):
        r = np.random.default_rng(seed)
        xs = c.x() * 2 * np.pi / c.period
        xi = [GridFunction(amp * sum((r.normal() * np.cos(k * xs) + r.normal() * np.sin(k * xs)) / k
                                     for k in range(1, 4)), c.period) for _ in range(n - 1)]
        return cg.tangent_complete(c, xi)

    worst2 = worst3 = 0.0
    for s in range(5):
        X, Y = rand_tangent(10 + s), rand_tangent(40 + s)
        worst2 = max(worst2, abs(hi.w2_determinant(c, X, Y) + hi.w2_loop(c, X, Y)))
        worst3 = max(worst3, abs(hi.w3_determinant(c, X, Y) - hi.w3_loop(c, X, Y)))
    out.append(_check(f"w2_routes_agree_n{n}", worst2, 1e-7))
    out.append(_check(f"w3_routes_agree_n{n}", worst3, 1e-7))
    r = np.random.default_rng(3)
    c0 = r.normal(size=(n, n))
    c0 -= np.trace(c0) / n * np.eye(n)
    orbit = c.gamma @ c0.T
    worst = max(abs(hi.w2_determinant(c, orbit, rand_tangent(70 + s))) for s in range(3))
    out.append(_check(f"w2_degenerate_on_orbit_n{n}", worst, 1e-6))
    worst = 0.0
    for j in range(1, n):
        xj = hi.flow_vector_field(c, j)
        worst = max(worst, max(abs(hi.w3_determinant(c, xj, rand_tangent(80 + s)))
                               for s in range(2)))
    worst = max(worst, max(abs(hi.w3_determinant(c, orbit, rand_tangent(90 + s)))
                           for s in range(2)))
    out.append(_check(f"w3_degenerate_on_low_flows_and_orbit_n{n}", worst, 1e-6))
    if 2 % n:
        rep = hi.hamiltonian_vector_check(c, 2, rand_tangent(99))
        out.append(_check(f"w2_hamiltonian_property_j2_n{n}", rep["relative"], 1e-5))
    return out


def suite_dynamics(n: int = 3, m: int = 256, t_final: float = 0.1) -> list[dict]:
    if n != 3:
        raise ValueError("the dynamics suite runs the n=3 correspondence")
    out = []
    c0 = cg.perturbed_closed_curve(3, m, amplitude=0.05, modes=2, seed=42, winding=0.8)
    field0 = cg.curvature_map(c0)
    out.append(_check("initial_curvature_bound", field0.norm_inf(), 1.0))
    cfg = dy.EvolutionConfig(flow=FlowSpec(3, 2), t_final=t_final)
    tr_u = dy.evolve_u(field0, cfg)
    tr_c = dy.evolve_curve(c0, cfg)
    diff = float(np.max(np.abs(tr_u.u_snaps[-1] - tr_c.u_snaps[-1])))
    out.append(_check("two_route_correspondence", diff, 1e-5))
    for name in tr_u.invariants:
        out.append(_check(f"conservation_{name}_u_route", tr_u.invariant_drift(name), 1e-6))
        out.append(_check(f"conservation_{name}_curve_route", tr_c.invariant_drift(name), 1e-6))
    out.append(_check("det_invariant_drift", float(tr_c.invariants["det_residual"].max()), 1e-6))
    rec = dy.reconstruct_from_u(dy.evolve_u(field0, dy.EvolutionConfig(flow=FlowSpec(3, 2), t_final=0.02)),
                                c0.frame()[0])
    out.append(_check("frame_compatibility", rec["compatibility"], 1e-6))
    out.append(_check("periodicity_defect", rec["periodicity_defect"], 1e-6))
    return out


def suite_backlund(n: int = 3) -> list[dict]:
    out = []
    j = 2 if 2 % n else 3
    frame = bt.VacuumFrame(n, j)
    k = -1.1
    c0 = np.concatenate([0.3 * np.ones(n - 1), [-1.0]]).astype(complex)
    sol = bt.HSolution(n, j, k, c0, frame)
    x = np.linspace(-0.4, 0.4, 15)
    res = sol.residual(x, 0.05)
    out.append(_check(f"bt_system_residual_x_n{n}", res["x"], 1e-8))
    out.append(_check(f"bt_system_residual_t_n{n}", res["t"], 1e-8))
    sym = bt.bt_symbols(n)
    order = max(sym.f0.at(i + 1, jj + 1).max_order("h", 1)
                for i in range(n) for jj in range(n))
    hj = sol.h_jet(x, 0.05, order)
    zero_u = {("u", i): DiffPoly.zero() for i in range(1, n)}
    worst = 0.0
    for lam in (-1.5, -0.4, 0.0, 0.8, 2.0):
        f = np.zeros((x.size, n, n), dtype=complex)
        resolver = bt._jet_resolver({("h", 1): hj}, order)
        for i in range(1, n + 1):
            for jj in range(1, n + 1):
                p = sym.f0.at(i, jj).substitute(zero_u)
                if not p.is_zero():
                    v = p.evaluate(resolver)
                    f[:, i - 1, jj - 1] = v
        f[:, 0, n - 1] += lam
        worst = max(worst, float(np.max(np.abs(np.linalg.det(f) - (-1) ** (n - 1) * (lam - k)))))
    out.append(_check(f"gauge_determinant_identity_n{n}", worst, 1e-8))
    # curve/curvature diagram
    kk = -1.0
    solh = bt.HSolution(n, j, kk, np.concatenate([0.25 * np.arange(1, n), [-1.0]]).astype(complex), frame)
    big = 2 * n + 6
    hjet = solh.h_jet(x, 0.05, big)
    vac = bt.vacuum_solution(n, j)
    xj = Jet.variable(x.astype(complex), big)
    tj = Jet.const(0.05, big, x.shape)
    gj = vac.gamma_components(xj, tj)
    gt = bt.transform_curve_window(gj, hjet, kk, n, 2 * n + 1)
    u_new = bt.curve_jets_curvature(gt, n, 1)
    zero_jets = [Jet.const(0.0, big, x.shape) for _ in range(n - 1)]
    u_expect = bt.transform_u_jets(n, zero_jets, hjet, 1)
    worst = max(float(np.max(np.abs(a.value() - b.value()))) for a, b in zip(u_new, u_expect))
    out.append(_check(f"curve_curvature_diagram_n{n}", worst, 1e-7))
    if n == 3:
        solr = bt.rational_solution(1.0, 0.4)
        xw = solr.window(-3, 3, 200, 0.2)
        out.append(_check("rational_solution_residual", bt.flow_residual_u(solr, xw, 0.2), 1e-8))
        solth = bt.soliton1_solution(0.8)
        xw = solth.window(-2, 2, 200, 0.1)
        out.append(_check("soliton_solution_residual", bt.flow_residual_u(solth, xw, 0.1), 1e-8))
        h1 = bt.HSolution(3, 2, -1.0, np.array([0.4, -0.3, -1.0], dtype=complex), frame)
        h2 = bt.HSolution(3, 2, -8.0, np.array([-0.2, 0.6, -1.0], dtype=complex), frame)
        xs = np.linspace(-0.6, 0.6, 31)
        ha = h1.h_jet(xs, 0.04, 10)
        hb = h2.h_jet(xs, 0.04, 10)
        ta, tb = bt.permutability_pair(ha, hb)
        zero = [Jet.const(0.0, 10, xs.shape) for _ in range(2)]
        u21 = bt.transform_u_jets(3, bt.transform_u_jets(3, zero, hb, 8), ta, 1)
        u12 = bt.transform_u_jets(3, bt.transform_u_jets(3, zero, ha, 8), tb, 1)
        worst = max(float(np.max(np.abs(a.value() - b.value()))) for a, b in zip(u21, u12))
        out.append(_check("permutability_double_transform", worst, 1e-7))
    return out


SUITES = {
    "symbolic": suite_symbolic,
    "poisson": suite_poisson,
    "forms": suite_forms,
    "dynamics": suite_dynamics,
    "backlund": suite_backlund,
}


def run_suite(name: str, **kwargs) -> list[dict]:
    if name == "all":
        out = []
        n = kwargs.get("n", 3)
        out += suite_symbolic(n)
        out += suite_poisson(n, kwargs.get("m", 256))
        out += suite_forms(n, kwargs.get("m", 256))
        if n == 3:
            out += suite_dynamics(3, kwargs.get("m", 256), kwargs.get("t_final", 0.1))
        out += suite_backlund(n)
        return out
    fn = SUITES.get(name)
    if fn is None:
        raise KeyError(name)
    import inspect
    sig = inspect.signature(fn)
    passed = {k: v for k, v in kwargs.items() if k in sig.parameters}
    return fn(**passed)
