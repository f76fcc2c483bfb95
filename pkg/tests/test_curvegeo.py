"""Geometry layer: curvature extraction, reconstruction, reparametrization,
tangency completion and the bottom-row lift."""

import os
from fractions import Fraction as F

import numpy as np
import pytest

from affineflow.diffalg import DiffPoly
from affineflow.dpmatrix import DPMatrix, ad_connection
from affineflow import curvegeo as cg
from affineflow.gridfn import GridFunction

from conftest import random_cotangent


def xi(i, m=0):
    return DiffPoly.var("xi", i, m)


def u(i, m=0):
    return DiffPoly.var("u", i, m)


def v(i, m=0):
    return DiffPoly.var("v", i, m)


def test_unit_circle_curvature():
    c = cg.base_closed_curve(2, 128)
    assert c.det_residual() < 1e-10
    field = cg.curvature_map(c)
    assert np.max(np.abs(field.u[0].values + 1.0)) < 1e-9


def test_base_curves_admissible():
    for n in (2, 3, 4, 5):
        c = cg.base_closed_curve(n, 256)
        assert c.det_residual() < 1e-9
        cg.curvature_map(c)
    cw = cg.base_closed_curve(3, 128, winding=0.8)
    uw = cg.curvature_map(cw)
    assert abs(cw.period - 2 * np.pi / 0.8) < 1e-12
    assert np.max(np.abs(uw.u[1].values + 0.64)) < 1e-9


def test_perturbed_curves_closed_and_admissible():
    for n in (2, 3, 4, 5):
        p = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=1)
        assert p.det_residual() < 1e-8


def test_polynomial_curve_zero_curvature():
    # vacuum curve on a window, via jets (non-periodic)
    from affineflow.backlund import vacuum_solution, flow_residual_curve
    sol = vacuum_solution(4, 1)
    res = flow_residual_curve(sol, np.linspace(-0.7, 0.7, 50), 0.1)
    assert res["det"] < 1e-9


def test_curvature_map_rejects_bad_det():
    c = cg.base_closed_curve(3, 128)
    with pytest.raises(cg.CurveError):
        cg.curvature_map(cg.CurveSample(3, 2.0 * c.gamma, c.period))


def test_reparametrize_ellipse():
    s = GridFunction.grid(128)
    raw = np.stack([2 * np.cos(s), np.sin(s)], axis=1)
    rp = cg.reparametrize(raw)
    assert abs(rp.period - 4 * np.pi) < 1e-10
    assert rp.det_residual() < 1e-10
    c2 = cg.base_closed_curve(2, 128)
    again = cg.reparametrize(c2.gamma)
    assert np.max(np.abs(again.gamma - c2.gamma)) < 1e-10
    assert abs(again.period - c2.period) < 1e-12


def test_reparametrize_rejects_inadmissible():
    s = GridFunction.grid(64)
    bad = np.stack([np.cos(s), np.ones(64)], axis=1)  # det changes sign
    with pytest.raises(cg.CurveError):
        cg.reparametrize(bad)


def test_det_normalize_exact():
    c = cg.base_closed_curve(3, 128)
    scaled = c.gamma * 1.3
    back = cg.det_normalize(scaled, c.period)
    assert back.det_residual() < 1e-11


def test_frame_reconstruct_round_trip():
    for n, ss, tol in [(2, 32, 1e-8), (3, 32, 1e-8), (4, 48, 1e-7)]:
        per = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=7)
        field = cg.curvature_map(per)
        rec = cg.frame_reconstruct(field, g0=per.frame()[0], substeps=ss)
        u2 = cg.curvature_map(rec)
        err = max(np.max(np.abs(a.values - b.values)) for a, b in zip(field.u, u2.u))
        assert err < tol, (n, err)
        assert rec.frame_data is not None
        dets = np.linalg.det(rec.frame_data)
        assert np.max(np.abs(dets - 1)) < 1e-9


def test_frame_reconstruct_vacuum_polynomial():
    m = 64
    zf = cg.CurvatureField(3, [GridFunction.zeros(m), GridFunction.zeros(m)])
    vac = cg.frame_reconstruct(zf)
    xs = vac.x()
    assert np.max(np.abs(vac.gamma[:, 0] - 1)) < 1e-12
    assert np.max(np.abs(vac.gamma[:, 1] - xs)) < 1e-10
    assert np.max(np.abs(vac.gamma[:, 2] - xs ** 2 / 2)) < 1e-10


def test_frame_reconstruct_sl_orbit_factor():
    per = cg.perturbed_closed_curve(3, 256, amplitude=0.08, seed=11)
    field = cg.curvature_map(per)
    rec = cg.frame_reconstruct(field, g0=np.eye(3), substeps=16)
    c0 = per.frame() @ np.linalg.inv(rec.frame())
    assert np.max(np.abs(c0 - c0[0])) < 1e-6


def test_frame_reconstruct_rejects_non_unimodular():
    m = 32
    zf = cg.CurvatureField(3, [GridFunction.zeros(m), GridFunction.zeros(m)])
    with pytest.raises(cg.CurveError):
        cg.frame_reconstruct(zf, g0=2 * np.eye(3))


def test_phi_n_golden():
    assert cg.phi_n(2) == F(-1, 2) * xi(1, 1)
    # printed n=3 has 3*xi_1; the tangency constraint forces 3*xi_1'
    assert cg.phi_n(3) == F(-1, 3) * (xi(2, 2) + 3 * xi(1, 1) + 2 * u(2) * xi(2))
    # printed n=4 has 2 u2 xi3; the trace of the column recursion gives 3 u2 xi3
    # (each of the last three diagonal entries carries one u2 xi3), and only
    # that value satisfies the tangency constraint numerically
    assert cg.phi_n(4) == F(-1, 4) * (xi(3, 3) + 4 * xi(2, 2) + 6 * xi(1, 1)
                                      + 3 * u(3, 1) * xi(3) + 5 * u(3) * xi(3, 1)
                                      + 3 * u(2) * xi(3) + 2 * u(3) * xi(2))
    p5 = cg.phi_n(5)
    exp5 = F(-1, 5) * (xi(4, 4) + 5 * xi(3, 3) + 10 * xi(2, 2) + 10 * xi(1, 1)
                       + 6 * u(3, 1) * xi(4) + 9 * u(3) * xi(4, 1)
                       + 4 * (u(4) * xi(4)).derive(2) + 3 * (u(4) * xi(4, 1)).derive()
                       + 2 * u(4) * xi(4, 2) + 3 * (u(4) * xi(3)).derive()
                       + 4 * u(4) * xi(3, 1) + 4 * u(2) * xi(4) + 3 * u(3) * xi(3)
                       + 2 * u(4) * xi(2) + 2 * u(4) ** 2 * xi(4))
    assert p5 == exp5


def test_p_u_golden_n3():
    p = cg.p_u(3)
    assert p.at(1, 1) == -v(2, 1) + F(2, 3) * v(1, 2) - F(2, 3) * u(2) * v(1)
    assert p.at(2, 1) == v(2) - v(1, 1)
    assert p.at(3, 1) == v(1)
    assert p.at(2, 2) == F(-1, 3) * v(1, 2) + F(1, 3) * u(2) * v(1)
    assert p.at(3, 3) == v(2, 1) - F(1, 3) * v(1, 2) + F(1, 3) * u(2) * v(1)
    assert p.at(1, 2) == -v(2, 2) + F(2, 3) * v(1, 3) - F(2, 3) * (u(2) * v(1)).derive() + u(1) * v(1)
    assert p.at(1, 3) == (-v(2, 3) + F(2, 3) * v(1, 4) - F(2, 3) * (u(2) * v(1)).derive(2)
                          + (u(1) * v(1)).derive() + u(1) * v(2))
    assert p.at(2, 3) == (-v(2, 2) + F(1, 3) * v(1, 3) - F(1, 3) * (u(2) * v(1)).derive()
                          + u(2) * v(2) + u(1) * v(1))


def test_p_u_golden_n4():
    p = cg.p_u(4)
    assert p.at(2, 1) == v(3) - 2 * v(2, 1) + v(1, 2) - u(3) * v(1)
    assert p.at(3, 1) == v(2) - v(1, 1)
    assert p.at(4, 1) == v(1)
    assert p.at(1, 1) == F(-1, 4) * (3 * v(1, 3) - 8 * v(2, 2) + 6 * v(3, 1)
                                     - 3 * (u(3) * v(1)).derive() + 3 * u(2) * v(1)
                                     + 2 * u(3) * v(2))
    assert p.at(4, 4) == (F(1, 4) * v(1, 3) - v(2, 2) + F(3, 2) * v(3, 1)
                          - F(1, 4) * (u(3) * v(1)).derive() + F(1, 4) * u(2) * v(1)
                          + F(1, 2) * u(3) * v(2))


def test_p_u_postconditions_and_recursion():
    for n in (2, 3, 4, 5):
        p = cg.p_u(n)
        assert p.trace().is_zero()
        assert p.bottom_row_head() == [v(i) for i in range(1, n)]
        bu = DPMatrix.shift_b(n) + DPMatrix.curvature_u(n)
        assert ad_connection(bu, p).off_v_part().is_zero()
        for j in range(1, n):
            col = DPMatrix(n)
            for i in range(n):
                col.put(i + 1, 1, p.at(i + 1, j))
            nxt = col.derive() + bu * col
            assert all(nxt.at(i + 1, 1) == p.at(i + 1, j + 1) for i in range(n))
        # v = 0 gives C = 0
        zero_v = {("v", i): DiffPoly.zero() for i in range(1, n)}
        assert p.substitute(zero_v).is_zero()


def test_tangent_complete_second_flow():
    # absolute residual tolerances scale with the curvature size (n=4 base
    # curves carry |u| ~ 5 and fourth-derivative determinant columns)
    for n, tol in [(3, 1e-7), (4, 1e-6)]:
        c = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=2)
        field = cg.curvature_map(c)
        xi_list = [GridFunction.zeros(c.m, c.period) for _ in range(n - 1)]
        xi_list[1] = GridFunction(np.ones(c.m), c.period)
        delta = cg.tangent_complete(c, xi_list)
        ders = c.derivatives(2)
        expect = -(2.0 / n) * field.u[n - 2].values[:, None] * ders[0] + ders[2]
        assert np.max(np.abs(delta - expect)) < 1e-8
        assert cg.tangency_residual(c, delta) < tol


def test_tangent_complete_zero_and_random():
    c = cg.perturbed_closed_curve(3, 256, amplitude=0.05, seed=9)
    zero = [GridFunction.zeros(c.m, c.period) for _ in range(2)]
    assert np.max(np.abs(cg.tangent_complete(c, zero))) == 0.0
    xi_r = random_cotangent(3, c.m, 31, amp=0.3, period=c.period)
    delta = cg.tangency_residual(c, cg.tangent_complete(c, xi_r))
    assert delta < 1e-8


def test_curve_io_roundtrips(tmp_path):
    c = cg.perturbed_closed_curve(3, 64, amplitude=0.05, seed=3)
    p = os.path.join(tmp_path, "curve.csv")
    cg.save_curve_csv(p, c)
    back = cg.load_curve_csv(p)
    assert back.n == 3 and abs(back.period - c.period) < 1e-9
    assert np.max(np.abs(back.gamma - c.gamma)) < 1e-12
    field = cg.curvature_map(c)
    q = os.path.join(tmp_path, "u.csv")
    cg.save_curvature_csv(q, field)
    fback = cg.load_curvature_csv(q)
    assert np.max(np.abs(fback.u[0].values - field.u[0].values)) < 1e-12
    d = cg.curve_to_json_dict(c)
    c2 = cg.curve_from_json_dict(d)
    assert np.max(np.abs(c2.gamma - c.gamma)) == 0.0
