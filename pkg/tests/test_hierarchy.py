"""Bi-Hamiltonian layer: derived operators against printed formulas, the
Casimirs, the recursion, and the two-forms on closed curves."""

from fractions import Fraction as F

import numpy as np
import pytest

from affineflow.diffalg import DiffPoly
from affineflow import curvegeo as cg
from affineflow import hierarchy as hi
from affineflow import looplax as lx
from affineflow.gridfn import GridFunction, dp_eval

from conftest import random_cotangent, random_tangent_field, zero_mean_field


def xi(i, m=0):
    return DiffPoly.var("xi", i, m)


def u(i, m=0):
    return DiffPoly.var("u", i, m)


def test_j1_printed_formulas():
    assert list(hi.j1_components(2)) == [2 * xi(1, 1)]
    assert list(hi.j1_components(3)) == [3 * xi(2, 1), 3 * xi(1, 1)]
    j14 = hi.j1_components(4)
    assert j14[0] == 4 * xi(3, 1) - 2 * xi(2, 2) + 2 * xi(1, 3) - 2 * u(3) * xi(1, 1) - u(3, 1) * xi(1)
    assert j14[1] == 4 * xi(2, 1) + 2 * xi(1, 2)
    assert j14[2] == 4 * xi(1, 1)


def test_j2_printed_formulas():
    assert hi.j2_components(2)[0] == F(-1, 2) * xi(1, 3) + 2 * u(1) * xi(1, 1) + u(1, 1) * xi(1)
    a1, a2 = hi.j2_components(3)
    assert a1 == (F(2, 3) * xi(1, 5) - xi(2, 4) - F(2, 3) * (u(2) * xi(1)).derive(3)
                  - F(2, 3) * u(2) * xi(1, 3) + u(1, 2) * xi(1) + 2 * u(1, 1) * xi(1, 1)
                  + 3 * u(1) * xi(2, 1) + u(1, 1) * xi(2) + u(2) * xi(2, 2)
                  + F(2, 3) * u(2) * (u(2) * xi(1)).derive())
    # printed A_2 has u1 xi1'; antisymmetry against the printed A_1 forces 3 u1 xi1'
    assert a2 == (xi(1, 4) - 2 * xi(2, 3) - (u(2) * xi(1)).derive(2) + 2 * u(2) * xi(2, 1)
                  + u(2, 1) * xi(2) + 3 * u(1) * xi(1, 1) + 2 * u(1, 1) * xi(1))


def test_second_structure_generates_flows():
    for (n, j) in [(2, 1), (2, 3), (3, 1), (3, 2), (3, 4), (3, 5), (4, 2), (4, 3)]:
        grad = list(lx.conserved_density(n, j).gradient)
        assert list(hi.j2_apply_sym(n, grad)) == list(lx.kdv_rhs(n, j))


def test_lenard_chain_with_pencil_sign():
    for (n, j) in [(2, 1), (3, 1), (3, 2), (4, 1)]:
        lhs = hi.j1_apply_sym(n, list(lx.conserved_density(n, n + j).gradient))
        rhs = hi.j2_apply_sym(n, list(lx.conserved_density(n, j).gradient))
        assert all(a == -b for a, b in zip(lhs, rhs))


def test_casimirs():
    for n in (2, 3, 4, 5):
        rep = hi.casimir_check(n)
        assert all(c["zero"] for c in rep["casimirs"])
        assert rep["kernel_dim"] == n - 1


def test_j1_triangular_structure():
    for n in (2, 3, 4, 5):
        comps = hi.j1_leading_checked(n)
        for i, comp in enumerate(comps, start=1):
            lead = comp.partial(DiffPoly.var("xi", n - i, 1).variables().pop())
            assert lead == DiffPoly.const(n)


def test_bracket_antisymmetry_numeric():
    for n in (2, 3, 4):
        field = zero_mean_field(n, seed=n, amp=0.6)
        for s in range(2):
            a = random_cotangent(n, 256, 100 + s)
            b = random_cotangent(n, 256, 200 + s)
            for op in (hi.j1_apply, hi.j2_apply):
                val = sum((p * q).integral() for p, q in zip(op(field, a), b))
                swp = sum((p * q).integral() for p, q in zip(op(field, b), a))
                assert abs(val + swp) < 1e-8 * max(1.0, abs(val))


def test_j1_inverse_triangular():
    field = zero_mean_field(3, seed=5)
    xi_in = random_cotangent(3, 256, 77, amp=0.4)
    xi_in = [GridFunction(f.values - f.mean()) for f in xi_in]
    w = hi.j1_apply(field, xi_in)
    back = hi.j1_inverse_apply(field, w)
    for a, b in zip(back, xi_in):
        assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_j1_inverse_obstruction_error():
    field = zero_mean_field(3, seed=6)
    bad = [GridFunction(np.ones(256)), GridFunction.zeros(256)]
    with pytest.raises(hi.PoissonError, match="component"):
        hi.j1_inverse_apply(field, bad)


def test_recursion_reaches_higher_flows():
    field = zero_mean_field(3, seed=4)
    grad1 = [GridFunction.zeros(256), GridFunction(np.ones(256))]
    out = hi.recursion_apply(field, grad1, 1)
    want = [dp_eval(p, field.samples()) for p in lx.kdv_rhs(3, 4)]
    assert max(np.max(np.abs(a.values - b.values)) for a, b in zip(out, want)) < 1e-7
    # k=0 is plain J2
    out0 = hi.recursion_apply(field, grad1, 0)
    want0 = hi.j2_apply(field, grad1)
    assert max(np.max(np.abs(a.values - b.values)) for a, b in zip(out0, want0)) < 1e-12
    f2 = zero_mean_field(2, seed=9)
    out2 = hi.recursion_apply(f2, [GridFunction(np.ones(256))], 1)
    want2 = [dp_eval(p, f2.samples()) for p in lx.kdv_rhs(2, 3)]
    assert max(np.max(np.abs(a.values - b.values)) for a, b in zip(out2, want2)) < 1e-7


def test_two_form_routes_and_signs():
    for n in (2, 3, 4):
        c = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=n)
        for s in range(4):
            x = random_tangent_field(c, 100 + s)
            y = random_tangent_field(c, 200 + s)
            assert abs(hi.w2_determinant(c, x, y) + hi.w2_loop(c, x, y)) < 1e-7
            assert abs(hi.w3_determinant(c, x, y) - hi.w3_loop(c, x, y)) < 1e-7
            assert abs(hi.w2_determinant(c, x, x)) < 1e-10
            assert abs(hi.w3_determinant(c, x, x)) < 1e-10


def test_two_form_printed_small_n():
    c2 = cg.perturbed_closed_curve(2, 256, amplitude=0.1, seed=2)
    x = random_tangent_field(c2, 11)
    y = random_tangent_field(c2, 12)
    frame = np.stack([x, y], axis=2)
    w3_printed = -2 * np.linalg.det(frame).mean() * c2.period
    assert abs(w3_printed - hi.w3_determinant(c2, x, y)) < 1e-10
    c3 = cg.perturbed_closed_curve(3, 256, amplitude=0.05, seed=5)
    x3 = random_tangent_field(c3, 21)
    y3 = random_tangent_field(c3, 22)
    gp = c3.derivatives(1)[1]
    w3_printed3 = -3 * np.linalg.det(np.stack([x3, gp, y3], axis=2)).mean() * c3.period
    assert abs(w3_printed3 - hi.w3_determinant(c3, x3, y3)) < 1e-9


def test_degeneracies():
    for n in (2, 3, 4):
        c = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=n + 30)
        r = np.random.default_rng(42)
        c0 = r.normal(size=(n, n))
        c0 -= np.trace(c0) / n * np.eye(n)
        orbit = c.gamma @ c0.T
        for s in range(3):
            y = random_tangent_field(c, 400 + s)
            assert abs(hi.w2_determinant(c, orbit, y)) < 1e-6 * max(1, np.max(np.abs(y)))
            assert abs(hi.w3_determinant(c, orbit, y)) < 1e-6 * max(1, np.max(np.abs(y)))
        for j in range(1, n):
            xj = hi.flow_vector_field(c, j)
            for s in range(2):
                y = random_tangent_field(c, 500 + s)
                assert abs(hi.w3_determinant(c, xj, y)) < 1e-6 * max(1, np.max(np.abs(y)))


def test_hamiltonian_property():
    for (n, j) in [(3, 2), (4, 2), (4, 3), (2, 3)]:
        c = cg.perturbed_closed_curve(n, 256, amplitude=0.05, seed=7 * n + j)
        for s in range(2):
            y = random_tangent_field(c, 300 + s)
            rep = hi.hamiltonian_vector_check(c, j, y)
            assert rep["relative"] < 1e-5, (n, j, rep)


def test_hamiltonian_degenerate_direction():
    # Y along the orbit direction: both sides of the pairing vanish
    c = cg.perturbed_closed_curve(3, 256, amplitude=0.05, seed=77)
    r = np.random.default_rng(1)
    c0 = r.normal(size=(3, 3))
    c0 -= np.trace(c0) / 3 * np.eye(3)
    y = c.gamma @ c0.T
    rep = hi.hamiltonian_vector_check(c, 2, y)
    assert abs(rep["w2(X_j,Y)"]) < 1e-6
    assert abs(rep["dF_j(Y)"]) < 1e-6
