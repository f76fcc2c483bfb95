"""Spectral grid functions and Taylor-jet arithmetic."""

import numpy as np
import pytest

from affineflow.gridfn import GridFunction
from affineflow.jets import (Jet, jet_exp, jet_matrix_ode, jet_sec,
                             jet_sech, jet_sin_cos, jet_tan, jet_tanh)


def test_spectral_derivative_and_antiderivative():
    m = 128
    x = GridFunction.grid(m)
    f = GridFunction(np.sin(3 * x))
    assert np.max(np.abs(f.derivative().values - 3 * np.cos(3 * x))) < 1e-11
    assert np.max(np.abs(f.derivative(2).values + 9 * np.sin(3 * x))) < 1e-10
    g = f.antiderivative()
    assert np.max(np.abs(g.values + np.cos(3 * x) / 3 - np.mean(-np.cos(3 * x) / 3))) < 1e-12
    with pytest.raises(ValueError):
        GridFunction(np.ones(m)).antiderivative()


def test_period_aware_ops():
    L = 5.0
    m = 64
    x = GridFunction.grid(m, L)
    f = GridFunction(np.cos(2 * np.pi * x / L), L)
    d = f.derivative()
    assert np.max(np.abs(d.values + 2 * np.pi / L * np.sin(2 * np.pi * x / L))) < 1e-11
    assert abs(f.integral()) < 1e-12
    assert abs(GridFunction(np.ones(m), L).integral() - L) < 1e-12


def test_eval_at_interpolates():
    m = 64
    f = GridFunction.from_function(lambda x: np.sin(2 * x) + 0.3 * np.cos(5 * x), m)
    pts = np.array([0.1234, 1.9, 4.4])
    expect = np.sin(2 * pts) + 0.3 * np.cos(5 * pts)
    assert np.max(np.abs(f.eval_at(pts) - expect)) < 1e-12


def test_resample_and_tail():
    m = 64
    f = GridFunction.from_function(lambda x: np.sin(x), m)
    up = f.resample(128)
    assert np.max(np.abs(up.values - np.sin(GridFunction.grid(128)))) < 1e-12
    assert f.tail_energy_fraction() < 1e-20


def test_jet_arithmetic_and_functions():
    x0 = np.array([0.3, 1.1, -0.4])
    K = 5
    xj = Jet.variable(x0, K)
    f = (xj ** 2 + 1.0).reciprocal()
    # d/dx (1/(1+x^2)) = -2x/(1+x^2)^2
    expect = -2 * x0 / (1 + x0 ** 2) ** 2
    assert np.max(np.abs(f.derivative(1) - expect)) < 1e-12
    s, c = jet_sin_cos(xj)
    assert np.max(np.abs(s.derivative(3) + np.cos(x0))) < 1e-12
    assert np.max(np.abs(c.derivative(2) + np.cos(x0))) < 1e-12
    e = jet_exp(xj * 0.5)
    assert np.max(np.abs(e.derivative(2) - 0.25 * np.exp(0.5 * x0))) < 1e-12
    t = jet_tan(xj)
    assert np.max(np.abs(t.derivative(1) - 1 / np.cos(x0) ** 2)) < 1e-11
    sec = jet_sec(xj)
    assert np.max(np.abs(sec.value() - 1 / np.cos(x0))) < 1e-13
    th = jet_tanh(xj)
    assert np.max(np.abs(th.derivative(1) - 1 / np.cosh(x0) ** 2)) < 1e-12
    sh = jet_sech(xj)
    assert np.max(np.abs(sh.value() - 1 / np.cosh(x0))) < 1e-13
    assert np.max(np.abs((xj ** -2).value() - x0 ** -2.0)) < 1e-12


def test_jet_complex():
    z0 = np.array([0.2 + 0.1j, -0.3 + 0.4j])
    zj = Jet.variable(z0, 3)
    w = jet_sech(zj * 1.5)
    d = w.derivative(1)
    expect = -1.5 * np.tanh(1.5 * z0) / np.cosh(1.5 * z0)
    assert np.max(np.abs(d - expect)) < 1e-12


def test_jet_matrix_ode():
    # v' = A v with constant A: jet of exp(xA)v0
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x0 = np.array([0.0, 0.5])
    order = 6
    b_jet = [[Jet.const(a[i, j], order, x0.shape) for j in range(2)] for i in range(2)]
    v0 = np.stack([np.cos(x0), -np.sin(x0)])  # solution (cos, -sin)
    v = jet_matrix_ode(b_jet, v0, order)
    assert np.max(np.abs(v[0].derivative(2) + np.cos(x0))) < 1e-10
