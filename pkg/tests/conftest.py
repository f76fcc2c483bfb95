import numpy as np
import pytest

from affineflow import curvegeo as cg
from affineflow.gridfn import GridFunction


def random_cotangent(n, m, seed, amp=1.0, period=2 * np.pi, modes=3):
    """n-1 random band-limited grid functions."""
    r = np.random.default_rng(seed)
    x = GridFunction.grid(m, period) * (2 * np.pi / period)
    out = []
    for _ in range(n - 1):
        v = sum((r.normal() * np.cos(k * x) + r.normal() * np.sin(k * x)) / k
                for k in range(1, modes + 1))
        out.append(GridFunction(amp * v, period))
    return out


def random_tangent_field(curve, seed, amp=0.5, modes=3):
    xi = random_cotangent(curve.n, curve.m, seed, amp, curve.period, modes)
    return cg.tangent_complete(curve, xi)


def zero_mean_field(n, m=256, seed=0, amp=0.8):
    us = random_cotangent(n, m, seed, 1.0)
    us = [GridFunction(amp * f.values / max(1e-12, np.max(np.abs(f.values)))) for f in us]
    return cg.CurvatureField(n, us)


@pytest.fixture
def closed3():
    return cg.perturbed_closed_curve(3, 256, amplitude=0.05, modes=2, seed=42, winding=0.8)
