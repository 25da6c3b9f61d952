import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from growfrag.coefficients import GrowthRate, TotalFragRate, CoefficientSet, power_coefficients, uniform_fragments
from growfrag.meshops import RatioIntegrals, build_mesh, compute_Lambda, compute_scalars


@settings(max_examples=40, deadline=None)
@given(L=st.floats(2.0, 1e4), N=st.integers(16, 3000), lx1=st.floats(-12, -1))
def test_mesh_is_geometric(L, N, lx1):
    m = build_mesh(L, N, 10 ** lx1)
    x = m.nodes
    assert x[0] == pytest.approx(10 ** lx1) and x[-1] == L and m.N == N
    assert np.allclose(x[1:] / x[:-1], m.ratio, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), N=st.integers(16, 500))
def test_trapezoid_exact_for_linear(a, b, N):
    m = build_mesh(10.0, N, 1e-3)
    x = m.nodes
    exact = a * (10.0 - 1e-3) + b * (100.0 - 1e-6) / 2
    assert m.integrate(a + b * x) == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_mesh_rejects_bad_input():
    for args in ((10, 8, 1e-3), (10, 100, 0.0), (1.0, 100, 2.0)):
        with pytest.raises(ValueError):
            build_mesh(*args)


def test_window_mask():
    m = build_mesh(100, 201, 1e-2)
    w = m.window(1, 10)
    assert m.nodes[w].min() >= 1 - 1e-9 and m.nodes[w].max() <= 10 + 1e-9


def test_Lambda_closed_form_constant_case():
    c = power_coefficients(0.0, 0.0)
    ri = RatioIntegrals(c)
    x = np.array([0.5, 1.0, 3.0])
    assert np.allclose(ri.Lambda(x, 1.0), 2 * (x - 1))


@pytest.mark.parametrize("eta", [0.0, 0.3])
def test_Lambda_panels_match_quadrature(eta):
    # a perturbed power law forces the panel path
    c = CoefficientSet(GrowthRate("power-with-perturbation", 0.5, 1.0, 0.3, 1.0),
                       TotalFragRate("power-with-perturbation", 1.0, 1.0, 0.2, 1.0), uniform_fragments())
    ri = RatioIntegrals(c, eta, x_lo=1e-4, x_hi=100)
    lam = 0.7
    for x in (0.01, 0.5, 2.0, 50.0):
        f = lambda y: (lam + float(c.B(y))) / float(ri.tau_eta(y))
        ref, _ = integrate.quad(f, 1.0, x, epsrel=1e-12, limit=200)
        assert float(ri.Lambda(x, lam)) == pytest.approx(ref, rel=1e-8, abs=1e-10)


def test_compute_Lambda_grid():
    c = power_coefficients(1.0, 1.0)
    m = build_mesh(10, 101, 1e-3)
    g = compute_Lambda(c, 1.0, m)
    # tau = x, B = x: Lambda = ln x + x - 1
    x = m.nodes
    assert np.allclose(g.values, np.log(x) + x - 1, atol=1e-10)


def test_scalars_constant_family():
    sc = compute_scalars(power_coefficients(0.0, 0.0), lam=1.0)
    assert sc.zeta == pytest.approx(2.0) and sc.xi == pytest.approx(1.0)


def test_scalars_gamma_one_uniform():
    sc = compute_scalars(power_coefficients(0.0, 1.0))
    assert sc.zeta == 1.0 and sc.xi == pytest.approx(2.0)
    assert math.isclose(sc.gamma_plus, 1.0)


def test_scalars_need_lambda_for_nonpositive_gamma():
    with pytest.raises(ValueError):
        compute_scalars(power_coefficients(0.0, -0.5))
