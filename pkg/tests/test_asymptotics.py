import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import growfrag.asymptotics as asy
from growfrag.coefficients import power_coefficients
from growfrag.meshops import build_mesh

from conftest import solved


def test_laplace_exact_case():
    r = asy.laplace_oracle(asy.builtin_laplace_problems()["exact"], [1.0, 10.0, 100.0, 1000.0])
    assert max(abs(q - 1) for q in r.ratio) < 1e-10
    assert not r.invariant_failures


@pytest.mark.parametrize("name", ["sqrt", "quadratic"])
def test_laplace_power_cases(name):
    r = asy.laplace_oracle(asy.builtin_laplace_problems()[name], [10.0, 100.0, 1000.0])
    assert max(abs(q - 1) for q in r.ratio) < 1e-8 and not r.invariant_failures


@settings(max_examples=15, deadline=None)
@given(sigma=st.floats(0.0, 2.0), omega=st.floats(1.0, 3.0))
def test_laplace_pure_power_is_exact(sigma, omega):
    # g = (x-1)^sigma, h = (x-1)^omega: the leading term is the whole integral
    prob = asy.LaplaceProblem("p", 1.0, lambda x: max(x - 1, 0.0) ** sigma, sigma, 1.0,
                              lambda x, D: max(x - 1, 0.0) ** omega, 1.0, omega, lambda d: 1.0)
    D = 50.0
    assert asy.laplace_lhs(prob, D) == pytest.approx(asy.laplace_rhs(prob, D), rel=1e-8)


def test_laplace_invariant_violation_is_reported():
    bad = asy.LaplaceProblem("bad", 1.0, lambda x: 1.0, 0.0, 1.0, lambda x, D: -(x - 1), 1.0, 1.0,
                             lambda d: 1.0)
    assert bad.check_invariants([10.0])


def test_Lambda_integral_constant_family():
    c = power_coefficients(0.0, 0.0)
    r = asy.verify_Lambda_integral(c, 1.0, 0.0, [10.0, 50.0, 100.0])
    assert r.verdict == "consistent" and abs(r.ratio[-1] - 1) < 0.05


def test_kernel_integral_gamma_one():
    c = power_coefficients(0.0, 1.0)
    r = asy.verify_kernel_integral(c, 1.0, 0.0, [10.0, 50.0, 100.0])
    assert r.verdict == "consistent"


def test_kernel_integral_mitosis_is_lower_order():
    from growfrag.coefficients import mitosis_fragments
    c = power_coefficients(0.0, 1.0, fragments=mitosis_fragments())
    r = asy.verify_kernel_integral(c, 1.0, 0.0, [5.0, 10.0, 20.0])
    assert r.name == "kernel_integral_lower_order" and r.verdict == "consistent"


def test_linear_certificates_gamma_one():
    c = power_coefficients(0.0, 1.0)
    # the subsolution takes its sign only beyond x ~ 40, so L/4 must exceed that
    mesh = build_mesh(400.0, 513, 1e-4)
    sup = asy.check_certificate(c, 1.0, mesh, asy.linear_supersolution(10.0, 0.5), "super")
    sub = asy.check_certificate(c, 1.0, mesh, asy.linear_subsolution(0.5), "sub")
    assert sup.verdict == "holds" and sub.verdict == "holds"
    assert sup.A <= 2 and 30 < sub.A < 50


def test_certificate_mode_checked():
    with pytest.raises(ValueError):
        asy.check_certificate(power_coefficients(), 1.0, build_mesh(10, 64, 1e-3),
                              asy.linear_subsolution(0.5), "either")


def test_wrong_sign_candidate_fails():
    # a subsolution tested as a supersolution never settles
    c = power_coefficients(0.0, 1.0)
    r = asy.check_certificate(c, 1.0, build_mesh(80.0, 257, 1e-4), asy.linear_subsolution(0.5), "super")
    assert r.verdict == "fails"


def test_G_at_zero_slopes(small_triples):
    r = asy.verify_G_at_zero(small_triples["gamma1"])
    assert r.predicted == pytest.approx(1.0) and r.verdict == "consistent"
    r = asy.verify_G_at_zero(small_triples["selfsimilar"])
    assert r.predicted == pytest.approx(0.0) and r.verdict == "consistent"


def test_G_at_zero_mitosis_inapplicable():
    tr = solved("mitosis", 20.0, 257)
    assert asy.verify_G_at_zero(tr).verdict == "inapplicable"


def test_phi_zero_subcases():
    assert "constant" in asy.phi_zero_subcase(power_coefficients(0.0, 0.0))
    assert "power" in asy.phi_zero_subcase(power_coefficients(1.0, 1.0))
    assert "exponential" in asy.phi_zero_subcase(power_coefficients(1.5, 1.0))


def test_phi_at_infinity_gamma_zero_excluded(small_triples):
    assert asy.verify_phi_at_infinity(small_triples["constant"]).verdict == "excluded"


def test_phi_at_infinity_band(small_triples):
    r = asy.verify_phi_at_infinity(small_triples["selfsimilar"])
    assert r.verdict == "consistent"


def test_report_serializes(tmp_path, small_triples):
    r = asy.verify_G_at_zero(small_triples["gamma1"])
    d = r.to_dict()
    assert d["verdict"] == r.verdict and all(isinstance(v, float) for v in d["window"])
    r.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("x,ratio")


def test_thresholds_are_ordered():
    c = power_coefficients(0.0, -0.5)
    th = asy.certificate_thresholds(c, 1.8)
    assert th["eta_min"] > 0 and th["eps_max"] > 0
    assert math.isfinite(th["eta_min"])
