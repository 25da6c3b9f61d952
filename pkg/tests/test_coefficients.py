import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growfrag.coefficients import (ConfigError, FragmentMeasure, coefficients_from_config, eval_b,
                                   mitosis_fragments, moment, parse_config_text, power_coefficients,
                                   uniform_fragments, validate_hypotheses)


def test_uniform_and_mitosis_moments():
    for p in (uniform_fragments(), mitosis_fragments()):
        assert moment(p, 0) == pytest.approx(2.0, rel=1e-12)
        assert moment(p, 1) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.2, 3.0), nu=st.floats(-0.5, 2.0))
def test_power_family_preserves_mass(mu, nu):
    p = FragmentMeasure("power", mu, nu)
    assert moment(p, 1) == pytest.approx(1.0, rel=1e-9)
    # more fragments than parents
    assert moment(p, 0) > 1


@settings(max_examples=30, deadline=None)
@given(z=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20))
def test_cumulative_is_monotone(z):
    p = FragmentMeasure("power", 1.5, 0.5)
    zs = np.sort(z)
    vals = p.density_cumulative(0, zs)
    assert np.all(np.diff(vals) >= -1e-14)
    assert p.density_cumulative(0, 1.0) == pytest.approx(moment(p, 0), rel=1e-10)


def test_kernel_conserves_mass_on_average():
    # int_0^x (y/x) b(x, y) dy = B(x)
    c = power_coefficients(0.0, 1.0)
    x = 3.0
    y = np.linspace(1e-6, x * (1 - 1e-9), 20001)
    dens, atoms = eval_b(c, x, y)
    assert not atoms
    val = np.trapezoid(y / x * dens, y)
    assert val == pytest.approx(float(c.B(x)), rel=1e-6)


def test_eval_b_rejects_bad_pairs():
    c = power_coefficients()
    with pytest.raises(ValueError):
        eval_b(c, 1.0, 2.0)


def test_hypotheses_hold_for_power_families():
    for a, g in ((1, 1), (0, 0), (0, 1), (0, -0.5)):
        rep = validate_hypotheses(power_coefficients(a, g))
        assert rep.passes("self_similar_kernel", "growth_positive", "power_asymptotics",
                          "p_near_zero"), rep.verdicts


def test_degenerate_family_flags_power_asymptotics():
    # tau linear with B constant sits on the boundary gamma - alpha + 1 = 0
    rep = validate_hypotheses(power_coefficients(1.0, 0.0))
    assert rep.verdicts["power_asymptotics"] == "fails"


def test_mitosis_has_no_lower_bound():
    rep = validate_hypotheses(power_coefficients(0, 1, fragments=mitosis_fragments()))
    assert rep.verdicts["p_bounded_below"] == "fails"


def test_side_condition_for_linear_growth():
    rep = validate_hypotheses(power_coefficients(1.0, 1.0))
    assert rep.entropy_side_condition(1.0) == "holds"


def test_config_parsing_and_errors():
    cfg = parse_config_text("growth.alpha = 0.5  # comment\nfrag.gamma = 1\nname = demo\n")
    assert cfg == {"growth.alpha": 0.5, "frag.gamma": 1, "name": "demo"}
    c = coefficients_from_config(cfg)
    assert c.exponents["alpha"] == 0.5
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("a = 1\nnot a pair\n")
    with pytest.raises(ConfigError):
        coefficients_from_config({"growth.alpha": "fast"})


def test_tau_and_B_are_powers():
    c = power_coefficients(0.5, -0.5, tau_inf=2.0, B_inf=3.0)
    x = np.array([0.1, 1.0, 10.0])
    assert np.allclose(c.tau(x), 2 * x ** 0.5)
    assert np.allclose(c.B(x), 3 * x ** -0.5)
    assert math.isclose(c.exponents["B_inf"], 3.0)
