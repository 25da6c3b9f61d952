import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growfrag.entropy import (RelativeDensity, check_bound_lemmas, compute_D, compute_D2, compute_D_quadrature,
                              compute_H, dissipation_matrix, entropy_report, estimate_gap, normalize_u,
                              random_normalized_u)

from conftest import solved


@pytest.fixture(scope="module")
def tr():
    return solved("selfsimilar", 20.0, 257)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_pairwise_form_equals_entropy(tr, seed):
    u = random_normalized_u(tr, np.random.default_rng(seed))
    D2, res = compute_D2(tr, u)
    assert res is not None and res <= 1e-8


def test_pairwise_identity_needs_normalization(tr):
    u = 2 * random_normalized_u(tr, np.random.default_rng(0))
    assert compute_D2(tr, u)[1] is None


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.05, 3.0))
def test_dissipation_is_two_homogeneous(tr, seed, t):
    v = np.random.default_rng(seed).normal(size=len(tr.rho))
    for which in ("fragmentation", "total"):
        D1 = compute_D(tr, 1 + v, which)
        Dt = compute_D(tr, 1 + t * v, which)
        assert D1 >= 0
        assert Dt == pytest.approx(t * t * D1, rel=1e-9)


def test_dissipation_vanishes_on_constants(tr):
    Q = dissipation_matrix(tr, "total")
    assert np.allclose(Q, Q.T)
    assert np.abs(Q @ np.ones(len(tr.rho))).max() <= 1e-12 * np.abs(Q).max()
    assert compute_D(tr, np.ones(len(tr.rho))) == 0.0
    assert compute_H(tr, normalize_u(tr, np.ones(len(tr.rho)))) == pytest.approx(0.0, abs=1e-20)


def test_matrix_and_quadrature_dissipation_converge():
    # two independent discretizations of the same double integral
    ufun = lambda y: 1 + 0.3 * np.sin(np.log(np.asarray(y) + 1e-12))
    gaps = []
    for N in (257, 513):
        t = solved("selfsimilar", 20.0, N)
        x = t.mesh.nodes
        D_mat = compute_D(t, ufun(np.sqrt(x[:-1] * x[1:])))
        gaps.append(abs(compute_D_quadrature(t, ufun) / D_mat - 1))
    assert gaps[0] < 0.1 and gaps[1] < 0.6 * gaps[0]


def test_gap_selfsimilar(tr):
    g = estimate_gap(tr, n_random=200)
    assert g.gap > 0 and g.random_check_ok and g.unconstrained_constant
    assert g.side_conditions["scope"].startswith("inside")
    assert abs(np.dot(tr.rho, g.minimizer.u) - 1) < 1e-10


def test_total_gap_not_below_fragmentation_gap(tr):
    # transport coupling only adds nonnegative terms to the dissipation
    assert estimate_gap(tr, "total", n_random=0).gap >= estimate_gap(tr, n_random=0).gap - 1e-12


def test_mitosis_outside_scope():
    g = estimate_gap(solved("mitosis", 20.0, 257), n_random=0)
    assert g.side_conditions["scope"].startswith("outside")


def test_relative_density_validation(tr):
    with pytest.raises(ValueError):
        RelativeDensity.from_u(tr, np.ones(3))
    rd = RelativeDensity.from_g(tr, tr.G_state)
    assert np.allclose(rd.u, 1.0) and rd.normalization_residual < 1e-10


def test_bound_lemmas_report(tr):
    res = check_bound_lemmas(tr)
    assert res["all_finite"]
    assert all(res[k]["K"] > 0 for k in ("const1", "const2", "const3"))


def test_report_roundtrip(tmp_path, tr):
    rep = entropy_report(tr)
    rep.to_json(tmp_path / "e.json")
    assert rep.identity_residual <= 1e-8
    assert (tmp_path / "e.json").read_text().strip().startswith("{")
