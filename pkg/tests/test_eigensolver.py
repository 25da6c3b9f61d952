import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growfrag.coefficients import power_coefficients
from growfrag.eigensolver import (TruncationConfig, _scaled, assemble_operators, estimate_L0, perron,
                                  solve_truncated)
from growfrag.meshops import build_mesh

from conftest import family, solved


@pytest.fixture(scope="module")
def ops():
    c = family("gamma1")
    return assemble_operators(c, TruncationConfig(10.0), build_mesh(10.0, 129, 1e-4), 1.0)


def test_operator_is_metzler(ops):
    M = ops.M.copy()
    np.fill_diagonal(M, 0.0)
    assert M.min() >= 0
    assert np.all(ops.what > 0) and np.all(ops.beta > 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dual_is_weighted_adjoint(ops, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, ops.n))
    lhs = ops.inner(ops.A @ u, v)
    rhs = ops.inner(u, ops.A_dual @ v)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12 * np.abs(ops.M).max())


def test_rescaling_is_a_similarity(ops):
    Lp = np.maximum(ops.cell_Lam, 0)
    direct = np.exp(Lp)[:, None] * ops.M * np.exp(-Lp)[None, :]
    assert np.allclose(_scaled(ops, "primal"), direct, rtol=1e-12, atol=1e-14 * np.abs(direct).max())


def test_fragment_gain_matches_loss_in_mass(ops):
    # fragments carry the parent's mass; relative defect is a quadrature effect
    x = ops.mesh.nodes
    xm = np.sqrt(x[:-1] * x[1:])
    gain = xm @ ops.kappa
    loss = xm * ops.beta
    inner = slice(ops.n // 4, 3 * ops.n // 4)
    assert np.allclose(gain[inner], loss[inner], rtol=0.05)


def test_perron_on_known_matrix():
    # tridiagonal Metzler matrix with known principal eigenvalue
    n = 40
    M = np.diag(-2 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    lam, v, _ = perron(M, np.ones(n), tol=1e-13)
    assert lam == pytest.approx(-2 + 2 * np.cos(np.pi / (n + 1)), abs=1e-10)
    assert np.all(v > 0)


def test_constant_family(small_triples):
    tr = small_triples["constant"]
    assert tr.lam == pytest.approx(1.0, abs=1e-3)
    phi = tr.phi.f()
    x = tr.mesh.nodes
    assert np.max(np.abs(phi[x <= 10] - 1)) < 1e-2


def test_selfsimilar_family(small_triples):
    tr = small_triples["selfsimilar"]
    assert tr.lam == pytest.approx(1.0, abs=5e-3)
    assert tr.lam_dual == pytest.approx(tr.lam_primal, rel=1e-9)


@pytest.mark.parametrize("name", ["selfsimilar", "constant", "gamma1", "gamma_half"])
def test_triple_invariants(small_triples, name):
    tr = small_triples[name]
    assert tr.residuals["primal"] < 1e-8 and tr.residuals["dual"] < 1e-8
    assert abs(tr.normalizations["int_G"]) < 1e-12 and abs(tr.normalizations["int_G_phi"]) < 1e-12
    assert np.all(tr.v > 0) and np.all(tr.theta > 0)
    assert np.all(tr.G.values >= 0)
    assert tr.rho.sum() == pytest.approx(1.0, rel=1e-10)


def test_delta_boundary_raises_lambda():
    base = solved("constant", 20.0, 257)
    tr = solved("constant", 20.0, 257, dual_boundary="delta")
    assert tr.lam >= base.lam - 1e-12
    assert tr.lam == pytest.approx(base.lam, abs=1e-6)


def test_steep_tail_keeps_power_prefactor():
    # B = x, tau = 1: G ~ C x^2 e^{-Lambda}; beyond x ~ 60 each cell spans
    # more than e^{64} of decay, where the own-cell fragments carry the tail
    tr = solved("gamma1", 400.0, 1025)
    assert np.all(np.isfinite(tr.G.values)) and np.all(tr.v > 0)
    x = tr.mesh.nodes
    assert np.diff(tr.ops.Lam)[np.searchsorted(x, 100)] > 64
    w = tr.mesh.window(100, 300)
    slope = np.polyfit(np.log(x[w]), np.log(tr.G.values[w]), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_L0_for_linear_rates():
    est = estimate_L0(power_coefficients(1.0, 1.0))
    assert round(est.L0, 3) == 2.885


def test_truncation_config_validation():
    with pytest.raises(ValueError):
        TruncationConfig(-1.0)
    with pytest.raises(ValueError):
        TruncationConfig(10.0, dual_boundary="free")
    assert TruncationConfig(10.0, dual_boundary="linear", delta=0.1).boundary_value == pytest.approx(1.0)


def test_mesh_must_match_truncation():
    with pytest.raises(ValueError):
        solve_truncated(family("constant"), TruncationConfig(10.0), build_mesh(20.0, 129, 1e-3))


def test_outputs(tmp_path, small_triples):
    tr = small_triples["constant"]
    tr.to_json(tmp_path / "t.json")
    tr.to_csv(tmp_path / "t.csv")
    d = json.loads((tmp_path / "t.json").read_text())
    assert d["lambda_L"] == pytest.approx(tr.lam)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "x,G,phi,G_exp_prefactored" and len(rows) == tr.mesh.N + 1
