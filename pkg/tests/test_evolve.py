import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growfrag.evolve import (CFLError, Evolver, initial_gap_minimizer, initial_lognormal, initial_perturbation,
                             run)

from conftest import solved


@pytest.fixture(scope="module")
def ev():
    return Evolver(solved("selfsimilar", 20.0, 257))


def test_profile_is_steady(ev):
    st_ = ev.observe(0.0, ev.G)
    for _ in range(50):
        st_ = ev.step(st_, ev.dt_max)
    assert np.abs(st_.g - ev.G).max() <= 1e-9 * ev.G.max()


def test_cfl_limit(ev):
    with pytest.raises(CFLError) as err:
        ev.step(ev.observe(0.0, ev.G), 2 * ev.dt_max)
    assert err.value.suggested_dt == pytest.approx(ev.dt_max)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_step_keeps_positivity(ev, seed):
    g = np.random.default_rng(seed).uniform(0, 1, size=len(ev.G)) * ev.G
    st_ = ev.observe(0.0, g)
    for _ in range(20):
        st_ = ev.step(st_, ev.dt_max)
    assert st_.g.min() >= 0


def test_unrescaled_step_matches_integrating_factor(ev):
    g = initial_perturbation(ev)
    n = g.copy()
    st_ = ev.observe(0.0, g)
    dt = 0.9 * ev.dt_max
    for _ in range(100):
        st_ = ev.step(st_, dt)
        n = ev.step_unrescaled(n, dt)
    assert np.allclose(n * math.exp(-ev.lam * 100 * dt), st_.g, rtol=1e-10, atol=1e-14)


def test_short_run_observables(ev):
    traj = run(ev, initial_lognormal(ev), T=1.0)
    assert traj.conservation_drift() < 1e-8
    assert traj.monotone_entropy()
    assert traj.gre_errors().max() < 0.05
    assert traj.min_g >= 0


def test_gap_minimizer_is_normalized(ev):
    g0 = initial_gap_minimizer(ev)
    assert np.dot(ev.w * ev.phi, g0) == pytest.approx(1.0, rel=1e-12)
    assert g0.min() >= 0


def test_rejects_negative_data_and_too_many_steps(ev):
    with pytest.raises(ValueError):
        run(ev, -ev.G, 1.0)
    with pytest.raises(ValueError):
        run(ev, ev.G, 1.0, dt=1e-3 * ev.dt_max, max_steps=10)


def test_trajectory_csv(tmp_path, ev):
    traj = run(ev, initial_perturbation(ev), T=0.2)
    traj.to_csv(tmp_path / "t.csv", cadence=5)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0].startswith("t,conserved,H,D") and len(rows) >= 2
