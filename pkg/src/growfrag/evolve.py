"""Explicit time stepping of the rescaled equation on the eigensolver's grid.

The semi-discrete system is w dg/dt = M g - lam w g with the very matrix M
from the eigensolve, so G is a steady state and sum w phi g is conserved up
to the eigen-residual.  Forward Euler keeps g >= 0 when the diagonal of
I + dt (W^{-1} M - lam) is nonnegative.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .eigensolver import EigenTriple
from .entropy import dissipation_matrix, estimate_gap

OVERFLOW_GUARD = 1e300


class CFLError(ValueError):
    def __init__(self, dt, dt_max):
        super().__init__(f"dt={dt:.4g} exceeds the positivity limit; use dt <= {dt_max:.6g}")
        self.suggested_dt = dt_max


@dataclass
class EvolutionState:
    t: float
    g: np.ndarray
    mass: float = math.nan
    conserved: float = math.nan
    H: float = math.nan
    D: float = math.nan


class Evolver:
    """Observables and steps for one eigentriple."""

    def __init__(self, triple: EigenTriple):
        G = triple.G_state
        if np.any(G <= 0):
            raise ValueError("G underflows on the grid; use a smaller L for time evolution")
        self.tr = triple
        self.ops = triple.ops
        self.lam = triple.lam_primal
        self.A = self.ops.A
        self.G = G
        self.phi = triple.phi_state
        self.w = self.ops.what
        self.rho = triple.rho
        self.Q_total = dissipation_matrix(triple, "total")
        self.Q_frag = dissipation_matrix(triple, "fragmentation")
        diag = -np.diag(self.A) + self.lam
        self.dt_max = 1.0 / float(np.max(diag))

    def observe(self, t, g) -> EvolutionState:
        u = g / self.G
        v = u - 1
        return EvolutionState(t, g, float(np.dot(self.w, g)), float(np.dot(self.w * self.phi, g)),
                              float(np.dot(self.rho, v * v)), float(v @ self.Q_total @ v))

    def step(self, state: EvolutionState, dt: float) -> EvolutionState:
        if dt > self.dt_max * (1 + 1e-12):
            raise CFLError(dt, self.dt_max)
        g = state.g + dt * (self.A @ state.g - self.lam * state.g)
        return self.observe(state.t + dt, g)

    def step_unrescaled(self, n: np.ndarray, dt: float) -> np.ndarray:
        """One step of dn/dt = A n as integrating factor times the rescaled step."""
        if dt > self.dt_max * (1 + 1e-12):
            raise CFLError(dt, self.dt_max)
        return math.exp(self.lam * dt) * (n + dt * (self.A @ n - self.lam * n))


# --------------------------------------------------------------------------
# initial data, all normalized to sum w phi g = 1


def _normalize(ev: Evolver, g):
    g = np.maximum(np.asarray(g, float), 0.0)
    return g / float(np.dot(ev.w * ev.phi, g))


def initial_perturbation(ev: Evolver, eps: float = 0.3, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    s = np.linspace(0, 1, len(ev.G))
    v = sum(rng.normal() * np.sin(math.pi * (k + 1) * s) / (k + 1) for k in range(5))
    v = v / max(np.max(np.abs(v)), 1e-300)
    return _normalize(ev, ev.G * (1 + eps * v))


def initial_lognormal(ev: Evolver, center: float = 1.0, width: float = 0.5) -> np.ndarray:
    x = ev.tr.mesh.nodes[:-1] * math.sqrt(ev.tr.mesh.ratio)
    bump = np.exp(-0.5 * (np.log(x / center) / width) ** 2)
    # bump in the relative density u = g / G, so H stays finite where G is tiny
    return _normalize(ev, ev.G * (0.1 + bump))


def initial_gap_minimizer(ev: Evolver, amplitude: float = 0.5, which: str = "total",
                          rel_floor: float = 1e-8) -> np.ndarray:
    # a coarser floor keeps the minimizer off cells where rho is negligible
    gr = estimate_gap(ev.tr, which, n_random=0, rel_floor=rel_floor)
    v = gr.minimizer.u - 1
    v = v / np.max(np.abs(v))
    return _normalize(ev, ev.G * (1 + amplitude * v))


# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    t: np.ndarray
    conserved: np.ndarray
    mass: np.ndarray
    H: np.ndarray
    D: np.ndarray
    dt: float
    min_g: float
    checkpoints: dict = field(default_factory=dict)

    def conservation_drift(self) -> float:
        return float(abs(self.conserved[-1] - self.conserved[0]) / abs(self.conserved[0]))

    def gre_errors(self, transient: float = 0.1) -> np.ndarray:
        """|dH/dt + D| / D with centered differences, for t past the transient fraction."""
        dH = np.diff(self.H) / np.diff(self.t)
        Dm = (self.D[1:] + self.D[:-1]) / 2
        tm = (self.t[1:] + self.t[:-1]) / 2
        keep = (tm >= transient * self.t[-1]) & (Dm > 0)
        return np.abs(dH[keep] + Dm[keep]) / Dm[keep]

    def fitted_rate(self, start_fraction: float = 0.5) -> float:
        keep = (self.t >= start_fraction * self.t[-1]) & (self.H > 0)
        return float(-np.polyfit(self.t[keep], np.log(self.H[keep]), 1)[0])

    def running_rate(self) -> np.ndarray:
        out = np.full(len(self.t), np.nan)
        for i in range(2, len(self.t)):
            j = int(np.searchsorted(self.t, self.t[i] / 2))
            if j < i and self.H[j] > 0 and self.H[i] > 0:
                out[i] = math.log(self.H[j] / self.H[i]) / (self.t[i] - self.t[j])
        return out

    def monotone_entropy(self, slack: float = 1e-14) -> bool:
        return bool(np.all(np.diff(self.H) <= slack * max(self.H[0], 1e-300)))

    def to_csv(self, path, cadence: int = 1):
        rr = self.running_rate()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "conserved", "H", "D", "fitted_rate_so_far"])
            for i in range(0, len(self.t), cadence):
                w.writerow([repr(float(self.t[i])), repr(float(self.conserved[i])), repr(float(self.H[i])),
                            repr(float(self.D[i])), repr(float(rr[i]))])


def run(ev: Evolver, g_in, T: float, dt: Optional[float] = None, cfl: float = 0.9,
        checkpoints: Sequence[float] = (), max_steps: int = 1_000_000) -> Trajectory:
    """Integrate to time T, recording observables at every step."""
    g_in = np.asarray(g_in, float)
    if np.any(g_in < 0):
        raise ValueError("initial data must be nonnegative")
    dt = cfl * ev.dt_max if dt is None else dt
    nsteps = max(1, int(math.ceil(T / dt - 1e-12)))
    if nsteps > max_steps:
        raise ValueError(f"{nsteps} explicit steps needed (dt <= {ev.dt_max:.3g}); coarsen the grid near zero")
    dt = T / nsteps
    st = ev.observe(0.0, g_in)
    rec = np.empty((nsteps + 1, 5))
    rec[0] = st.t, st.conserved, st.mass, st.H, st.D
    cps = sorted(checkpoints)
    saved = {}
    ci = 0
    min_g = float(g_in.min())
    for k in range(1, nsteps + 1):
        st = ev.step(st, dt)
        row = (st.t, st.conserved, st.mass, st.H, st.D)
        if not all(math.isfinite(v) and abs(v) < OVERFLOW_GUARD for v in row):
            raise FloatingPointError(f"blow-up at t={st.t:.4g}")
        rec[k] = row
        min_g = min(min_g, float(st.g.min()))
        while ci < len(cps) and st.t >= cps[ci] - 1e-12:
            saved[cps[ci]] = st.g.copy()
            ci += 1
    return Trajectory(rec[:, 0], rec[:, 1], rec[:, 2], rec[:, 3], rec[:, 4], dt, min_g, saved)
