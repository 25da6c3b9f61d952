"""Grids, grid functions and the scalar quantities Lambda, zeta, xi."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficients import CoefficientSet


@dataclass(frozen=True)
class Mesh:
    """Geometric grid x_1 < ... < x_N = L with trapezoid weights in x."""

    nodes: np.ndarray
    L: float
    x1: float
    ratio: float

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        """Spacing in log x."""
        return math.log(self.ratio)

    @property
    def weights(self) -> np.ndarray:
        x = self.nodes
        w = np.empty_like(x)
        w[1:-1] = (x[2:] - x[:-2]) / 2
        w[0] = (x[1] - x[0]) / 2
        w[-1] = (x[-1] - x[-2]) / 2
        return w

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f))

    def window(self, a: float, b: float) -> np.ndarray:
        """Boolean mask of nodes in [a, b] (with a relative slack for rounding)."""
        x = self.nodes
        return (x >= a * (1 - 1e-12)) & (x <= b * (1 + 1e-12))


def build_mesh(L: float, N: int, x1: float, min_nodes: int = 16) -> Mesh:
    if x1 <= 0:
        raise ValueError("x1 must be positive")
    if not x1 < L:
        raise ValueError("need x1 < L")
    if N < max(min_nodes, 2):
        raise ValueError(f"N={N} too small (need N >= {max(min_nodes, 2)})")
    r = (L / x1) ** (1.0 / (N - 1))
    x = x1 * r ** np.arange(N, dtype=float)
    x[-1] = L
    return Mesh(x, float(L), float(x1), float(r))


@dataclass
class GridFunction:
    """Values on mesh nodes.

    With ``log_prefactor`` set, ``values`` holds f(x) * exp(log_prefactor) so
    that tails of e^{-Lambda}-type functions stay representable.
    """

    mesh: Mesh
    values: np.ndarray
    log_prefactor: Optional[np.ndarray] = None
    name: str = "f"

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.mesh.N,):
            raise ValueError("value count must equal node count")

    @property
    def prefactored(self) -> bool:
        return self.log_prefactor is not None

    def f(self) -> np.ndarray:
        if self.log_prefactor is None:
            return self.values.copy()
        return self.values * np.exp(-self.log_prefactor)

    def log_f(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(np.abs(self.values))
        return lv if self.log_prefactor is None else lv - self.log_prefactor

    def rows(self):
        fx, lf = self.f(), self.log_f()
        for i, x in enumerate(self.mesh.nodes):
            yield [repr(float(x)), repr(float(fx[i])), repr(float(lf[i])), str(self.prefactored)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value", "log_value", "prefactored"])
            w.writerows(self.rows())


# --------------------------------------------------------------------------
# Lambda = lam * int_1^x dy / tau + int_1^x B / tau


def _ipow(x, k):
    """int_1^x y^k dy."""
    if abs(k + 1) < 1e-14:
        return np.log(x)
    return np.expm1((k + 1) * np.log(x)) / (k + 1)


class RatioIntegrals:
    """Antiderivatives I_tau(x) = int_1^x 1/tau_eta and I_B(x) = int_1^x B/tau_eta.

    Closed forms for pure powers without a floor; otherwise composite Gauss
    panels in log x with an exact partial panel at the query point.
    tau_eta(x) = eta for x < eta and tau(x) otherwise.
    """

    def __init__(self, c: CoefficientSet, eta: float = 0.0, x_lo: float = 1e-12, x_hi: float = 1e6,
                 panel: float = 0.05, order: int = 10):
        self.c, self.eta = c, float(eta)
        self.closed = c.growth.is_pure_power and c.total_rate.is_pure_power and self.eta <= 0
        self.x_lo = min(x_lo, 1.0)
        self.x_hi = max(x_hi, 1.0)
        if self.closed:
            return
        t_lo, t_hi = math.log(self.x_lo) - 1e-9, math.log(self.x_hi) + 1e-9
        breaks = [t_lo, 0.0, t_hi]
        if self.eta > 0 and t_lo < math.log(self.eta) < t_hi:
            breaks.append(math.log(self.eta))
        breaks = sorted(set(breaks))
        edges = [breaks[0]]
        for a, b in zip(breaks[:-1], breaks[1:]):
            n = max(1, int(math.ceil((b - a) / panel)))
            edges.extend(np.linspace(a, b, n + 1)[1:])
        self.edges = np.array(edges)
        g, w = np.polynomial.legendre.leggauss(order)
        self._g, self._w = (g + 1) / 2, w / 2
        a, b = self.edges[:-1], self.edges[1:]
        pt = a[:, None] + (b - a)[:, None] * self._g[None, :]
        wt = (b - a)[:, None] * self._w[None, :]
        cum_t = np.concatenate([[0.0], np.cumsum((self._f_tau(pt) * wt).sum(1))])
        cum_b = np.concatenate([[0.0], np.cumsum((self._f_B(pt) * wt).sum(1))])
        j1 = int(np.argmin(np.abs(self.edges)))
        self.cum_t, self.cum_b = cum_t - cum_t[j1], cum_b - cum_b[j1]

    def tau_eta(self, x):
        x = np.asarray(x, float)
        t = self.c.tau(x)
        if self.eta > 0:
            t = np.where(x < self.eta, self.eta, t)
        return t

    # integrands in the log variable t = ln y
    def _f_tau(self, t):
        y = np.exp(t)
        return y / self.tau_eta(y)

    def _f_B(self, t):
        y = np.exp(t)
        return y * self.c.B(y) / self.tau_eta(y)

    def _panel(self, x, cum, fn):
        t = np.log(np.asarray(x, float))
        if np.any(t < self.edges[0]) or np.any(t > self.edges[-1]):
            raise ValueError("query outside the prepared range of RatioIntegrals")
        j = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.edges) - 2)
        a = self.edges[j]
        d = t - a
        pts = a[..., None] + d[..., None] * self._g
        part = (fn(pts) * self._w).sum(-1) * d
        return cum[j] + part

    def I_tau(self, x):
        if self.closed:
            g = self.c.growth
            return _ipow(np.asarray(x, float), -g.exponent) / g.amplitude
        return self._panel(x, self.cum_t, self._f_tau)

    def I_B(self, x):
        if self.closed:
            g, b = self.c.growth, self.c.total_rate
            return b.amplitude / g.amplitude * _ipow(np.asarray(x, float), b.exponent - g.exponent)
        return self._panel(x, self.cum_b, self._f_B)

    def Lambda(self, x, lam: float):
        return lam * self.I_tau(x) + self.I_B(x)


def Lambda_diverges_at_zero(c: CoefficientSet, lam: float, eta: float = 0.0) -> bool:
    """True when Lambda(x) -> -infinity as x -> 0 (legal; only flagged)."""
    if eta > 0:
        return False
    e = c.exponents
    return bool((lam > 0 and e["alpha0"] >= 1) or e["gamma0"] - e["alpha0"] <= -1)


@dataclass
class LambdaGrid(GridFunction):
    diverges_at_zero: bool = False
    underflow_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))


def compute_Lambda(c: CoefficientSet, lam: float, mesh: Mesh, eta: float = 0.0,
                   integrals: Optional[RatioIntegrals] = None) -> LambdaGrid:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    ri = integrals or RatioIntegrals(c, eta, x_lo=mesh.x1, x_hi=mesh.L)
    vals = ri.Lambda(mesh.nodes, lam)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite Lambda at interior nodes")
    return LambdaGrid(mesh, vals, None, "Lambda", Lambda_diverges_at_zero(c, lam, eta),
                      vals < -700.0)


# --------------------------------------------------------------------------
# tail scalars


@dataclass(frozen=True)
class AsymptoticScalars:
    zeta: float
    xi: Optional[float]
    gamma_plus: float
    case: str

    def to_dict(self):
        return dict(zeta=self.zeta, xi=self.xi, gamma_plus=self.gamma_plus, case=self.case)


def compute_scalars(c: CoefficientSet, lam: Optional[float] = None) -> AsymptoticScalars:
    e = c.exponents
    g, a, Binf, tinf = e["gamma"], e["alpha"], e["B_inf"], e["tau_inf"]
    nu, p1 = e["nu"], e["p1"]
    if g <= 0 and lam is None:
        raise ValueError("lambda is needed for zeta when gamma <= 0")
    if g > 0:
        zeta = Binf / tinf
    elif g == 0:
        zeta = (lam + Binf) / tinf
    else:
        zeta = lam / tinf
    if zeta <= 0:
        raise ValueError("zeta must be positive (lambda > 0 needed when gamma < 0)")
    zeta, gp = float(zeta), float(max(g, 0.0))
    if not c.fragments.has_density or p1 == 0:
        return AsymptoticScalars(zeta, 0.0, gp, "p1=0 (no fragment density near z=1): xi=0")
    if g >= 0 and nu == 0:
        case = "gamma>0, nu=0" if g > 0 else "gamma=0, nu=0"
        return AsymptoticScalars(zeta, float(p1 * Binf / (tinf * zeta)), gp, case)
    if g >= 0 and nu > 0:
        return AsymptoticScalars(zeta, 0.0, gp, "gamma>=0, nu>0")
    if g < 0:
        thr = -1 + (g + 1 - a) / (gp + 1 - a)
        if nu > thr:
            return AsymptoticScalars(zeta, 0.0, gp, f"gamma<0, nu>{thr:.6g}")
        return AsymptoticScalars(zeta, None, gp, f"undefined: gamma<0 with nu<={thr:.6g}")
    return AsymptoticScalars(zeta, None, gp, "undefined: gamma>=0 with -1<nu<0")
