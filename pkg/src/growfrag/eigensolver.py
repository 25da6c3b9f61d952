"""Truncated primal/dual principal eigenproblem.

Discretization
--------------
Cells are [x_k, x_{k+1}] between consecutive mesh nodes.  Inside cell k the
density is represented by the exponentially fitted shape

    s_k(y) = tau(x_k)/tau(y) * exp(-(Lambda(y) - Lambda(x_k))),

the exact solution of (tau G)' + (lam + B) G = 0 entering at x_k.  The cell
state G_k is the density at x_k of that shape, so the cell mass is w_k G_k
with w_k = int s_k, the fragmentation loss is beta_k G_k with
beta_k = int B s_k, and the outflow at x_{k+1} is tau_k exp(-dLambda_k) G_k.

Fragments born inside a cell are split between its two nodes so that the
probability of leaving the cell is exact under the same shape; for cells
with small dLambda the split reduces to the linear (count- and
mass-conserving) pivot rule.  Fragments born below x_1 are lumped into the
first cell with their survival probability up to x_1.

This gives a mass-form matrix M and the generalized problem
M G = lam W G with W = diag(w).  The dual is the adjoint in the W inner
product, M^T phi = lam W phi, so the duality relation is exact on the grid.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .coefficients import CoefficientSet, moment
from .meshops import GridFunction, Mesh, RatioIntegrals, build_mesh

DUAL_BOUNDARY = ("zero", "delta", "linear")
STEEP = 64.0  # Lambda increment per cell beyond which the cell shape is cut off


class AssemblyError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncationConfig:
    L: float
    eta: float = 0.0
    eps: float = 0.0
    dual_boundary: str = "zero"
    delta: float = 1e-3
    tol: float = 1e-10
    maxit: int = 500
    quad_order: int = 12
    parent_order: int = 6
    lam_guess: Optional[float] = None

    def __post_init__(self):
        if self.L <= 0 or self.eta < 0 or self.eps < 0:
            raise ValueError("need L > 0, eta >= 0, eps >= 0")
        if self.dual_boundary not in DUAL_BOUNDARY:
            raise ValueError(f"dual_boundary must be one of {DUAL_BOUNDARY}")
        if self.dual_boundary != "zero" and self.delta <= 0:
            raise ValueError("delta must be positive for this boundary choice")

    @property
    def boundary_value(self) -> float:
        return {"zero": 0.0, "delta": self.delta, "linear": self.delta * self.L}[self.dual_boundary]


@dataclass
class Discretization:
    """Assembled operators for one (coefficients, mesh, lam_bar)."""

    mesh: Mesh
    lam_bar: float
    Lam: np.ndarray        # Lambda at all mesh nodes (with lam_bar)
    what: np.ndarray       # cell masses per unit state
    beta: np.ndarray       # fragmentation loss per unit state
    out: np.ndarray        # outflow at the right cell edge per unit state
    tau: np.ndarray        # tau_eta at the nodes
    kappa: np.ndarray      # fragment gain, kappa[i, j]: into cell i from parent cell j
    kup: np.ndarray        # part of kappa crossing node i (used for pointwise values)
    M: np.ndarray          # mass-form operator
    eps: float = 0.0
    up_own: Optional[np.ndarray] = None   # own-cell share into cell k+1, times e^{dLam_k}

    @property
    def n(self) -> int:
        return len(self.what)

    @property
    def cell_Lam(self) -> np.ndarray:
        return self.Lam[:-1]

    @property
    def A(self) -> np.ndarray:
        """Primal operator W^{-1} M."""
        return self.M / self.what[:, None]

    @property
    def A_dual(self) -> np.ndarray:
        """Adjoint of A in the W inner product, W^{-1} M^T."""
        return self.M.T / self.what[:, None]

    def inner(self, u, v) -> float:
        return float(np.dot(self.what * u, v))

    def subdiag_scaled(self, which: str = "M") -> np.ndarray:
        """Subdiagonal entries (k+1, k) times e^{dLam_k}, free of underflow."""
        up = np.zeros(self.n - 1) if self.up_own is None else self.up_own
        if which == "kappa":
            return up
        return self.tau[:-2] + up

    def rescaled(self, Lrow, Lcol, which: str = "M") -> np.ndarray:
        """X[i, j] e^{Lrow_i - Lcol_j} for X = M or kappa, built without overflow."""
        X = self.M if which == "M" else self.kappa
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            R = X * np.exp(np.clip(Lrow[:, None] - Lcol[None, :], -745, 700))
            k = np.arange(self.n - 1)
            dL = np.diff(self.Lam)[:-1]
            R[k + 1, k] = self.subdiag_scaled(which) * np.exp(np.minimum(-dL + Lrow[k + 1] - Lcol[k], 700))
        return np.where(np.isfinite(R), R, 0.0)


def _triu_toeplitz(c: np.ndarray) -> np.ndarray:
    """T[k, j] = c[j - k] for j >= k, else 0."""
    n = len(c)
    T = linalg.toeplitz(np.r_[c[0], np.zeros(n - 1)], c)
    return T


def _survival_split(rho, D):
    """Share of a fragment at relative position rho that leaves the cell."""
    D = np.maximum(D, 1e-300)
    small = D < 1e-8
    with np.errstate(over="ignore", invalid="ignore"):
        g = (np.exp(-D * (1 - rho)) - np.exp(-D)) / -np.expm1(-D)
    return np.where(small, rho, g)


def assemble_operators(c: CoefficientSet, cfg: TruncationConfig, mesh: Mesh, lam_bar: float = 1.0,
                       integrals: Optional[RatioIntegrals] = None) -> Discretization:
    if abs(mesh.L - cfg.L) > 1e-12 * cfg.L:
        raise ValueError("mesh and truncation disagree on L")
    x = mesh.nodes
    n = mesh.N - 1
    r, h, x1 = mesh.ratio, mesh.h, mesh.x1
    p = c.fragments
    ri = integrals or RatioIntegrals(c, cfg.eta, x_lo=x1 * 1e-10, x_hi=mesh.L)
    tau_eta = ri.tau_eta
    Lam_nodes = ri.Lambda(x, lam_bar)
    Lam = Lam_nodes[:-1]
    dLam = np.diff(Lam_nodes)
    tau = tau_eta(x)
    tau_c = tau[:-1]
    xc = x[:-1]

    def shape(Y):
        return tau_c[:, None] / tau_eta(Y) * np.exp(-(ri.Lambda(Y, lam_bar) - Lam[:, None]))

    # cell integrals: composite Gauss in log x, refined where the shape decays
    # fast; beyond e^{-64} of decay the remaining part of the cell is dropped
    span = np.minimum(1.0, STEEP / np.maximum(dLam, 1e-300))
    panels = int(np.clip(np.ceil((dLam * span).max() / 2), 1, 32))
    t, gw = np.polynomial.legendre.leggauss(cfg.quad_order)
    t, gw = (t + 1) / 2, gw / 2
    t = ((np.arange(panels)[:, None] + t[None, :]) / panels).ravel()
    gw = np.tile(gw / panels, panels)
    Y = xc[:, None] * np.exp(h * span[:, None] * t[None, :])
    S = shape(Y)
    J = gw[None, :] * (h * span)[:, None] * Y
    what = (S * J).sum(1)
    beta = (c.B(Y) * S * J).sum(1)

    # parent points; weights renormalized so each cell's total loss is exact
    qf = cfg.parent_order
    tf, gf = np.polynomial.legendre.leggauss(qf)
    tf, gf = (tf + 1) / 2, gf / 2
    Yf = xc[:, None] * np.exp(h * tf[None, :])
    with np.errstate(under="ignore"):
        W = gf[None, :] * h * Yf * c.B(Yf) * shape(Yf)
    Wsum = W.sum(1)
    # in very steep cells the parents sit at the left edge; use the first point
    steep = (dLam > STEEP) | ~(Wsum > 1e-250 * np.maximum(beta, 1e-300))
    W[steep] = 0.0
    W[steep, 0] = 1.0
    Wsum = W.sum(1)
    W *= np.where(Wsum > 0, beta / np.where(Wsum > 0, Wsum, 1.0), 0.0)[:, None]

    kappa = np.zeros((n, n))
    kup = np.zeros((n, n))
    small = dLam < 1e-3
    Ds = np.where(small, 1.0, dLam)
    with np.errstate(over="ignore"):
        J0 = np.where(small, 0.5 - dLam / 12, 1 / Ds - 1 / np.expm1(Ds))
        J1 = np.where(small, 1 / 12 - dLam ** 2 / 720,
                      1 / (Ds * -np.expm1(-Ds)) - 1 / Ds ** 2 - 1 / (2 * Ds))
    Lam_x1 = ri.Lambda(x1, lam_bar)
    s24, w24 = np.polynomial.legendre.leggauss(24)
    s24, w24 = (s24 + 1) / 2, w24 / 2
    rows = np.arange(n)
    x_floor = x1 * 1e-10

    for m in range(qf):
        y = Yf[:, m]
        if p.has_density:
            d = np.arange(n, dtype=float)
            a = r ** (-d) * math.exp(-h * tf[m])
            lo, hi = np.minimum(a, 1), np.minimum(r * a, 1)
            C0 = p.density_cumulative(0, hi) - p.density_cumulative(0, lo)
            C1 = p.density_cumulative(1, hi) - p.density_cumulative(1, lo)
            # linear-in-position fit of the fragment density inside each cell
            mr = (C1 / a - C0) / (r - 1)
            c1 = 12 * (mr - C0 / 2)
            C0[0] = c1[0] = 0.0   # own cell handled below
            T0 = _triu_toeplitz(C0)
            U = J0[:, None] * T0 + J1[:, None] * _triu_toeplitz(c1)
            np.clip(U, 0, T0, out=U)
            kappa += W[:, m][None, :] * (T0 - U)
            kappa[1:] += W[:, m][None, :] * U[:-1]
            kup[1:] += W[:, m][None, :] * U[:-1]
            # fragments below x1 reach x1 with their survival probability
            a1 = np.minimum(x1 / y, 1.0)
            zz = a1[:, None] * s24[None, :] ** (1 / p.mu)
            dzz = a1[:, None] / p.mu * s24[None, :] ** (1 / p.mu - 1)
            uu = np.maximum(zz * y[:, None], x_floor)
            surv = np.exp(-(Lam_x1 - ri.Lambda(uu, lam_bar)))
            lump = W[:, m] * (w24[None, :] * p.density(zz) * dzz * surv).sum(1)
            kappa[0] += lump
            kup[0] += lump
        for za, wa in p.atoms:
            u = za * y
            below = u < x1
            surv = np.exp(-(Lam_x1 - ri.Lambda(np.clip(u, x_floor, x1), lam_bar)))
            lump = np.where(below, W[:, m] * wa * surv, 0.0)
            kappa[0] += lump
            kup[0] += lump
            k = np.clip(np.floor(np.log(np.maximum(u, x1) / x1) / h).astype(int), 0, n - 1)
            k = np.where((k < n - 1) & (u >= x[np.minimum(k + 1, n)]), k + 1, k)
            rho = np.clip((u - xc[k]) / (x[k + 1] - xc[k]), 0, 1)
            g = np.where(k == n - 1, 0.0, _survival_split(rho, dLam[k]))
            keep = ~below & (k != rows)
            cols = rows[keep]
            np.add.at(kappa, (k[keep], cols), (W[:, m] * wa * (1 - g))[keep])
            k1 = np.minimum(k + 1, n - 1)
            np.add.at(kappa, (k1[keep], cols), (W[:, m] * wa * g)[keep])
            np.add.at(kup, (k1[keep], cols), (W[:, m] * wa * g)[keep])

    stay, up_s = _own_cell(c, ri, lam_bar, xc, x[1:], span, cfg.quad_order)
    up_s[n - 1] = 0.0
    with np.errstate(under="ignore"):
        up = up_s * np.exp(-dLam)
    kappa[rows, rows] += stay - up
    kappa[rows[1:], rows[:-1]] += up[:-1]

    if np.any(kappa < -1e-13 * max(1.0, np.abs(kappa).max())):
        raise AssemblyError("negative kernel quadrature weight")
    with np.errstate(under="ignore"):
        out = tau_c * np.exp(-dLam)
    M = kappa.copy()
    M[rows, rows] += -out - beta
    M[rows[1:], rows[:-1]] += out[:-1]
    if cfg.eps > 0:
        M[0, :] += cfg.eps * what
    return Discretization(mesh, float(lam_bar), Lam_nodes, what, beta, out, tau, kappa, kup, M,
                          cfg.eps, up_s[:-1])


def _own_cell(c, ri, lam_bar, xl, xr, span, quad_order=12, chunk=64):
    """Fragments landing in the parent's own cell, against the resolved parent law.

    Returns the amount landing in the cell and the part that then crosses its
    right edge, the latter scaled by e^{dLam}.  In the scaled form the parent
    decay and the fragment survival combine into differences of Lambda that
    are never positive, so parents across the whole cell are integrated,
    including the far part of steep cells that the cell masses may drop.
    """
    p = c.fragments
    n = len(xl)
    h = math.log(xr[0] / xl[0])
    t, gw = np.polynomial.legendre.leggauss(quad_order)
    t, gw = (t + 1) / 2, gw / 2
    # graded points on [0, span] followed by plain panels on [span, 1]
    panels = int(np.clip(np.ceil(STEEP / 2), 1, 32))
    tg = ((np.arange(panels)[:, None] + t[None, :]) / panels).ravel()
    wg = np.tile(gw / panels, panels)
    tt = np.r_[tg, (np.arange(2)[:, None] + t[None, :]).ravel() / 2]
    ww = np.r_[wg, np.tile(gw / 2, 2)]
    first = np.arange(len(tt)) < len(tg)
    sq, sqw = np.polynomial.legendre.leggauss(16)
    sq, sqw = (sq + 1) / 2, sqw / 2
    e1 = 1 / (p.nu + 1) if p.has_density else 1.0
    sg = sq ** e1
    dsg = sqw * e1 * sq ** (e1 - 1)
    Lk, Lr = ri.Lambda(xl, lam_bar), ri.Lambda(xr, lam_bar)
    dL = Lr - Lk
    norm = np.where(dL < 1e-8, 0.0, -np.expm1(-np.maximum(dL, 1e-300)))
    stay, up_s = np.zeros(n), np.zeros(n)
    for lo in range(0, n, chunk):
        sl = slice(lo, lo + chunk)
        sp = span[sl, None]
        full = sp >= 1.0
        tpos = np.where(first, tt * sp, sp + tt * (1 - sp))
        wpos = np.where(first, ww * sp, np.where(full, 0.0, ww * (1 - sp)))
        y = xl[sl, None] * np.exp(h * tpos)
        Jw = wpos * h * y
        ty = ri.tau_eta(y)
        with np.errstate(under="ignore"):
            Ey = np.exp(-(ri.Lambda(y, lam_bar) - Lk[sl, None]))
        wB = c.B(y) * ri.tau_eta(xl[sl, None]) / ty * Jw
        x0 = xl[sl, None]
        nm = norm[sl, None]
        small = nm <= 0
        nms = np.where(small, 1.0, nm)
        if p.has_density:
            am = np.minimum(x0 / y, 1.0)
            C0 = p.density_cumulative(0, 1.0) - p.density_cumulative(0, am)
            # inner variable: y - u = -ln(1 - s (1 - e^{-lmax})) / a, s graded for p near 1
            a = (lam_bar + c.B(y)) / ty
            a = np.maximum(a, 1e-300)
            lmax = a * (y - x0)
            f = -np.expm1(-lmax)
            s = sg * f[..., None]
            du = np.log1p(-s) / -a[..., None]
            u = y[..., None] - du
            with np.errstate(under="ignore", over="ignore"):
                dev = a[..., None] * du - (ri.Lambda(y, lam_bar)[..., None] - ri.Lambda(u, lam_bar))
                inner = (f / a)[..., None] * np.exp(np.minimum(dev, 700)) * p.density(u / y[..., None]) / y[..., None]
            I1 = (dsg * inner).sum(-1)
            with np.errstate(under="ignore"):
                Us = np.where(small, 0.0, np.maximum(I1 - C0 * Ey, 0.0) / nms)
            stay[sl] += (wB * Ey * C0).sum(1)
            up_s[sl] += (wB * Us).sum(1)
        for za, wa in p.atoms:
            u = za * y
            own = u >= x0
            with np.errstate(under="ignore"):
                Eu = np.exp(-np.maximum(ri.Lambda(y, lam_bar) - ri.Lambda(np.maximum(u, x0), lam_bar), 0.0))
                Us = np.where(own & ~small, np.maximum(Eu - Ey, 0.0) / nms, 0.0)
            stay[sl] += (wB * Ey * wa * own).sum(1)
            up_s[sl] += (wB * wa * Us).sum(1)
    return stay, up_s


# --------------------------------------------------------------------------
# Perron pair by shifted inverse iteration


def _shift(ops: Discretization) -> float:
    """Upper bound of lam: largest column sum of M per unit mass, plus one."""
    return float(np.max(np.maximum(ops.M.sum(0), 0) / ops.what)) + 1.0


def _scaled(ops: Discretization, which: str) -> np.ndarray:
    """Diagonally rescaled operator so tails stay representable.

    primal: v = G e^{Lambda+};  dual: theta = phi e^{-Lambda-}.
    """
    Lc = ops.cell_Lam
    if which == "primal":
        Lp = np.maximum(Lc, 0)
        return ops.rescaled(Lp, Lp)
    Lm = np.minimum(Lc, 0)
    return ops.rescaled(Lm, Lm).T


def perron(Ms: np.ndarray, what: np.ndarray, tol=1e-10, maxit=500, sigma=None):
    """Principal eigenpair of Ms v = lam W v (Ms Metzler, W > 0 diagonal).

    The resolvent (sigma W - Ms)^{-1} is positive for sigma above the
    spectral bound.  The Collatz-Wielandt bound from each iterate is used to
    move the shift down towards lam while staying above it.
    """
    n = len(what)
    if sigma is None:
        # valid bound only when Ms is unscaled or primal-scaled
        sigma = float(np.max(np.maximum(Ms.sum(0), 0) / what)) + 1.0
    v = np.ones(n)
    lam, its = np.nan, 0
    for stage in range(3):
        lu = linalg.lu_factor(sigma * np.diag(what) - Ms, check_finite=False)
        lam_old = np.inf
        last = stage == 2
        for it in range(maxit if last else min(maxit, 60)):
            its += 1
            y = linalg.lu_solve(lu, what * v, check_finite=False)
            if not np.all(np.isfinite(y)):
                raise ConvergenceError("non-finite iterate in inverse iteration")
            ymax = y.max()
            if ymax <= 0:
                raise ConvergenceError("iterate lost positivity")
            with np.errstate(divide="ignore", invalid="ignore"):
                rat = np.where(v > 0, y / v, np.inf)
            lam = sigma - (v @ (what * v)) / (y @ (what * v))
            lam_up = sigma - 1 / np.nanmax(rat[np.isfinite(rat)]) if np.any(np.isfinite(rat)) else lam
            v = y / ymax
            if abs(lam - lam_old) < tol * max(1.0, abs(lam)) and it > 2:
                break
            lam_old = lam
        else:
            if last:
                raise ConvergenceError(f"inverse iteration did not converge in {maxit} steps")
        if stage < 2:
            gap = max(abs(lam_up), 1e-2) * (0.05 if stage == 0 else 1e-3)
            sigma = max(lam_up, lam) + gap
    return float(lam), v, its


def _lambda_fixed_point(c, cfg, mesh, ri, lam0):
    """Solve lam = lam(lam_bar): the fitted shapes use the eigenvalue itself."""
    lam_bar = lam0
    hist = []
    for _ in range(12):
        ops = assemble_operators(c, cfg, mesh, lam_bar, ri)
        lam, v, _ = perron(_scaled(ops, "primal"), ops.what, cfg.tol, cfg.maxit, _shift(ops))
        hist.append((lam_bar, lam))
        if abs(lam - lam_bar) < 1e-11 * max(1.0, abs(lam)):
            return ops, lam, v
        if len(hist) >= 2:
            (b0, l0), (b1, l1) = hist[-2], hist[-1]
            f0, f1 = l0 - b0, l1 - b1
            lam_bar = l1 if f1 == f0 else b1 - f1 * (b1 - b0) / (f1 - f0)
        else:
            lam_bar = lam
        lam_bar = max(lam_bar, 0.0)
    ops = assemble_operators(c, cfg, mesh, lam_bar, ri)
    lam, v, _ = perron(_scaled(ops, "primal"), ops.what, cfg.tol, cfg.maxit, _shift(ops))
    return ops, lam, v


# --------------------------------------------------------------------------


@dataclass
class EigenTriple:
    lam: float
    G: GridFunction            # pointwise profile at nodes, prefactored by Lambda+
    phi: GridFunction          # pointwise dual at nodes, prefactored by -Lambda-
    ops: Discretization
    coefficients: CoefficientSet
    cfg: TruncationConfig
    v: np.ndarray              # primal cell state times e^{Lambda+}
    theta: np.ndarray          # dual cell state times e^{-Lambda-}
    lam_primal: float = math.nan
    lam_dual: float = math.nan
    residuals: dict = field(default_factory=dict)
    normalizations: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def mesh(self) -> Mesh:
        return self.ops.mesh

    @property
    def L(self) -> float:
        return self.mesh.L

    # unscaled cell states (may underflow in the far tail)
    @property
    def G_state(self) -> np.ndarray:
        return self.v * np.exp(-np.maximum(self.ops.cell_Lam, 0))

    @property
    def phi_state(self) -> np.ndarray:
        return self.theta * np.exp(np.minimum(self.ops.cell_Lam, 0))

    @property
    def rho(self) -> np.ndarray:
        """Cell weights w_k G_k phi_k of the conserved pairing."""
        Lc = self.ops.cell_Lam
        return self.ops.what * self.v * self.theta * np.exp(-np.maximum(Lc, 0) + np.minimum(Lc, 0))

    def summary(self) -> dict:
        return dict(lambda_L=self.lam, lambda_primal=self.lam_primal, lambda_dual=self.lam_dual,
                    L=self.L, N=self.mesh.N, x1=self.mesh.x1, dual_boundary=self.cfg.dual_boundary,
                    residuals=self.residuals, normalizations=self.normalizations,
                    warnings=list(self.warnings))

    def to_csv(self, path):
        G, phi = self.G.f(), self.phi.f()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "G", "phi", "G_exp_prefactored"])
            for i, x in enumerate(self.mesh.nodes):
                w.writerow([repr(float(x)), repr(float(G[i])), repr(float(phi[i])),
                            repr(float(self.G.values[i]))])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.summary()), fh, indent=2, sort_keys=True)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def pointwise_G(ops: Discretization, v: np.ndarray) -> np.ndarray:
    """G at every node from the flux crossing it, in the Lambda+ scaling."""
    Lp = np.maximum(ops.Lam, 0)
    Lc = Lp[:-1]
    n = ops.n
    flux = np.zeros(n + 1)
    E = np.exp(np.clip(Lp[:n, None] - Lc[None, :], -745, 700))
    flux[:n] = (ops.kup * E) @ v
    up = np.zeros(n) if ops.up_own is None else np.r_[ops.up_own, 0.0]
    dL = np.diff(ops.Lam)
    flux[1:] += (ops.tau[:-1] + up) * np.exp(np.minimum(-dL + Lp[1:] - Lc, 700)) * v
    if ops.eps > 0:
        flux[0] += ops.eps * np.dot(ops.what, v * np.exp(-Lc)) * math.exp(Lp[0])
    return flux / ops.tau


def solve_truncated(c: CoefficientSet, cfg: TruncationConfig, mesh: Mesh,
                    check_L0: bool = True) -> EigenTriple:
    """Perron eigentriple (lam_L, G_L, phi_L) of the truncated problem."""
    notes = []
    if check_L0:
        est = estimate_L0(c)
        if est.L0 is not None and cfg.L < est.L0:
            notes.append(f"L={cfg.L} below the positivity bound L0={est.L0:.4g}")
    ri = RatioIntegrals(c, cfg.eta, x_lo=mesh.x1 * 1e-10, x_hi=mesh.L)
    lam0 = cfg.lam_guess
    if lam0 is None:
        # cheap coarse solve for the starting value of the fitted shapes
        if mesh.N > 257:
            coarse = build_mesh(mesh.L, 257, mesh.x1)
            ops_c = assemble_operators(c, cfg, coarse, 1.0, ri)
            lam0, _, _ = perron(_scaled(ops_c, "primal"), ops_c.what, 1e-8, cfg.maxit, _shift(ops_c))
            lam0 = max(lam0, 0.0)
        else:
            lam0 = 1.0
    ops, lam, v = _lambda_fixed_point(c, cfg, mesh, ri, lam0)
    Ms_d = _scaled(ops, "dual")
    lam_d, theta, _ = perron(Ms_d, ops.what, cfg.tol, cfg.maxit, _shift(ops))
    if np.any(v < 0) or np.any(theta < 0):
        raise ConvergenceError("eigenvector with a negative component; refine the mesh")

    Lc = ops.cell_Lam
    Lp, Lm = np.maximum(Lc, 0), np.minimum(Lc, 0)
    v = v / np.dot(ops.what, v * np.exp(-Lp))
    theta = theta / np.dot(ops.what, v * theta * np.exp(-Lp + Lm))

    lam_out = lam
    phiL = cfg.boundary_value
    if phiL > 0:
        lam_out, theta = _boundary_dual(ops, v, lam, phiL)

    Ms_p = _scaled(ops, "primal")
    res_p = np.abs(Ms_p @ v - lam * ops.what * v).max() / np.abs(ops.what * v).max()
    res_d = np.abs(Ms_d @ theta - lam_out * ops.what * theta)
    if phiL > 0:
        res_d[-1] = abs(res_d[-1] - phiL * ops.out[-1] * math.exp(-Lm[-1]))
    res_d = res_d.max() / np.abs(ops.what * theta).max()
    norm_G = np.dot(ops.what, v * np.exp(-Lp)) - 1
    norm_Gphi = np.dot(ops.what, v * theta * np.exp(-Lp + Lm)) - 1

    G_nodes = pointwise_G(ops, v)
    phi_nodes = np.r_[theta, phiL * math.exp(-min(ops.Lam[-1], 0.0))]
    Lnode = ops.Lam
    G = GridFunction(mesh, G_nodes, np.maximum(Lnode, 0), "G")
    phi = GridFunction(mesh, phi_nodes, -np.minimum(Lnode, 0), "phi")
    if lam <= 0:
        notes.append("lambda_L <= 0")
    return EigenTriple(lam_out, G, phi, ops, c, cfg, v, theta, lam, lam_d,
                       dict(primal=float(res_p), dual=float(res_d), eigenvalue_gap=float(abs(lam - lam_d))),
                       dict(int_G=float(norm_G), int_G_phi=float(norm_Gphi)), notes)


def _boundary_dual(ops: Discretization, v, lam0, phiL):
    """Dual with phi(L) = phiL > 0: the outflow at L earns phiL.

    Pairing with G gives lam_delta = lam0 + phiL * out_last * G_last (unit
    normalization); phi solves the bordered system
        (lam_delta W - M^T) phi + s W G = phiL out_last e_last,  <W G, phi> = 1.
    """
    n = ops.n
    Lc = ops.cell_Lam
    Lp, Lm = np.maximum(Lc, 0), np.minimum(Lc, 0)
    G_last = v[-1] * math.exp(-Lp[-1])
    lam_d = lam0 + phiL * ops.out[-1] * G_last
    # scaled unknown theta = phi e^{-Lambda-}; rows divided by e^{Lambda-}
    Ms_d = _scaled(ops, "dual")
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = lam_d * np.diag(ops.what) - Ms_d
    A[:n, n] = ops.what * v * np.exp(np.clip(-Lp - Lm, -745, 700))
    A[n, :n] = ops.what * v * np.exp(-Lp + Lm)
    rhs = np.zeros(n + 1)
    rhs[n - 1] = phiL * ops.out[-1] * math.exp(-Lm[-1])
    rhs[n] = 1.0
    sol = linalg.solve(A, rhs)
    return float(lam_d), sol[:n]


# --------------------------------------------------------------------------
# the constructive positivity bound


@dataclass(frozen=True)
class L0Estimate:
    L0: Optional[float]
    s: Optional[float]
    A: Optional[float]
    verdict: str


def estimate_L0(c: CoefficientSet) -> L0Estimate:
    """L0 = A / s with int_0^s p >= pi0 - 1 and x B / tau > 1/((pi0-1)|ln s|) on [A, inf)."""
    p = c.fragments
    if not p.has_density or p.atoms:
        return L0Estimate(None, None, None, "construction inapplicable (needs a bounded fragment density)")
    pi0 = moment(p, 0.0, check=False)
    target = pi0 - 1
    f = lambda s: float(p.density_cumulative(0, s)) - target
    if f(1.0) < 0:
        return L0Estimate(None, None, None, "construction inapplicable (pi0 - 1 exceeds the density mass)")
    s = optimize.brentq(f, 1e-15, 1.0, xtol=1e-15, rtol=1e-14)
    if s >= 1.0:
        return L0Estimate(None, s, None, "construction inapplicable (s = 1)")
    thr = 1.0 / (target * abs(math.log(s)))
    g = lambda x: float(x * c.B(x) / c.tau(x)) - thr
    e = c.exponents
    if e["gamma"] - e["alpha"] + 1 <= 0:
        raise AssemblyError("no finite A: x B / tau does not grow (gamma - alpha + 1 <= 0)")
    xs = np.geomspace(1e-8, 1e8, 1601)
    vals = np.array([g(v) for v in xs])
    if vals[-1] <= 0:
        raise AssemblyError("no finite A found up to x = 1e8")
    bad = np.nonzero(vals <= 0)[0]
    if len(bad) == 0:
        A = float(xs[0])
    else:
        i = bad[-1]
        A = optimize.brentq(g, xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14)
    return L0Estimate(A / s, float(s), float(A), "ok")


# --------------------------------------------------------------------------
# extrapolation in L


@dataclass
class Extrapolation:
    Ls: list
    lams: list
    lam_inf: float
    error_bar: float
    profile_diffs: list
    boundary_terms: list
    warnings: list
    triples: list = field(repr=False, default_factory=list)

    def to_dict(self):
        return dict(L=self.Ls, lambda_L=self.lams, lambda_inf=self.lam_inf, error_bar=self.error_bar,
                    profile_sup_diffs=self.profile_diffs, boundary_terms=self.boundary_terms,
                    warnings=self.warnings)


def extrapolate(c: CoefficientSet, cfg: TruncationConfig, Ls: Sequence[float], x1: float,
                N: Optional[Sequence[int]] = None, spacing: Optional[float] = None) -> Extrapolation:
    """Solve for increasing L and extrapolate lam_L.

    Meshes: explicit node counts ``N`` or a fixed log-spacing ``spacing``.
    The limit uses Aitken's delta-squared on the last three values, which
    covers both geometric truncation error and power-law mesh error; the
    error bar is the size of the correction.
    """
    Ls = list(Ls)
    if len(Ls) < 3 or any(b <= a for a, b in zip(Ls[:-1], Ls[1:])):
        raise ValueError("need at least 3 increasing truncation sizes")
    if N is None:
        spacing = spacing or 0.02
        N = [int(math.ceil(math.log(L / x1) / spacing)) + 1 for L in Ls]
    triples, lams, bterms = [], [], []
    for L, n in zip(Ls, N):
        sub = TruncationConfig(L, cfg.eta, cfg.eps, cfg.dual_boundary, cfg.delta, cfg.tol, cfg.maxit,
                               cfg.quad_order, cfg.parent_order, lams[-1] if lams else cfg.lam_guess)
        tr = solve_truncated(c, sub, build_mesh(L, n, x1))
        triples.append(tr)
        lams.append(tr.lam)
        GL = tr.G.f()[-1]
        bterms.append(float(tr.ops.tau[-1] * GL * max(sub.boundary_value, 0.0)))
    notes = []
    d = np.diff(lams)
    if np.any(np.sign(d) != np.sign(d[0])) and np.max(np.abs(d)) > 1e-10:
        notes.append("truncation artifacts: non-monotone lambda_L sequence")
    l1, l2, l3 = lams[-3:]
    den = (l3 - l2) - (l2 - l1)
    if abs(den) > 1e-300 and abs(l3 - l2) < abs(l2 - l1):
        lam_inf = l3 - (l3 - l2) ** 2 / den
    else:
        lam_inf = l3
    err = max(abs(lam_inf - l3), abs(l3 - l2) * 1e-3, 1e-12)
    # profile agreement on [x1, min L / 2]
    ref = triples[-1]
    xr = ref.mesh.nodes
    diffs = []
    for tr in triples[:-1]:
        xm = tr.mesh.nodes
        keep = xm <= Ls[0] / 2
        Gi = np.exp(np.interp(np.log(xm[keep]), np.log(xr), ref.G.log_f()))
        Ga = tr.G.f()[keep]
        diffs.append(float(np.max(np.abs(Ga - Gi)) / np.max(np.abs(Gi))))
    return Extrapolation(Ls, [float(v) for v in lams], float(lam_inf), float(err), diffs, bterms, notes, triples)
