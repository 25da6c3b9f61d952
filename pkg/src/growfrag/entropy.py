"""Quadratic relative entropy, its dissipation, and the discrete spectral gap.

All forms live on the cell states of the discretization with the conserved
pairing weights rho_k = w_k phi_k G_k (sum rho = 1):

    H  = sum_k rho_k (u_k - 1)^2
    D  = sum_{i != j} phi_i kappa_ij G_j (u_i - u_j)^2          fragmentation
    D2 = sum_{i < j} rho_i rho_j (u_i - u_j)^2

For the semi-discrete evolution dH/dt = -D_total, where D_total uses every
off-diagonal entry of the generator (fragmentation plus the upwind transport
between neighbouring cells); see ``dissipation_matrix``.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, linalg

from .coefficients import validate_hypotheses
from .eigensolver import EigenTriple, _jsonable

RHO_FLOOR = 1e-14


@dataclass
class RelativeDensity:
    """u = g / G on cell states, with the normalization residual |sum w phi g - 1|."""

    triple: EigenTriple
    u: np.ndarray
    normalization_residual: float

    @classmethod
    def from_u(cls, triple: EigenTriple, u) -> "RelativeDensity":
        u = np.asarray(u, float)
        if u.shape != triple.rho.shape or not np.all(np.isfinite(u)):
            raise ValueError("u must be finite with one value per cell")
        return cls(triple, u, abs(float(np.dot(triple.rho, u)) - 1.0))

    @classmethod
    def from_g(cls, triple: EigenTriple, g) -> "RelativeDensity":
        G = triple.G_state
        if np.any(G <= 0):
            raise ValueError("G underflows on some cells; pass u directly")
        return cls.from_u(triple, np.asarray(g, float) / G)

    def to_csv(self, path):
        x = self.triple.mesh.nodes[:-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "u"])
            for a, b in zip(x, self.u):
                w.writerow([repr(float(a)), repr(float(b))])


def normalize_u(triple: EigenTriple, u) -> np.ndarray:
    """Scale u so that sum rho u = 1 (i.e. int phi g = 1)."""
    u = np.asarray(u, float)
    return u / float(np.dot(triple.rho, u))


def random_normalized_u(triple: EigenTriple, rng: np.random.Generator) -> np.ndarray:
    """Positive random relative density with int phi g = 1."""
    n = len(triple.rho)
    # smooth-ish random profile: a few random log-modes plus noise
    s = np.linspace(0, 1, n)
    logu = sum(rng.normal() / (k + 1) * np.cos(math.pi * (k + 1) * s + rng.uniform(0, 2 * math.pi))
               for k in range(6))
    logu = logu + 0.3 * rng.normal(size=n)
    return normalize_u(triple, np.exp(logu))


def _coupling(triple: EigenTriple, which: str = "fragmentation") -> np.ndarray:
    """c_ij = phi_i K_ij G_j for i != j, computed in scaled variables."""
    ops = triple.ops
    if which not in ("fragmentation", "total"):
        raise ValueError("which is 'fragmentation' or 'total'")
    Lc = ops.cell_Lam
    Lm, Lp = np.minimum(Lc, 0), np.maximum(Lc, 0)
    K = ops.rescaled(Lm, Lp, "kappa" if which == "fragmentation" else "M")
    np.fill_diagonal(K, 0.0)
    c = triple.theta[:, None] * K * triple.v[None, :]
    return np.maximum(c, 0.0)


def dissipation_matrix(triple: EigenTriple, which: str = "fragmentation") -> np.ndarray:
    """Symmetric PSD matrix Q with D = u^T Q u; constants lie in its kernel."""
    c = _coupling(triple, which)
    S = c + c.T
    return np.diag(S.sum(1)) - S


def compute_H(triple: EigenTriple, u) -> float:
    return float(np.dot(triple.rho, (np.asarray(u, float) - 1) ** 2))


def compute_D(triple: EigenTriple, u, which: str = "fragmentation") -> float:
    u = np.asarray(u, float)
    c = _coupling(triple, which)
    d = u[:, None] - u[None, :]
    return float(np.sum(c * d * d))


def compute_D2(triple: EigenTriple, u, tol: float = 1e-8) -> tuple:
    """Pairwise form D2 and whether the identity D2 = H was asserted.

    Returns (D2, residual) with residual = |D2 - H| / H when both
    normalizations hold, None otherwise.
    """
    u = np.asarray(u, float)
    rho = triple.rho
    d = u[:, None] - u[None, :]
    D2 = float(np.sum(np.triu(np.outer(rho, rho) * d * d, 1)))
    norm_ok = abs(rho.sum() - 1) <= 1e-10 and abs(np.dot(rho, u) - 1) <= 1e-10
    if not norm_ok:
        return D2, None
    H = compute_H(triple, u)
    res = abs(D2 - H) / H if H > 0 else abs(D2)
    if res > tol:
        warnings.warn(f"D2 = H identity violated: relative residual {res:.3g}")
    return D2, float(res)


def compute_D_quadrature(triple: EigenTriple, ufun, nz: int = 48) -> float:
    """Independent evaluation of int int phi(x) G(y) b(y, x) (u(x) - u(y))^2.

    Uses the pointwise node profiles, trapezoid in y and Gauss in z = x / y
    for the density part, exact pairing (y, z_a y) for atoms.  Agrees with
    ``compute_D`` up to discretization error.
    """
    c = triple.coefficients
    p = c.fragments
    x = triple.mesh.nodes
    logG, logphi = triple.G.log_f(), triple.phi.log_f()
    lx = np.log(x)
    lphi = lambda s: np.interp(np.log(s), lx, logphi, left=logphi[0])
    ys = x[1:]
    inner = np.zeros_like(ys)
    if p.has_density:
        t, w = np.polynomial.legendre.leggauss(nz)
        z, w = (t + 1) / 2, w / 2
        X = z[None, :] * ys[:, None]
        inner += (w * p.density(z) * np.exp(lphi(X)) * (ufun(X) - ufun(ys)[:, None]) ** 2).sum(1)
    for za, wa in p.atoms:
        X = za * ys
        inner += wa * np.exp(lphi(X)) * (ufun(X) - ufun(ys)) ** 2
    f = np.exp(logG[1:]) * c.B(ys) * inner
    return float(integrate.trapezoid(f, ys))


# --------------------------------------------------------------------------
# spectral gap


@dataclass
class GapResult:
    gap: float
    minimizer: RelativeDensity
    unconstrained_min: float
    unconstrained_constant: bool
    random_min_ratio: float
    random_check_ok: bool
    excluded_cells: int
    which: str
    side_conditions: dict
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(dict(gap=self.gap, unconstrained_min=self.unconstrained_min,
                              unconstrained_constant=self.unconstrained_constant,
                              random_min_ratio=self.random_min_ratio, random_check_ok=self.random_check_ok,
                              excluded_cells=self.excluded_cells, dissipation=self.which,
                              side_conditions=self.side_conditions, warnings=self.warnings))


def side_conditions(triple: EigenTriple) -> dict:
    rep = validate_hypotheses(triple.coefficients)
    bounded_below = rep.verdicts["p_bounded_below"]
    side = rep.entropy_side_condition(triple.lam)
    gamma = triple.coefficients.exponents["gamma"]
    in_scope = bounded_below == "holds" and side == "holds" and gamma != 0 and rep.passes()
    return dict(p_bounded_below=bounded_below, exponent_condition=side, gamma_nonzero=gamma != 0,
                scope="inside entropy-inequality scope" if in_scope else "outside entropy-inequality scope")


def estimate_gap(triple: EigenTriple, which: str = "fragmentation", n_random: int = 1000,
                 seed: int = 0, rel_floor: float = RHO_FLOOR) -> GapResult:
    """min D/H over v = u - 1 with sum rho v = 0.

    Generalized symmetric eigenproblem Q v = mu diag(rho) v; the constant
    vector is the mu = 0 eigenvector and every other eigenvector is
    rho-orthogonal to it, so the second eigenvalue is the constrained
    minimum.  Cells with negligible rho are dropped.
    """
    rho = triple.rho
    keep = rho > rel_floor * rho.max()
    notes = []
    if not keep.all():
        notes.append(f"{int((~keep).sum())} cells with negligible phi*G weight excluded")
    c = _coupling(triple, which)[np.ix_(keep, keep)]
    S = c + c.T
    Q = np.diag(S.sum(1)) - S
    r = rho[keep]
    s = 1 / np.sqrt(r)
    Qs = s[:, None] * Q * s[None, :]
    mu, V = linalg.eigh((Qs + Qs.T) / 2)
    V = V * s[:, None]
    gap = float(mu[1])
    const = V[:, 0] / V[:, 0].mean()
    unconstrained_constant = bool(np.max(np.abs(const - 1)) < 1e-6)
    v = np.zeros(len(rho))
    v[keep] = V[:, 1] / math.sqrt(float(np.dot(r, V[:, 1] ** 2)))
    u = 1 + 0.1 * v / np.max(np.abs(v))
    minim = RelativeDensity.from_u(triple, u)

    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_random):
        w = rng.normal(size=len(r)) * rng.uniform(0.1, 1.0) ** rng.integers(0, 4, size=len(r))
        w -= np.dot(r, w) / r.sum()
        best = min(best, float(w @ Q @ w) / float(np.dot(r, w * w)))
    ok = best >= gap - 1e-6 * max(1.0, abs(gap))
    if gap <= 0:
        notes.append("non-positive discrete gap")
    return GapResult(gap, minim, float(mu[0]), unconstrained_constant, best, bool(ok), int((~keep).sum()),
                     which, side_conditions(triple), notes)


# --------------------------------------------------------------------------
# bound lemmas


@dataclass
class BoundVerdict:
    K: float
    K_half: float
    finite: bool
    region: str

    def to_dict(self):
        return _jsonable(self.__dict__)


def _scan(vals_full: np.ndarray, top_coord: np.ndarray, top: float, region: str) -> BoundVerdict:
    """Smallest K on the grid; growth detected if K doubles from half to full range at the top end."""
    if vals_full.size == 0:
        return BoundVerdict(math.nan, math.nan, False, region + " (empty on grid)")
    K = float(np.max(vals_full))
    half = top_coord <= top / 2
    K_half = float(np.max(vals_full[half])) if half.any() else math.nan
    at_top = top_coord[np.argmax(vals_full)] > top / 2
    growth = math.isfinite(K_half) and K > 2 * K_half and at_top
    if not math.isfinite(K) or growth:
        return BoundVerdict(math.inf, K_half, False, region)
    return BoundVerdict(K, K_half, True, region)


def check_bound_lemmas(triple: EigenTriple, R: float = 2.0, M: Optional[float] = None,
                       top: Optional[float] = None) -> dict:
    """Witness constants for the profile bounds used by the entropy inequality.

    Scans node pairs in each region up to ``top`` (default L/2, short of the
    boundary layer of the truncated dual).
    """
    c = triple.coefficients
    e = c.exponents
    if e["gamma"] == 0:
        return dict(verdict="excluded (gamma = 0)")
    top = triple.L / 2 if top is None else top
    # M > 1 as required, small enough that every region meets the scanned range
    M = max(1.01, min(math.sqrt(triple.L), top / (4 * R))) if M is None else M
    x = triple.mesh.nodes
    sel = x <= top
    xs = x[sel]
    G = triple.G.f()[sel]
    phi = triple.phi.f()[sel]
    p = c.fragments
    out = {}

    out["const1"] = _scan(G, xs, top, "0 < x")

    # tail integral int_{Rx}^{top} G phi
    gp = G * phi
    tail = integrate.cumulative_trapezoid(gp[::-1], -xs[::-1], initial=0.0)[::-1]
    idx = (xs > M) & (R * xs <= top) & (G > 0)
    tRx = np.interp(R * xs[idx], xs, tail)
    out["const2"] = _scan(tRx / G[idx], xs[idx], top, "x > M")

    Y, Z = np.meshgrid(xs, xs, indexing="ij")
    reg3 = (Y > np.maximum(2 * R * M, R * Z)) & (Y < 2 * R * Z)
    P = phi[:, None] / phi[None, :]
    out["const3"] = _scan(P[reg3], Y[reg3], top, "max(2RM, Rz) < y < 2Rz")

    # b(y, x) = B(y) p(x/y) / y, density part only
    X, Yb = np.meshgrid(xs, xs, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        b = c.B(Yb) * p.density(X / Yb) / Yb
        GP = G[:, None] * phi[None, :]
        if e["gamma"] > 0:
            reg = (X < Yb) & (Yb < np.maximum(2 * R * X, 2 * R * M))
            q = np.where(b[reg] > 0, GP[reg] / b[reg], np.inf)
            out["condD21"] = _scan(q, Yb[reg], top, "0 < x < y < max(2Rx, 2RM)")
            reg = (Yb > M) & (X < Yb)
            q = np.where(b[reg] > 0, (1 / Yb[reg]) / b[reg], np.inf)
            out["condD22"] = _scan(q, Yb[reg], top, "y > M, 0 < x < y")
        else:
            reg = X < Yb
            q = np.where(b[reg] > 0, GP[reg] / b[reg], np.inf)
            out["condD21-D22"] = _scan(q, Yb[reg], top, "0 < x < y")
    res = {k: v.to_dict() for k, v in out.items()}
    res["all_finite"] = all(v.finite for v in out.values())
    res["R"], res["M"], res["top"] = R, M, top
    return res


@dataclass
class EntropyReport:
    H: float
    D: float
    D2: float
    identity_residual: Optional[float]
    gap: GapResult
    bound_lemmas: dict

    def to_dict(self):
        return _jsonable(dict(H=self.H, D=self.D, D2=self.D2, identity_residual=self.identity_residual,
                              gap=self.gap.gap, gap_details=self.gap.to_dict(),
                              side_conditions=self.gap.side_conditions, bound_lemmas=self.bound_lemmas))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def entropy_report(triple: EigenTriple, u=None, seed: int = 0) -> EntropyReport:
    rng = np.random.default_rng(seed)
    u = random_normalized_u(triple, rng) if u is None else np.asarray(u, float)
    D2, res = compute_D2(triple, u)
    return EntropyReport(compute_H(triple, u), compute_D(triple, u), D2, res,
                         estimate_gap(triple, seed=seed), check_bound_lemmas(triple))
