"""Coefficient families for the growth-fragmentation operator.

A problem is the triple (tau, B, p): growth rate, total fragmentation rate
and the fragment distribution p on [0, 1].  The kernel is never stored; it
is always evaluated as b(x, y) = B(x) p(y / x) / x.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

RATE_KINDS = ("pure-power", "power-with-perturbation", "tabulated")
FRAGMENT_KINDS = ("uniform", "power", "mitosis", "table")

HOLDS, FAILS, UNCHECKABLE = "holds", "fails", "not-checkable-numerically"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent coefficient declarations."""


# --------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class _PowerRate:
    """Shared machinery for tau and B.

    pure-power:               f(x) = a x^e
    power-with-perturbation:  f(x) = a x^e + pert_amp x^(e - delta)
    tabulated:                log-log linear interpolation of (x, f) samples,
                              continued by the end slopes.
    """

    kind: str = "pure-power"
    exponent: float = 1.0
    amplitude: float = 1.0
    pert_amp: float = 0.0
    delta: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ConfigError(f"unknown rate kind {self.kind!r}; expected one of {RATE_KINDS}")
        if self.kind == "tabulated":
            xs, ys = self._table_arrays()
            if len(xs) < 2 or np.any(np.diff(xs) <= 0) or np.any(xs <= 0):
                raise ConfigError("tabulated rate needs >= 2 strictly increasing positive sizes")
            if np.any(ys <= 0):
                raise ConfigError("tabulated rate values must be positive")
        if self.kind == "power-with-perturbation" and self.delta <= 0:
            raise ConfigError("perturbation decay delta must be positive")

    def _table_arrays(self):
        arr = np.asarray(self.table, float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "pure-power":
            return self.amplitude * x ** self.exponent
        if self.kind == "power-with-perturbation":
            return self.amplitude * x ** self.exponent + self.pert_amp * x ** (self.exponent - self.delta)
        xs, ys = self._table_arrays()
        lx, ly = np.log(xs), np.log(ys)
        s0 = (ly[1] - ly[0]) / (lx[1] - lx[0])
        s1 = (ly[-1] - ly[-2]) / (lx[-1] - lx[-2])
        t = np.log(np.maximum(x, 1e-300))
        out = np.interp(t, lx, ly)
        out = np.where(t < lx[0], ly[0] + s0 * (t - lx[0]), out)
        out = np.where(t > lx[-1], ly[-1] + s1 * (t - lx[-1]), out)
        return np.exp(out)

    # behaviour at 0 and infinity
    @property
    def exponent0(self) -> float:
        if self.kind == "power-with-perturbation" and self.pert_amp > 0:
            return self.exponent - self.delta
        if self.kind == "tabulated":
            xs, ys = self._table_arrays()
            return float(np.log(ys[1] / ys[0]) / np.log(xs[1] / xs[0]))
        return self.exponent

    @property
    def amplitude0(self) -> float:
        if self.kind == "power-with-perturbation" and self.pert_amp > 0:
            return self.pert_amp
        if self.kind == "tabulated":
            xs, ys = self._table_arrays()
            return float(ys[0] / xs[0] ** self.exponent0)
        return self.amplitude

    @property
    def exponent_inf(self) -> float:
        if self.kind == "tabulated":
            xs, ys = self._table_arrays()
            return float(np.log(ys[-1] / ys[-2]) / np.log(xs[-1] / xs[-2]))
        return self.exponent

    @property
    def amplitude_inf(self) -> float:
        if self.kind == "tabulated":
            xs, ys = self._table_arrays()
            return float(ys[-1] / xs[-1] ** self.exponent_inf)
        return self.amplitude

    @property
    def is_pure_power(self) -> bool:
        return self.kind == "pure-power" or (self.kind == "power-with-perturbation" and self.pert_amp == 0)


class GrowthRate(_PowerRate):
    """tau(x); exponents alpha0 (at 0) and alpha (at infinity)."""

    alpha = property(lambda s: s.exponent_inf)
    alpha0 = property(lambda s: s.exponent0)
    tau_inf = property(lambda s: s.amplitude_inf)
    tau0 = property(lambda s: s.amplitude0)


class TotalFragRate(_PowerRate):
    """B(x); exponents gamma0 (at 0) and gamma (at infinity)."""

    gamma = property(lambda s: s.exponent_inf)
    gamma0 = property(lambda s: s.exponent0)
    B_inf = property(lambda s: s.amplitude_inf)
    B0 = property(lambda s: s.amplitude0)


def power_growth(alpha=1.0, tau_inf=1.0) -> GrowthRate:
    return GrowthRate("pure-power", alpha, tau_inf)


def power_rate(gamma=1.0, B_inf=1.0) -> TotalFragRate:
    return TotalFragRate("pure-power", gamma, B_inf)


# --------------------------------------------------------------------------
# fragment distribution


@dataclass(frozen=True)
class FragmentMeasure:
    """Density part plus finitely many atoms on (0, 1].

    Density kinds:
      power    c z^(mu-1) (1-z)^nu with c fixed by mass preservation unless
               ``scale`` is given explicitly; ``uniform`` is mu=1, nu=0 (p = 2).
      table    piecewise linear through (z, p) samples; endpoint data declared.
      mitosis  no density, one atom 2 delta_{1/2}.
    """

    kind: str = "uniform"
    mu: float = 1.0
    nu: float = 0.0
    scale: Optional[float] = None
    atoms: tuple = ()
    table: tuple = ()
    declared_p0: Optional[float] = None
    declared_p1: Optional[float] = None
    p_lower: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FRAGMENT_KINDS:
            raise ConfigError(f"unknown fragments.kind {self.kind!r}; expected one of {FRAGMENT_KINDS}")
        if self.kind == "mitosis" and not self.atoms:
            object.__setattr__(self, "atoms", ((0.5, 2.0),))
        if self.kind == "uniform":
            object.__setattr__(self, "mu", 1.0)
            object.__setattr__(self, "nu", 0.0)
        atoms = tuple((float(z), float(w)) for z, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for z, w in atoms:
            if not (0 < z <= 1) or w <= 0:
                raise ConfigError(f"atom ({z}, {w}) must have location in (0,1] and positive weight")
        if self.kind in ("uniform", "power"):
            if self.mu <= 0 or self.nu <= -1:
                raise ConfigError("power fragments need mu > 0 and nu > -1")
        if self.kind == "table":
            z, p = self._table_arrays()
            if len(z) < 2 or z[0] < 0 or z[-1] > 1 or np.any(np.diff(z) <= 0):
                raise ConfigError("fragments table needs increasing z samples inside [0, 1]")

    def _table_arrays(self):
        arr = np.asarray(self.table, float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @property
    def has_density(self) -> bool:
        return self.kind != "mitosis"

    @property
    def coef(self) -> float:
        """Amplitude c of the beta-type density."""
        if self.scale is not None:
            return float(self.scale)
        # mass preservation of the density alone, after removing the atoms' mass
        left = 1.0 - sum(z * w for z, w in self.atoms)
        return left / special.beta(self.mu + 1, self.nu + 1)

    def density(self, z):
        z = np.asarray(z, float)
        if self.kind == "mitosis":
            return np.zeros_like(z)
        inside = (z > 0) & (z < 1)
        zc = np.clip(z, 1e-300, 1.0)
        if self.kind == "table":
            zt, pt = self._table_arrays()
            return np.where(inside | (z == 1), np.interp(zc, zt, pt), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.coef * zc ** (self.mu - 1) * np.where(z < 1, 1 - zc, 0.0) ** self.nu
        return np.where(inside, val, 0.0)

    def density_cumulative(self, k: float, z):
        """int_0^z t^k p(t) dt over the density part only."""
        z = np.clip(np.asarray(z, float), 0.0, 1.0)
        if self.kind == "mitosis":
            return np.zeros_like(z)
        if self.kind == "table":
            zt, pt = self._table_arrays()
            fine = np.linspace(zt[0], zt[-1], 20001)
            f = fine ** k * np.interp(fine, zt, pt)
            cum = integrate.cumulative_trapezoid(f, fine, initial=0.0)
            return np.interp(z, fine, cum)
        a, b = self.mu + k, self.nu + 1
        return self.coef * special.beta(a, b) * special.betainc(a, b, z)

    def cumulative(self, k: float, z):
        """int_[0,z] t^k p(dt), atoms included (closed at z)."""
        z = np.asarray(z, float)
        out = self.density_cumulative(k, z)
        for za, wa in self.atoms:
            out = out + wa * za ** k * (z >= za)
        return out

    @property
    def p0(self) -> float:
        if self.declared_p0 is not None:
            return float(self.declared_p0)
        if self.kind == "mitosis":
            return 0.0
        if self.kind == "table":
            return float(self._table_arrays()[1][0])
        return self.coef

    @property
    def p1(self) -> float:
        if self.declared_p1 is not None:
            return float(self.declared_p1)
        if self.kind == "mitosis":
            return 0.0
        if self.kind == "table":
            return float(self._table_arrays()[1][-1])
        return self.coef

    @property
    def lower_bound(self) -> float:
        """Claimed p_lower if given, else the sampled infimum of the density."""
        if self.p_lower is not None:
            return float(self.p_lower)
        if not self.has_density:
            return 0.0
        z = np.linspace(1e-6, 1 - 1e-6, 4001)
        return float(max(self.density(z).min(), 0.0))

    @property
    def pi0(self) -> float:
        return moment(self, 0.0, check=False)


def moment(p: FragmentMeasure, k: float, check: bool = True) -> float:
    """pi_k = int_0^1 z^k p(dz): weighted density quadrature plus exact atoms."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    if p.kind in ("uniform", "power"):
        dens = p.coef * special.beta(p.mu + k, p.nu + 1)
    elif p.kind == "table":
        zt, pt = p._table_arrays()
        dens, _ = integrate.quad(lambda t: t ** k * np.interp(t, zt, pt), zt[0], zt[-1],
                                 points=list(zt[1:-1][:50]), limit=400)
    else:
        dens = 0.0
    if not np.isfinite(dens):
        end = "0 (mu too small)" if p.mu + k <= 0 else "1 (nu too small)"
        raise ValueError(f"non-finite density moment; singular endpoint at z={end}")
    val = float(dens + sum(w * z ** k for z, w in p.atoms))
    if check:
        pi1 = float((p.coef * special.beta(p.mu + 1, p.nu + 1) if p.kind in ("uniform", "power")
                     else (moment(p, 1.0, check=False) if p.kind == "table" else 0.0))
                    + sum(w * z for z, w in p.atoms))
        if abs(pi1 - 1) > 1e-8:
            raise ValueError(f"fragment measure is not mass preserving: pi_1 = {pi1:.12g}")
        if k < 1 and val <= 1 or k > 1 and val >= 1:
            raise ValueError(f"moment monotonicity violated: pi_{k} = {val}")
    return val


def uniform_fragments() -> FragmentMeasure:
    return FragmentMeasure("uniform")


def mitosis_fragments() -> FragmentMeasure:
    return FragmentMeasure("mitosis")


# --------------------------------------------------------------------------
# the coefficient set


@dataclass(frozen=True)
class CoefficientSet:
    growth: GrowthRate
    total_rate: TotalFragRate
    fragments: FragmentMeasure
    name: str = ""

    def tau(self, x):
        return self.growth(x)

    def B(self, x):
        return self.total_rate(x)

    @property
    def exponents(self) -> dict:
        g, t, p = self.total_rate, self.growth, self.fragments
        delta = min(g.delta if g.kind == "power-with-perturbation" else math.inf,
                    t.delta if t.kind == "power-with-perturbation" else math.inf)
        return dict(gamma0=g.gamma0, gamma=g.gamma, alpha0=t.alpha0, alpha=t.alpha,
                    mu=p.mu, nu=p.nu, p0=p.p0, p1=p.p1, delta=delta,
                    B0=g.B0, B_inf=g.B_inf, tau0=t.tau0, tau_inf=t.tau_inf)

    def b(self, x, y):
        return eval_b(self, x, y)[0]


def eval_b(c: CoefficientSet, x, y):
    """Kernel density B(x) p(y/x) / x for 0 < y < x, plus the atomic part.

    The atomic part is returned as a list of (location y = z_i x, weight B(x) w_i / x).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(y >= x) or np.any(y <= 0):
        raise ValueError("eval_b needs 0 < y < x")
    Bx = c.B(x)
    dens = Bx * c.fragments.density(y / x) / x
    atoms = [(za * x, Bx * wa / x) for za, wa in c.fragments.atoms]
    return dens, atoms


# --------------------------------------------------------------------------
# hypotheses


@dataclass
class HypothesisReport:
    verdicts: dict
    details: dict
    exponents: dict
    # entropy-inequality side condition depending on lambda, filled in after a solve
    deferred: Callable[[float], str] = field(repr=False, default=lambda lam: UNCHECKABLE)

    def passes(self, *names) -> bool:
        names = names or tuple(self.verdicts)
        return all(self.verdicts[n] != FAILS for n in names)

    def entropy_side_condition(self, lam: float) -> str:
        return self.deferred(lam)

    def to_dict(self, lam: Optional[float] = None) -> dict:
        d = {"verdicts": dict(self.verdicts), "details": dict(self.details)}
        if lam is not None:
            d["verdicts"]["entropy_side_conditions"] = self.deferred(lam)
        return d


def _verdict(ok: bool) -> str:
    return HOLDS if ok else FAILS


def _positive_continuous(f, lo=1e-8, hi=1e8, n=2001):
    x = np.geomspace(lo, hi, n)
    v = f(x)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        return False
    jumps = np.abs(np.diff(np.log(v)))
    return bool(jumps.max() < 1.0)


def _B_locally_integrable(B) -> tuple[bool, float]:
    # graded refinement towards 0: integrate in log x over (1e-8, 1]
    val, err = integrate.quad(lambda t: B(np.exp(t)) * np.exp(t), math.log(1e-8), 0.0, limit=200,
                          epsabs=0.0, epsrel=1e-11)
    return bool(np.isfinite(val) and err <= 1e-8 * max(abs(val), 1.0)), float(val)


def _endpoint_check(p: FragmentMeasure):
    """Spot-check the declared (p0, mu) and (p1, nu) on a decade of z."""
    if not p.has_density:
        return True, True
    z0 = np.geomspace(1e-6, 1e-5, 9)
    r0 = p.density(z0) / z0 ** (p.mu - 1)
    ok0 = np.allclose(r0, p.p0, rtol=0.05, atol=1e-12)
    om = np.geomspace(1e-6, 1e-5, 9)
    r1 = p.density(1 - om) / om ** p.nu
    ok1 = np.allclose(r1, p.p1, rtol=0.05, atol=1e-12)
    return bool(ok0), bool(ok1)


def validate_hypotheses(c: CoefficientSet) -> HypothesisReport:
    """Verdict per standing hypothesis; never raises on a failed hypothesis."""
    e = c.exponents
    p = c.fragments
    v, d = {}, {}

    try:
        pi1 = moment(p, 1.0, check=False)
        pi0 = moment(p, 0.0, check=False)
    except ValueError as err:
        pi0 = pi1 = float("nan")
        d["moments"] = str(err)
    Bint, Bval = _B_locally_integrable(c.B)
    Bint = Bint and e["gamma0"] > -1
    dens_ok = True
    if p.has_density:
        zs = np.linspace(1e-4, 1 - 1e-4, 2001)
        dens_ok = bool(np.all(p.density(zs) >= 0))
    pos_B = bool(np.all(c.B(np.geomspace(1e-8, 1e8, 401)) > 0))
    v["self_similar_kernel"] = _verdict(abs(pi1 - 1) <= 1e-8 and pi0 > 1 and dens_ok and Bint and pos_B)
    d["self_similar_kernel"] = dict(pi0=pi0, pi1=pi1, B_integral_0_1=Bval, density_nonnegative=dens_ok)

    v["growth_positive"] = _verdict(_positive_continuous(c.tau))

    c0 = e["gamma0"] - e["alpha0"] + 1
    cinf = e["gamma"] - e["alpha"] + 1
    v["power_asymptotics"] = _verdict(c0 > 0 and cinf > 0 and e["B_inf"] > 0 and e["tau_inf"] > 0)
    d["power_asymptotics"] = {"gamma0-alpha0+1": c0, "gamma-alpha+1": cinf}

    ok0, ok1 = _endpoint_check(p)
    mucond = e["mu"] - e["alpha0"] + 1
    if p.has_density:
        v["p_near_zero"] = _verdict(mucond > 0 and e["p0"] >= 0 and ok0)
    else:
        # atoms away from 0: p vanishes near 0, so p0 = 0 with any mu
        v["p_near_zero"] = _verdict(all(z > 0 for z, _ in p.atoms))
    d["p_near_zero"] = {"mu-alpha0+1": mucond, "declared_p0_matches_samples": ok0}

    if c.growth.kind == "tabulated" or c.total_rate.kind == "tabulated":
        v["second_order_rates"] = UNCHECKABLE
    else:
        near_one = ok1 if p.has_density else all(z < 1 for z, _ in p.atoms)
        v["second_order_rates"] = _verdict(e["nu"] > -1 and e["delta"] > 0 and near_one)
    d["second_order_rates"] = {"declared_p1_matches_samples": ok1}

    plow = p.lower_bound
    bounded_below = p.has_density and plow > 0 and e["p0"] > 0 and e["p1"] > 0 and e["alpha0"] < 2 and not p.atoms
    if p.has_density and p.atoms:
        bounded_below = plow > 0 and e["p0"] > 0 and e["p1"] > 0 and e["alpha0"] < 2
    v["p_bounded_below"] = _verdict(bool(bounded_below))
    d["p_bounded_below"] = {"p_lower": plow, "alpha0": e["alpha0"]}

    a0, g0, tau0 = e["alpha0"], e["gamma0"], e["tau0"]

    def side(lam: float) -> str:
        if a0 > 1:
            return HOLDS
        if a0 == 1:
            return _verdict(g0 <= 1 + lam / tau0)
        return _verdict(g0 <= 2 - a0)

    return HypothesisReport(v, d, e, side)


# --------------------------------------------------------------------------
# config files


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` file; values are Python literals or bare strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        try:
            out[key] = ast.literal_eval(val)
        except (ValueError, SyntaxError):
            out[key] = val
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read(), str(path))


def _num(cfg, key, default):
    val = cfg.get(key, default)
    try:
        return float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key}: expected a number, got {val!r}") from None


def coefficients_from_config(cfg: dict) -> CoefficientSet:
    gk = cfg.get("growth.kind", "pure-power")
    growth = GrowthRate(gk, _num(cfg, "growth.alpha", 1.0), _num(cfg, "growth.tau_inf", 1.0),
                        _num(cfg, "growth.pert_amp", 0.0), _num(cfg, "growth.delta", 1.0),
                        tuple(map(tuple, cfg.get("growth.table", ()))))
    fk = cfg.get("frag.kind", "pure-power")
    rate = TotalFragRate(fk, _num(cfg, "frag.gamma", 1.0), _num(cfg, "frag.B_inf", 1.0),
                         _num(cfg, "frag.pert_amp", 0.0), _num(cfg, "frag.delta", 1.0),
                         tuple(map(tuple, cfg.get("frag.table", ()))))
    pk = cfg.get("fragments.kind", "uniform")
    opt = lambda k: None if cfg.get(k) is None else _num(cfg, k, None)
    atoms = cfg.get("fragments.atoms", ())
    try:
        atoms = tuple((float(z), float(w)) for z, w in atoms)
    except (TypeError, ValueError):
        raise ConfigError("fragments.atoms must be a list of [z, w] pairs") from None
    frag = FragmentMeasure(pk, _num(cfg, "fragments.mu", 1.0), _num(cfg, "fragments.nu", 0.0),
                           opt("fragments.scale"), atoms,
                           tuple(map(tuple, cfg.get("fragments.table", ()))),
                           opt("fragments.p0") if pk == "table" else None,
                           opt("fragments.p1") if pk == "table" else None,
                           opt("fragments.p_lower"))
    return CoefficientSet(growth, rate, frag, str(cfg.get("name", "")))


def power_coefficients(alpha=1.0, gamma=1.0, tau_inf=1.0, B_inf=1.0, fragments=None, name=""):
    """tau = tau_inf x^alpha, B = B_inf x^gamma, p = 2 unless given."""
    return CoefficientSet(power_growth(alpha, tau_inf), power_rate(gamma, B_inf),
                          fragments or uniform_fragments(), name)
