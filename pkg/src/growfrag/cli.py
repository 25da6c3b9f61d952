"""Command line front end: ``growfrag <task> --config NAME|PATH``.

Exit codes: 0 ok, 1 some verdict failed, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics as asy
from .coefficients import ConfigError, CoefficientSet, coefficients_from_config, load_config, validate_hypotheses
from .eigensolver import (AssemblyError, ConvergenceError, EigenTriple, TruncationConfig, _jsonable,
                          estimate_L0, solve_truncated)
from .entropy import entropy_report, estimate_gap
from .evolve import Evolver, initial_gap_minimizer, run
from .meshops import build_mesh, compute_scalars

TASKS = ("validate", "solve", "asymptotics", "entropy-gap", "evolve", "laplace", "certify-bounds")
DEPENDS = {
    "validate": (),
    "solve": ("validate",),
    "asymptotics": ("solve",),
    "entropy-gap": ("validate",),
    "evolve": ("validate",),
    "laplace": (),
    "certify-bounds": ("solve",),
}
PASS = {"consistent", "holds"}
NEUTRAL = {"excluded", "inapplicable", "outside scope"}

_BASE = {"growth.kind": "pure-power", "frag.kind": "pure-power", "fragments.kind": "uniform"}
BUILTIN = {
    "power-gamma1": dict(_BASE, **{"growth.alpha": 0.0, "frag.gamma": 1.0,
                                   "mesh.L": 1600.0, "mesh.N": 2049}),
    "power-gamma-half": dict(_BASE, **{"growth.alpha": 0.0, "frag.gamma": -0.5,
                                       "mesh.L": 1600.0, "mesh.N": 2049}),
    "constant-B": dict(_BASE, **{"growth.alpha": 0.0, "frag.gamma": 0.0,
                                 "mesh.L": 1600.0, "mesh.N": 2049}),
    "selfsimilar-gamma1": dict(_BASE, **{"growth.alpha": 1.0, "frag.gamma": 1.0,
                                         "mesh.L": 1600.0, "mesh.N": 2049}),
    "mitosis": dict(_BASE, **{"growth.alpha": 0.0, "frag.gamma": 1.0, "fragments.kind": "mitosis",
                              "mesh.L": 1600.0, "mesh.N": 2049}),
    "degenerate": dict(_BASE, **{"growth.alpha": 1.0, "frag.gamma": 0.0, "degenerate": True,
                                 "mesh.L": 40.0, "mesh.N": 1025}),
}


@dataclass
class Scenario:
    name: str
    config: dict
    coefficients: CoefficientSet
    L: float
    N: int
    x1: float
    tasks: tuple
    out: Path
    seed: int = 0
    truncation: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return bool(self.config.get("degenerate", False))

    def plan(self) -> list:
        """Requested tasks plus prerequisites, in dependency order."""
        need = set()

        def add(t):
            for d in DEPENDS[t]:
                add(d)
            need.add(t)

        for t in self.tasks:
            add(t)
        return [t for t in TASKS if t in need]

    def sub_mesh(self, prefix: str, L_default: float, N_default: int, x1_default: Optional[float] = None):
        L = float(self.config.get(f"{prefix}.L", min(self.L, L_default)))
        N = int(self.config.get(f"{prefix}.N", N_default))
        x1 = float(self.config.get(f"{prefix}.x1", x1_default or self.x1))
        return L, build_mesh(L, N, x1)


def _parse_mesh(spec: str) -> dict:
    out = {}
    for part in filter(None, spec.split(",")):
        if "=" not in part:
            raise ConfigError(f"--mesh: expected key=value, got {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in ("N", "L", "x1"):
            raise ConfigError(f"--mesh: unknown key {k!r} (use N, L, x1)")
        try:
            out[k] = int(v) if k == "N" else float(v)
        except ValueError:
            raise ConfigError(f"--mesh: bad value for {k}: {v!r}") from None
    return out


def make_scenario(config: str, tasks, out, seed=0, mesh: Optional[str] = None) -> Scenario:
    if config in BUILTIN:
        cfg, name = dict(BUILTIN[config]), config
    else:
        p = Path(config)
        if not p.exists():
            raise ConfigError(f"config {config!r} is neither a built-in scenario ({', '.join(BUILTIN)}) nor a file")
        cfg, name = load_config(p), p.stem
    name = str(cfg.get("name", name))
    c = coefficients_from_config(cfg)
    m = _parse_mesh(mesh) if mesh else {}
    try:
        L = float(m.get("L", cfg.get("mesh.L", 40.0)))
        N = int(m.get("N", cfg.get("mesh.N", 1025)))
        x1 = float(m.get("x1", cfg.get("mesh.x1", 1e-6)))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"mesh settings: {e}") from None
    build_mesh(L, N, x1)  # validates
    trunc = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("truncation.")}
    try:
        TruncationConfig(L, **trunc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"truncation settings: {e}") from None
    return Scenario(name, cfg, c, L, N, x1, tuple(tasks), Path(out), seed, trunc)


# --------------------------------------------------------------------------
# tasks; each returns (report dict, {check name: verdict})


def _solve(sc: Scenario, L: float, mesh) -> EigenTriple:
    return solve_truncated(sc.coefficients, TruncationConfig(L, **sc.truncation), mesh)


BASIC_HYPOTHESES = ("self_similar_kernel", "growth_positive", "power_asymptotics", "p_near_zero")


def task_validate(sc: Scenario, ctx):
    rep = validate_hypotheses(sc.coefficients)
    ctx["hypotheses"] = rep
    ok = rep.passes(*BASIC_HYPOTHESES)
    return rep.to_dict(), {"basic_hypotheses": "holds" if ok else "fails"}


def task_solve(sc: Scenario, ctx):
    mesh = build_mesh(sc.L, sc.N, sc.x1)
    tr = _solve(sc, sc.L, mesh)
    ctx["triple"] = tr
    est = estimate_L0(sc.coefficients)
    rep = tr.summary()
    rep["L0"] = dict(L0=est.L0, s=est.s, A=est.A, verdict=est.verdict)
    v = {"lambda_positive": "holds" if tr.lam > 0 else "fails",
         "residuals": "holds" if max(tr.residuals["primal"], tr.residuals["dual"]) < 1e-8 else "fails",
         "positivity": "holds" if (tr.v > 0).all() and (tr.theta > 0).all() else "fails"}
    ctx["csv"]["solve"] = tr.to_csv
    return rep, v


def task_asymptotics(sc: Scenario, ctx):
    tr = ctx["triple"]
    c = sc.coefficients
    reps = {"G_at_infinity": asy.verify_G_at_infinity(tr), "G_at_zero": asy.verify_G_at_zero(tr)}
    if sc.degenerate:
        reps["phi_at_zero"] = asy.AsymptoticReport("phi_at_zero", "excluded", warnings=["degenerate family"])
        reps["phi_at_infinity"] = asy.AsymptoticReport("phi_at_infinity", "excluded", warnings=["degenerate family"])
    else:
        reps["phi_at_zero"] = asy.verify_phi_at_zero(tr)
        reps["phi_at_infinity"] = asy.verify_phi_at_infinity(tr)
    out = {k: r.to_dict() for k, r in reps.items()}
    verdicts = {k: r.verdict for k, r in reps.items()}
    scal = compute_scalars(c, tr.lam)
    if scal.xi is not None:
        mom = asy.verify_moment_lemma(tr, [1 + scal.xi + 0.5, 1 + scal.xi - 0.5])
        out["moment_lemma"] = [m.to_dict() for m in mom]
        for rep, want, key in ((mom[0], "bounded", "moment_above_threshold"),
                               (mom[1], "divergent", "moment_below_threshold")):
            verdicts[key] = ("consistent" if rep.verdict == want else
                             "inconclusive" if rep.verdict == "inconclusive" else "inconsistent")
    if c.exponents["gamma"] >= 0 and c.growth.is_pure_power and c.total_rate.is_pure_power:
        xs = [10.0, 50.0, 100.0]
        b2 = asy.verify_Lambda_integral(c, tr.lam, 0.0, xs)
        b3 = asy.verify_kernel_integral(c, tr.lam, 0.0, xs)
        out["Lambda_integral"], out["kernel_integral"] = b2.to_dict(), b3.to_dict()
        verdicts["Lambda_integral"], verdicts["kernel_integral"] = b2.verdict, b3.verdict
    for k, r in reps.items():
        if len(r.x):
            ctx["csv"][f"asymptotics_{k}"] = r.to_csv
    return out, verdicts


def task_entropy(sc: Scenario, ctx):
    L, mesh = sc.sub_mesh("entropy", 20.0, 513)
    tr = _solve(sc, L, mesh)
    rep = entropy_report(tr, seed=sc.seed)
    d = rep.to_dict()
    d["L"], d["N"] = L, mesh.N
    scope = rep.gap.side_conditions["scope"]
    v = {"D2_equals_H": "holds" if rep.identity_residual is not None and rep.identity_residual <= 1e-8 else "fails",
         "random_rayleigh_check": "holds" if rep.gap.random_check_ok else "fails"}
    if scope.startswith("inside"):
        v["gap_positive"] = "holds" if rep.gap.gap > 0 else "fails"
    else:
        v["gap_positive"] = "outside scope"
    ctx["csv"]["entropy-gap_minimizer"] = rep.gap.minimizer.to_csv
    return d, v


def task_evolve(sc: Scenario, ctx):
    # explicit stepping: dt is limited by the smallest cell width / tau, so
    # for growth not vanishing at zero start the grid higher
    x1 = sc.x1 if sc.coefficients.exponents["alpha0"] >= 1 else max(sc.x1, 1e-2)
    L, mesh = sc.sub_mesh("evolve", 20.0, 513, x1)
    tr = _solve(sc, L, mesh)
    ev = Evolver(tr)
    T = float(sc.config.get("evolve.T", 10.0))
    g0 = initial_gap_minimizer(ev)
    gap = estimate_gap(tr, "total", n_random=0).gap
    traj = run(ev, g0, T)
    drift = traj.conservation_drift()
    gre = float(traj.gre_errors().max())
    rate = traj.fitted_rate()
    d = dict(L=L, N=mesh.N, T=T, dt=traj.dt, conservation_drift=drift, gre_max_error=gre,
             fitted_rate=rate, discrete_gap=gap, min_g=traj.min_g, monotone_entropy=traj.monotone_entropy(),
             H0=float(traj.H[0]), HT=float(traj.H[-1]))
    v = {"conservation": "holds" if drift <= 1e-4 else "fails",
         "gre_identity": "holds" if gre <= 0.05 else "fails",
         "decay_rate_vs_gap": "holds" if gap > 0 and 0.25 <= rate / gap <= 4 else "fails",
         "positivity": "holds" if traj.min_g >= 0 else "fails"}
    ctx["csv"]["evolve_trajectory"] = lambda p: traj.to_csv(p, cadence=max(1, len(traj.t) // 2000))
    return d, v


def task_laplace(sc: Scenario, ctx):
    out, v = {}, {}
    for name, prob in asy.builtin_laplace_problems().items():
        r = asy.laplace_oracle(prob, [10.0, 100.0, 1000.0])
        out[name] = r.to_dict()
        ok = abs(r.ratio[-1] - 1) <= 0.1 and not r.invariant_failures
        if name == "exact":
            ok = ok and max(abs(q - 1) for q in r.ratio) <= 1e-10
        v[f"laplace_{name}"] = "holds" if ok else "fails"
    return out, v


def task_certify(sc: Scenario, ctx):
    tr = ctx["triple"]
    c = sc.coefficients
    e = c.exponents
    g = e["gamma"]
    out, v = {}, {}
    if g == 0:
        return {"verdict": "excluded (gamma = 0)"}, {"certificates": "excluded"}
    if g > 0:
        klo, _ = asy.linear_k_range(c, "super")
        klo2, _ = asy.linear_k_range(c, "sub")
        k = (max(klo, klo2) + 1) / 2
        cands = [(asy.linear_supersolution(10.0, k), "super"), (asy.linear_subsolution(k), "sub")]
    else:
        if not (e["mu"] == 1 and e["p0"] > 0):
            return {"verdict": "inapplicable"}, {"certificates": "inapplicable"}
        th = asy.certificate_thresholds(c, tr.lam)
        out["thresholds"] = th
        cands = [(asy.shifted_power_supersolution(1.5 * th["eta_min"], g), "super"),
                 (asy.cutoff_power_subsolution(0.5 * th["eps_max"], g), "sub")]
    for cand, mode in cands:
        r = asy.check_certificate(c, tr.lam, tr.mesh, cand, mode)
        d = r.to_dict()
        if mode == "super":
            d["max_principle"] = asy.max_principle_echo(tr, cand, r)
        out[f"{mode}solution"] = d
        v[f"{mode}solution"] = r.verdict
    return out, v


RUNNERS = {"validate": task_validate, "solve": task_solve, "asymptotics": task_asymptotics,
           "entropy-gap": task_entropy, "evolve": task_evolve, "laplace": task_laplace,
           "certify-bounds": task_certify}


# --------------------------------------------------------------------------


def _atomic_write(path: Path, writer):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _write_json(path: Path, obj):
    def w(p):
        with open(p, "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
    _atomic_write(path, w)


def run_scenario(sc: Scenario, echo=print) -> int:
    np.random.seed(sc.seed)
    ctx = {"csv": {}}
    failures = []
    summary = {"scenario": sc.name, "seed": sc.seed, "mesh": dict(L=sc.L, N=sc.N, x1=sc.x1), "tasks": {}}
    for task in sc.plan():
        ctx["csv"] = {}
        try:
            rep, verdicts = RUNNERS[task](sc, ctx)
        except (ConvergenceError, AssemblyError, FloatingPointError, np.linalg.LinAlgError) as e:
            summary["tasks"][task] = {"error": str(e)}
            summary["failures"] = failures + [f"{task}: numerical failure"]
            _write_json(sc.out / f"{sc.name}_summary.json", summary)
            echo(f"{sc.name} {task}: numerical failure: {e}")
            return 3
        _write_json(sc.out / f"{sc.name}_{task}.json", rep)
        for key, writer in ctx["csv"].items():
            _atomic_write(sc.out / f"{sc.name}_{key}.csv", writer)
        summary["tasks"][task] = verdicts
        bad = [f"{task}/{k}: {v}" for k, v in verdicts.items() if v not in PASS and v not in NEUTRAL]
        failures += bad
        for k, v in verdicts.items():
            echo(f"{sc.name} {task} {k}: {v}")
        if task == "solve":
            echo(f"{sc.name} solve lambda_L = {ctx['triple'].lam:.10g}")
        if task == "validate" and bad:
            summary["failures"] = failures
            _write_json(sc.out / f"{sc.name}_summary.json", summary)
            echo(f"{sc.name}: hypotheses fail, nothing solved")
            return 1
    summary["failures"] = failures
    _write_json(sc.out / f"{sc.name}_summary.json", summary)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="growfrag", description="Growth-fragmentation eigenproblem checks")
    ap.add_argument("task", choices=TASKS + ("all",))
    ap.add_argument("--config", required=True, help=f"config file or built-in name: {', '.join(BUILTIN)}")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mesh", default=None, help="override, e.g. N=1025,L=40,x1=1e-6")
    ap.add_argument("--dry-run", action="store_true", help="print the task plan and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tasks = TASKS if args.task == "all" else (args.task,)
    try:
        sc = make_scenario(args.config, tasks, args.out, args.seed, args.mesh)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.dry_run:
        plan = sc.plan()
        print(json.dumps({"scenario": sc.name, "mesh": dict(L=sc.L, N=sc.N, x1=sc.x1),
                          "tasks": [{"task": t, "after": [d for d in DEPENDS[t] if d in plan]} for t in plan]},
                         indent=2, sort_keys=True))
        return 0
    return run_scenario(sc)


if __name__ == "__main__":
    sys.exit(main())
