"""Check suites behind the command line, each returning report sections."""
from __future__ import annotations

import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bracket import (Residual, bracket, jacobi_residual, nonlinear_jacobi, oracle_equivalence,
                      skew_residual, trial_rng)
from .config import RunConfig, validate
from .geometry import equivalence_audit, evaluate_tensor, gpc_check, levi_civita
from .schwartz import Omega, integrate, random_test_function
from .variational import boundedness_check, gateaux_oracle, variational_derivative

__all__ = ["run", "COMMANDS"]

COMMANDS = ("vd", "gateaux-check", "bracket", "skew", "jacobi", "geometry-check", "classify")


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    def __call__(self, name, fn, *args, **kwargs):
        t = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.times[name] = time.perf_counter() - t


# ---------------------------------------------------------------- suites


def geometry_suite(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    tol = cfg.tolerances["geometry"]
    pts = cfg.geometry_samples()
    rep = gpc_check(spec.fields, pts, tol=tol, ux_seed=cfg.seed or 0)
    coef_ok = {k: v <= tol for k, v in rep.coefficient_residuals.items()}
    audit = equivalence_audit(spec.fields, pts, tol=tol)
    out = {"gpc": rep.to_dict(), "coefficients": {"residuals": rep.coefficient_residuals,
                                                  "verdicts": coef_ok,
                                                  "passed": all(coef_ok.values())},
           "equivalence_audit": audit, "connection": spec.provenance}
    if spec.provenance == "supplied":
        lc = levi_civita(spec.g)
        diff = np.abs(evaluate_tensor(spec.gamma, pts) - evaluate_tensor(lc, pts))
        out["levi_civita_divergence"] = float(diff.max())
    out["passed"] = rep.passed and out["coefficients"]["passed"]
    return out


def skew_suite(cfg: RunConfig) -> Residual:
    return skew_residual(cfg.spec(), cfg.trials, cfg.seed or 0, cfg.grid, cfg.tolerances["skew"])


def jacobi_suite(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    res = jacobi_residual(spec, cfg.trials, cfg.seed or 0, cfg.grid, cfg.tolerances["jacobi"],
                          cfg.tolerances["skew"])
    out = {"linear": res.to_dict(), "passed": res.passed}
    names = list(cfg.functionals)
    if len(names) >= 3 and res.value != float("inf"):
        F, G, H = (cfg.functional(nm) for nm in names[:3])
        u = spec.random_point_function(trial_rng(cfg.seed or 0, 99_999))
        spot = nonlinear_jacobi(spec, F, G, H, u, cfg.grid)
        out["nonlinear_spot_check"] = {"functionals": names[:3], **spot,
                                       "note": "recorded only, not part of the verdict"}
    return out


def gateaux_suite(cfg: RunConfig, names: list[str] | None = None) -> dict:
    spec = cfg.spec()
    tol = cfg.tolerances["gateaux"]
    out = {}
    for nm in names or list(cfg.functionals):
        F = cfg.functional(nm)
        worst, rows = 0.0, []
        for k in range(cfg.trials):
            rng = trial_rng(cfg.seed or 0, k)
            u = spec.random_point_function(rng)
            d = random_test_function(rng, Omega.whole(cfg.n))
            vd = variational_derivative(F, u, cfg.grid)
            paired = integrate(np.sum(vd.values * d.jets(cfg.grid.nodes, 0)[:, 0], axis=0), cfg.grid)
            oracle = gateaux_oracle(F, u, d, cfg.grid)
            r = abs(paired - oracle.value) / (1.0 + abs(oracle.value))
            rows.append(r)
            worst = max(worst, r)
        b = boundedness_check(F, spec.random_point_function(trial_rng(cfg.seed or 0, 0)), cfg.grid)
        out[nm] = {"max_residual": worst, "tolerance": tol, "passed": worst <= tol,
                   "trials": rows, "boundedness": {"sup": b.sup, "verdict": b.verdict}}
    return {"functionals": out, "passed": all(v["passed"] for v in out.values())}


def classify_verdict(geo: dict, skew: Residual, jac: dict) -> dict:
    reasons = []
    for cond, ok in geo["gpc"]["verdicts"].items():
        if not ok:
            reasons.append(f"{cond} fails with residual {geo['gpc']['residuals'][cond]:.17g}")
    for name, ok in geo["coefficients"]["verdicts"].items():
        if not ok:
            reasons.append(f"coefficient {name} nonzero: {geo['coefficients']['residuals'][name]:.17g}")
    numeric_ok = skew.passed and jac["passed"]
    if not skew.passed:
        reasons.append(f"skew residual {skew.value:.6g} exceeds {skew.tolerance:g}")
    if not jac["passed"]:
        lin = jac["linear"]
        reasons.append(f"Jacobi residual {lin['value']:.6g} exceeds {lin['tolerance']:g}"
                       if lin["value"] != float("inf") else "Jacobi suite skipped: bracket not skew")
    if geo["passed"] and numeric_ok:
        verdict = "yes"
        reasons.append("metric, connection and all four structure equations hold; "
                       "skew and Jacobi residuals within tolerance")
    elif not geo["passed"] and not numeric_ok:
        verdict = "no"
    else:
        verdict = "inconclusive"
        reasons.append("geometric and residual evidence disagree")
    return {"poisson": verdict, "reasons": reasons}


# ---------------------------------------------------------------- driver


def run(cfg: RunConfig, command: str, functional: str | None = None, at: str | None = None,
        functionals: list[str] | None = None) -> tuple[dict, int]:
    """Run ``command``; returns the report and the exit code."""
    timer = _Timer()
    started = datetime.now(timezone.utc).isoformat()
    report = {
        "tool": "wnlbracket", "version": __version__, "command": command,
        "config": {"file": Path(cfg.source).name, "name": cfg.name, "sha256": cfg.digest,
                   "echo": cfg.raw},
        "seed": cfg.seed,
        "settings": {"grid": {"L": cfg.grid.L, "m": cfg.grid.m}, "tolerances": cfg.tolerances,
                     "trials": cfg.trials, "samples": cfg.samples},
    }
    diags = timer("validate", validate, cfg)
    report["diagnostics"] = [d.to_dict() for d in diags]
    code = 0
    if diags:
        report["verdict"] = {"status": "invalid configuration"}
        code = 2
    else:
        results: dict = {}
        if command == "vd":
            F = cfg.functional(functional or next(iter(cfg.functionals)))
            u = cfg.test_function(at or next(iter(cfg.test_functions)))
            vd = timer("vd", variational_derivative, F, u, cfg.grid)
            b = boundedness_check(F, u, cfg.grid)
            results["vd"] = {"functional": F.name, "test_function": u.name,
                             "x": cfg.grid.nodes, "values": vd.values,
                             "boundedness": {"sup": b.sup, "verdict": b.verdict}}
        elif command == "gateaux-check":
            results["gateaux"] = timer("gateaux", gateaux_suite, cfg,
                                       [functional] if functional else None)
            code = 0 if results["gateaux"]["passed"] else 1
        elif command == "bracket":
            names = functionals or list(cfg.functionals)[:2]
            if len(names) != 2:
                raise ValueError("bracket needs two functional names")
            F, G = (cfg.functional(nm) for nm in names)
            if at:
                u = cfg.test_function(at)
            else:
                u = cfg.spec().random_point_function(trial_rng(cfg.seed or 0, 0))
            val = timer("bracket", bracket, cfg.spec(), F, G, u, cfg.grid)
            results["bracket"] = {"F": names[0], "G": names[1], "at": u.name, "value": val}
        elif command == "skew":
            res = timer("skew", skew_suite, cfg)
            results["skew"] = res
            code = 0 if res.passed else 1
        elif command == "jacobi":
            jac = timer("jacobi", jacobi_suite, cfg)
            results["jacobi"] = jac
            code = 0 if jac["passed"] else 1
        elif command == "geometry-check":
            geo = timer("geometry", geometry_suite, cfg)
            results["geometry"] = geo
            code = 0 if geo["passed"] else 1
        elif command == "classify":
            geo = timer("geometry", geometry_suite, cfg)
            skew = timer("skew", skew_suite, cfg)
            jac = timer("jacobi", jacobi_suite, cfg)
            results.update(geometry=geo, skew=skew, jacobi=jac)
            if "oracle" in cfg.suites:
                results["oracle"] = timer("oracle", oracle_equivalence, cfg.spec(),
                                          min(cfg.trials, 4), cfg.seed or 0, cfg.grid,
                                          cfg.tolerances["oracle"])
            report["verdict"] = classify_verdict(geo, skew, jac)
            code = 0 if report["verdict"]["poisson"] == "yes" else 1
        else:
            raise ValueError(f"unknown command '{command}'")
        report["results"] = results
        report.setdefault("verdict", {"status": "pass" if code == 0 else "fail"})
    report["timing"] = {"started": started, "wall_seconds": timer.times}
    return report, code
