"""Run configuration: a TOML document describing a chart, a bracket and functionals.

A bundled example can be referred to by file name (``gardner.cfg``) instead
of a path.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bracket import BracketSpec
from .geometry import evaluate_tensor, sample_points
from .jetexpr import EvaluationError, JetExprError, ParseError
from .schwartz import (DEFAULT_L, DEFAULT_M, EPS_TAIL, Grid, ImageEscapesOmega, Omega,
                       TestFunction, make_test_function)
from .variational import Functional, LIMITS

__all__ = ["RunConfig", "ConfigError", "Diagnostic", "load_config", "validate",
           "bundled_configs", "resolve_config_path"]

SUITES = ("geometry", "coefficients", "skew", "jacobi", "gateaux", "boundedness", "oracle")
DEFAULT_TOLERANCES = {"geometry": 1e-8, "skew": 1e-7, "jacobi": 1e-6, "gateaux": 1e-5,
                      "oracle": 5e-5}


class ConfigError(ValueError):
    """The configuration cannot be turned into a runnable setup."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"

    def to_dict(self):
        return {"location": self.location, "message": self.message}


@dataclass
class RunConfig:
    raw: dict
    source: str
    name: str
    n: int
    constants: dict[str, float]
    omega: Omega
    subchart: tuple[np.ndarray, np.ndarray]
    delta: float
    base: np.ndarray
    radius: float
    test_margin: float
    grid: Grid
    eps_tail: float
    bracket: dict
    functionals: dict[str, dict]
    test_functions: dict[str, list]
    suites: list[str]
    tolerances: dict[str, float]
    seed: int | None
    trials: int
    samples: int
    digest: str = ""
    _spec: BracketSpec | None = field(default=None, repr=False)

    # -------------------------------------------------------- builders

    def spec(self) -> BracketSpec:
        if self._spec is None:
            b = self.bracket
            self._spec = BracketSpec.build(
                self.n, b["g"], w=b.get("w"), gamma=b.get("gamma"), omega=self.omega,
                base=self.base, constants=self.constants, name=self.name,
                margin=self.test_margin, radius=self.radius)
        return self._spec

    def functional(self, name: str) -> Functional:
        if name not in self.functionals:
            raise KeyError(f"unknown functional '{name}' (have: {', '.join(self.functionals) or 'none'})")
        f = self.functionals[name]
        return Functional.parse(f["density"], f.get("chains", []), self.n, name, self.constants)

    def test_function(self, name: str) -> TestFunction:
        if name not in self.test_functions:
            raise KeyError(f"unknown test function '{name}' "
                           f"(have: {', '.join(self.test_functions) or 'none'})")
        spec = [(t["component"], [t]) for t in self.test_functions[name]]
        return make_test_function(spec, self.omega, base=self.base, margin=self.test_margin,
                                  name=name, eps_tail=self.eps_tail)

    def geometry_samples(self, count: int | None = None, seed: int | None = None) -> np.ndarray:
        return sample_points(count or self.samples, *self.subchart, omega=self.omega,
                             margin=self.delta, seed=self.seed if seed is None else seed)


# ------------------------------------------------------------- loading


def bundled_configs() -> list[str]:
    return sorted(p.name for p in resources.files("wnlbracket.data").iterdir()
                  if p.name.endswith(".cfg"))


def resolve_config_path(path: str | Path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    candidate = resources.files("wnlbracket.data") / p.name
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"config '{path}' not found (bundled: {', '.join(bundled_configs())})")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and structurally check a config; raises :class:`ConfigError`."""
    p = resolve_config_path(path)
    text = p.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([Diagnostic(str(p), f"TOML syntax: {exc}")]) from exc
    return from_dict(raw, str(p), overrides)


def from_dict(raw: dict, source: str = "<dict>", overrides: dict | None = None) -> RunConfig:
    overrides = overrides or {}
    diags: list[Diagnostic] = []
    chart = raw.get("chart", {})
    n = chart.get("n")
    if not isinstance(n, int) or n < 1:
        raise ConfigError([Diagnostic("chart.n", "field count must be a positive integer")])

    rows, rhs = [], []
    for k, ineq in enumerate(chart.get("inequalities", [])):
        a = ineq.get("a", [])
        if len(a) != n:
            diags.append(Diagnostic(f"chart.inequalities[{k}].a", f"needs {n} coefficients"))
            continue
        rows.append(a)
        rhs.append(float(ineq.get("b", 0.0)))
    omega = Omega(n, np.array(rows, float).reshape(-1, n), np.array(rhs, float))
    if "box_lo" in chart or "box_hi" in chart:
        lo = chart.get("box_lo", [-np.inf] * n)
        hi = chart.get("box_hi", [np.inf] * n)
        if len(lo) != n or len(hi) != n:
            diags.append(Diagnostic("chart.box_lo/box_hi", f"needs {n} entries"))
        else:
            omega = omega.intersect(Omega.box(lo, hi))

    base = np.asarray(chart.get("base", [0.0] * n), float)
    if base.shape != (n,):
        diags.append(Diagnostic("chart.base", f"needs {n} entries"))
        base = np.zeros(n)
    sub_lo = np.asarray(chart.get("subchart_lo", [-1.0] * n), float)
    sub_hi = np.asarray(chart.get("subchart_hi", [1.0] * n), float)
    if sub_lo.shape != (n,) or sub_hi.shape != (n,) or np.any(sub_lo >= sub_hi):
        diags.append(Diagnostic("chart.subchart_lo/subchart_hi",
                                f"needs {n} entries each with lo < hi"))
        sub_lo, sub_hi = -np.ones(n), np.ones(n)

    grid_cfg = raw.get("grid", {})
    L = float(overrides.get("grid_L") or grid_cfg.get("L", DEFAULT_L))
    m = int(overrides.get("grid_m") or grid_cfg.get("m", DEFAULT_M))
    if L <= 0 or m < 2:
        diags.append(Diagnostic("grid", "needs L > 0 and m >= 2"))
        L, m = DEFAULT_L, DEFAULT_M

    bracket = raw.get("bracket", {})
    if "g" not in bracket:
        diags.append(Diagnostic("bracket.g", "metric is required"))

    functionals = raw.get("functionals", {})
    for name, f in functionals.items():
        if "density" not in f:
            diags.append(Diagnostic(f"functionals.{name}", "missing 'density'"))

    suites_cfg = raw.get("suites", {})
    suites = list(suites_cfg.get("run", ["geometry", "coefficients", "skew", "jacobi"]))
    for s in suites:
        if s not in SUITES:
            diags.append(Diagnostic("suites.run", f"unknown suite '{s}' (known: {', '.join(SUITES)})"))
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update({k: float(v) for k, v in raw.get("tolerances", {}).items()})
    for key in ("geometry", "skew", "jacobi"):
        if overrides.get(f"tol_{key}") is not None:
            tolerances[key] = float(overrides[f"tol_{key}"])
    for k, v in tolerances.items():
        if not v > 0:
            diags.append(Diagnostic(f"tolerances.{k}", "must be positive"))

    seed = overrides.get("seed", raw.get("seed"))
    if seed is None and any(s in suites for s in ("skew", "jacobi", "gateaux", "oracle")):
        diags.append(Diagnostic("seed", "a seed is required when random suites are requested"))

    limits = raw.get("limits", {})
    for key in ("max_depth", "max_chains"):
        if key in limits:
            LIMITS[key] = int(limits[key])

    if diags:
        raise ConfigError(diags)
    digest = hashlib.sha256(_canonical(raw).encode()).hexdigest()
    return RunConfig(
        raw=raw, source=source, name=str(raw.get("name", Path(source).stem)), n=n,
        constants={k: float(v) for k, v in raw.get("constants", {}).items()},
        omega=omega, subchart=(sub_lo, sub_hi), delta=float(chart.get("delta", 0.0)),
        base=base, radius=float(chart.get("radius", 1.0)),
        test_margin=float(chart.get("test_margin", 0.0)), grid=Grid(L, m),
        eps_tail=float(grid_cfg.get("eps_tail", EPS_TAIL)), bracket=bracket,
        functionals=functionals, test_functions=raw.get("test_functions", {}),
        suites=suites, tolerances=tolerances, seed=None if seed is None else int(seed),
        trials=int(overrides.get("trials") or suites_cfg.get("trials", 32)),
        samples=int(overrides.get("samples") or suites_cfg.get("samples", 50)), digest=digest)


def _canonical(obj: Any) -> str:
    if isinstance(obj, dict):
        return "{" + ",".join(f"{k!r}:{_canonical(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, list):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    return repr(obj)


# ----------------------------------------------------------- validation


def _lattice(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    axes = [np.linspace(a, b, 3) for a, b in zip(lo, hi)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])


def validate(cfg: RunConfig, samples: int = 32) -> list[Diagnostic]:
    """Semantic checks; every problem becomes a diagnostic rather than an exception."""
    diags: list[Diagnostic] = []
    n = cfg.n
    try:
        spec = cfg.spec()
    except ParseError as exc:
        return [Diagnostic("bracket", f"{exc} (at position {exc.position} of '{exc.source}')")]
    except (JetExprError, ValueError) as exc:
        return [Diagnostic("bracket", str(exc))]

    # subchart points: a fixed lattice (corners and midpoints) plus low-discrepancy points,
    # kept only if they lie in the chart so that validation probes the region actually used
    lo, hi = cfg.subchart
    pts = np.concatenate([_lattice(lo, hi), sample_points(samples, lo, hi, seed=cfg.seed or 0)], axis=1)
    inside = cfg.omega.contains(pts)
    if not inside.all():
        k = int(np.argmin(inside))
        diags.append(Diagnostic("chart.subchart_lo/subchart_hi",
                                f"subchart reaches outside the chart at z={pts[:, k].tolist()}"))
    pts = pts[:, inside] if inside.any() else pts

    def admissible(label, T):
        ok = True
        for idx in np.ndindex(T.shape):
            where = f"{label}[{']['.join(str(i) for i in idx)}]"
            try:
                vals = evaluate_tensor(np.array([T[idx]], dtype=object).reshape(()), pts)
            except EvaluationError as exc:
                diags.append(Diagnostic(where, f"not admissible on the subchart: {exc}"))
                ok = False
                continue
            bad = ~np.isfinite(vals)
            if bad.any():
                k = int(np.argmax(bad))
                diags.append(Diagnostic(where, f"non-finite value at z={pts[:, k].tolist()}"))
                ok = False
        return ok

    if admissible("bracket.g", spec.g):
        g = evaluate_tensor(spec.g, pts)
        asym = np.abs(g - np.swapaxes(g, 0, 1))
        if asym.max() > 1e-12 * max(1.0, np.abs(g).max()):
            i, j, k = np.unravel_index(np.argmax(asym), asym.shape)
            diags.append(Diagnostic(f"bracket.g[{i}][{j}]",
                                    f"g must be symmetric: g^{i + 1}{j + 1} != g^{j + 1}{i + 1} "
                                    f"at z={pts[:, k].tolist()}"))
        det = np.abs(np.linalg.det(np.moveaxis(g, (0, 1), (-2, -1))))
        scale = np.max(np.abs(g).reshape(-1, g.shape[-1]), axis=0) ** n
        sing = det <= 1e-12 * scale
        if sing.any():
            k = int(np.argmax(sing))
            diags.append(Diagnostic("bracket.g",
                                    f"metric singular at sampled point z={pts[:, k].tolist()}"))
    admissible("bracket.w", spec.w)
    admissible("bracket.gamma", spec.gamma)

    if cfg.omega.A.shape[0] and not np.all(cfg.omega.slack(cfg.base[:, None]) >= 0):
        diags.append(Diagnostic("chart.base", "base point lies outside the chart closure"))

    for name in cfg.test_functions:
        try:
            cfg.test_function(name)
        except ImageEscapesOmega as exc:
            diags.append(Diagnostic(f"test_functions.{name}", str(exc)))
        except (KeyError, ValueError, TypeError) as exc:
            diags.append(Diagnostic(f"test_functions.{name}", f"malformed: {exc}"))
    for name in cfg.functionals:
        try:
            cfg.functional(name)
        except ParseError as exc:
            diags.append(Diagnostic(f"functionals.{name}",
                                    f"{exc} (at position {exc.position} of '{exc.source}')"))
        except (JetExprError, ValueError) as exc:
            diags.append(Diagnostic(f"functionals.{name}", str(exc)))
    return diags
