"""Weakly nonlocal brackets of hydrodynamic type.

The operator is

    P^{ij} = g^{ij} D - g^{is} Gamma^j_{sk} u_x^k + w^i_k u_x^k d^{-1} w^j_l u_x^l

and ``{F, G}(u) = int dF/du_i (P^{ij} dG/du_j) dx``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .geometry import (PointTensors, TensorFields, compatibility_values, levi_civita,
                       riemann_values, symbolic_tensor, zeros_tensor)
from .jetexpr import ZERO, Var, add, mul, simplify
from .schwartz import (Grid, Omega, SampledFunction, TestFunction, dinv_array, integrate,
                       random_test_function)
from .variational import (ChainEvaluator, ChainSum, FunctionalLike,
                          gateaux, random_linear_functional, variational_derivative,
                          vd_chainsum, vd_of_density)

__all__ = [
    "BracketSpec", "Residual", "PreconditionError", "MissingDerivativeError",
    "apply_P", "bracket", "vd_of_bracket", "vd_of_bracket_general", "skew_residual",
    "jacobi_residual", "skew_defect", "bracket_density", "nonlinear_jacobi",
    "trial_rng", "oracle_equivalence",
]


class PreconditionError(ValueError):
    """An operation was called on a spec that violates its precondition."""


class MissingDerivativeError(ValueError):
    """A sampled function without an exact derivative channel was passed to P."""


@dataclass
class BracketSpec:
    """Coefficients of the operator P on a chart.

    ``base`` is the point test functions tend to at infinity and ``radius``
    bounds how far random test functions stray from it.
    """

    n: int
    g: np.ndarray
    gamma: np.ndarray
    w: np.ndarray
    omega: Omega
    base: np.ndarray
    provenance: str = "supplied"
    name: str = ""
    margin: float = 0.0
    radius: float = 1.0

    @classmethod
    def build(cls, n: int, g, w=None, gamma=None, omega: Omega | None = None, base=None,
              constants: Mapping[str, float] | None = None, name: str = "",
              margin: float = 0.0, radius: float = 1.0) -> "BracketSpec":
        gs = symbolic_tensor(g, n, constants)
        ws = zeros_tensor((n, n)) if w is None else symbolic_tensor(w, n, constants)
        if gamma is None:
            gam, prov = levi_civita(gs), "levi-civita"
        else:
            gam, prov = symbolic_tensor(gamma, n, constants), "supplied"
        for T, shape, what in ((gs, (n, n), "g"), (ws, (n, n), "w"), (gam, (n, n, n), "Gamma")):
            if T.shape != shape:
                raise ValueError(f"{what} has shape {T.shape}, expected {shape}")
        omega = Omega.whole(n) if omega is None else omega
        base = np.zeros(n) if base is None else np.asarray(base, float)
        return cls(n, gs, gam, ws, omega, base, prov, name, margin, radius)

    @cached_property
    def fields(self) -> TensorFields:
        return TensorFields(self.g, self.gamma, self.w)

    def along(self, u: TestFunction, grid: Grid) -> tuple[PointTensors, np.ndarray]:
        """Tensors at ``u(x)`` for every grid node, and ``u_x``."""
        j = u.jets(grid.nodes, 1)
        return self.fields.at(j[:, 0]), j[:, 1]

    def random_point_function(self, rng: np.random.Generator) -> TestFunction:
        return random_test_function(rng, self.omega, self.base, radius=self.radius,
                                    margin=self.margin)


# ---------------------------------------------------------------- core


def _gtilde(t: PointTensors) -> np.ndarray:
    """``g^{is} Gamma^j_{sk}`` indexed ``[i, j, k]``."""
    return np.einsum("is...,jsk...->ijk...", t.g, t.gamma)


def _apply(t: PointTensors, ux: np.ndarray, v: np.ndarray, dv: np.ndarray, grid: Grid):
    W = np.einsum("ik...,k...->i...", t.w, ux)
    tail = dinv_array(np.einsum("j...,j...->...", W, v), grid)
    return (np.einsum("ij...,j...->i...", t.g, dv)
            - np.einsum("ijk...,k...,j...->i...", _gtilde(t), ux, v)
            + W * tail)


def apply_P(spec: BracketSpec, u: TestFunction, v: SampledFunction, grid: Grid) -> SampledFunction:
    """``(P v)^i`` sampled on the grid; ``v`` must carry its exact derivative."""
    if v.derivative is None:
        raise MissingDerivativeError(
            f"P needs D_x of its argument; '{v.provenance or 'samples'}' has no derivative channel")
    t, ux = spec.along(u, grid)
    return SampledFunction(_apply(t, ux, v.values, v.derivative, grid), grid, None,
                           f"P({v.provenance})")


def bracket(spec: BracketSpec, F: FunctionalLike, G: FunctionalLike, u: TestFunction,
            grid: Grid) -> float:
    f = variational_derivative(F, u, grid)
    Pg = apply_P(spec, u, variational_derivative(G, u, grid), grid)
    return integrate(np.sum(f.values * Pg.values, axis=0), grid)


def skew_defect(spec: BracketSpec, u: TestFunction, grid: Grid) -> float:
    """Largest violation of g-symmetry or compatibility along ``u``, relative to |g|."""
    t, _ = spec.along(u, grid)
    scale = max(1.0, float(np.max(np.abs(t.g))))
    sym = float(np.max(np.abs(t.g - np.swapaxes(t.g, 0, 1))))
    comp = float(np.max(np.abs(compatibility_values(t))))
    return max(sym, comp) / scale


def _linear_parts(F, u: TestFunction, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    s = variational_derivative(F, u, grid)
    if s.derivative is None:
        raise MissingDerivativeError("variational derivative lacks a derivative channel")
    return s.values, s.derivative


def vd_of_bracket(spec: BracketSpec, F: FunctionalLike, G: FunctionalLike, u: TestFunction,
                  grid: Grid, skew_tol: float = 1e-9) -> SampledFunction:
    """Closed-form variational derivative of ``{F, G}`` for linear F, G.

    Valid for skew-symmetric brackets only; the precondition is checked along
    ``u`` first. Curvature and connection products are evaluated exactly and
    the two tails ``f~ = d^{-1}(w^i_k u_x^k f_i)``, ``g~`` by quadrature.
    """
    defect = skew_defect(spec, u, grid)
    if defect > skew_tol:
        raise PreconditionError(
            f"bracket '{spec.name}' is not skew-symmetric along u (defect {defect:.3g}); "
            "use vd_of_bracket_general")
    f, fp = _linear_parts(F, u, grid)
    b, bp = _linear_parts(G, u, grid)
    t, ux = spec.along(u, grid)
    g, G_, w, dw = t.g, t.gamma, t.w, t.dw
    R = riemann_values(t)
    ft = dinv_array(np.einsum("ik...,k...,i...->...", w, ux, f), grid)
    bt = dinv_array(np.einsum("jk...,k...,j...->...", w, ux, b), grid)
    curl = np.einsum("pik...->ikp...", dw) - np.einsum("kip...->ikp...", dw)  # d_p w^i_k - d_k w^i_p
    out = (np.einsum("i...,is...,jsp...,j...->p...", fp, g, G_, b)
           - np.einsum("i...,sj...,isp...,j...->p...", f, g, G_, bp)
           + np.einsum("i...,k...,j...,ijpk...->p...", f, ux, b, R)
           + np.einsum("i...,k...,j...,sl...,isp...,jlk...->p...", f, ux, b, g, G_, G_)
           - np.einsum("i...,k...,j...,sl...,isk...,jlp...->p...", f, ux, b, g, G_, G_)
           + np.einsum("i...,k...,ik...,jp...,j...->p...", f, ux, w, w, b)
           - np.einsum("i...,k...,ip...,jk...,j...->p...", f, ux, w, w, b)
           + (np.einsum("i...,k...,ikp...->p...", f, ux, curl)
              - np.einsum("i...,ip...->p...", fp, w)) * bt
           - (np.einsum("j...,k...,jkp...->p...", b, ux, curl)
              - np.einsum("j...,jp...->p...", bp, w)) * ft)
    return SampledFunction(out, grid, None, "vd_bracket")


def vd_of_bracket_general(spec: BracketSpec, F: FunctionalLike, G: FunctionalLike,
                          u: TestFunction, grid: Grid) -> SampledFunction:
    """Variational derivative of ``{F, G}`` for linear F, G without assuming skew-symmetry."""
    f, fp = _linear_parts(F, u, grid)
    b, bp = _linear_parts(G, u, grid)
    t, ux = spec.along(u, grid)
    g, dg, G_, dG, w, dw = t.g, t.dg, t.gamma, t.dgamma, t.w, t.dw
    gt = _gtilde(t)                                                   # [i, j, k]
    dgt = (np.einsum("pis...,jsk...->pijk...", dg, G_)
           + np.einsum("is...,pjsk...->pijk...", g, dG))              # d_p of gt
    ft = dinv_array(np.einsum("ik...,k...,i...->...", w, ux, f), grid)
    bt = dinv_array(np.einsum("jk...,k...,j...->...", w, ux, b), grid)
    curl = np.einsum("pik...->ikp...", dw) - np.einsum("kip...->ikp...", dw)
    out = (np.einsum("i...,pij...,j...->p...", f, dg, bp)
           - np.einsum("i...,pijk...,k...,j...->p...", f, dgt, ux, b)
           + np.einsum("i...,j...,ijp...->p...", fp, b, gt)
           + np.einsum("i...,j...,ijp...->p...", f, bp, gt)
           + np.einsum("i...,j...,kijp...,k...->p...", f, b, dgt, ux)
           + np.einsum("i...,k...,ik...,jp...,j...->p...", f, ux, w, w, b)
           - np.einsum("i...,k...,ip...,jk...,j...->p...", f, ux, w, w, b)
           + (np.einsum("i...,k...,ikp...->p...", f, ux, curl)
              - np.einsum("i...,ip...->p...", fp, w)) * bt
           - (np.einsum("j...,k...,jkp...->p...", b, ux, curl)
              - np.einsum("j...,jp...->p...", bp, w)) * ft)
    return SampledFunction(out, grid, None, "vd_bracket_general")


# ----------------------------------------------------------- residuals


@dataclass
class Residual:
    """Worst normalised residual over seeded trials."""

    value: float
    tolerance: float
    witness: dict
    trials: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def to_dict(self) -> dict:
        return {"value": self.value, "tolerance": self.tolerance, "passed": self.passed,
                "witness": self.witness, "trials": self.trials, "notes": self.notes}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, derived from ``(seed, trial)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _trial(spec: BracketSpec, seed: int, trial: int, count: int, grid: Grid):
    rng = trial_rng(seed, trial)
    u = spec.random_point_function(rng)
    fs = [random_linear_functional(rng, spec.n, grid.L, name=nm) for nm in "FGH"[:count]]
    return u, fs


def skew_residual(spec: BracketSpec, trials: int = 32, seed: int = 0, grid: Grid | None = None,
                  tol: float = 1e-7) -> Residual:
    """max |{F,G} + {G,F}| / max(1, |{F,G}|, |{G,F}|) over random linear F, G."""
    grid = grid or Grid()
    vals, worst = [], None
    for k in range(trials):
        u, (F, G) = _trial(spec, seed, k, 2, grid)
        fg, gf = bracket(spec, F, G, u, grid), bracket(spec, G, F, u, grid)
        r = abs(fg + gf) / max(1.0, abs(fg), abs(gf))
        vals.append(r)
        if worst is None or r > vals[worst]:
            worst = k
    return Residual(max(vals), tol, {"seed": seed, "trial": worst, "functionals": ["F", "G"]},
                    vals)


def jacobi_residual(spec: BracketSpec, trials: int = 32, seed: int = 0, grid: Grid | None = None,
                    tol: float = 1e-6, skew_tol: float = 1e-7) -> Residual:
    """max |sum_cyc {{F,G},H}| / max(1, |{F,G}|, |{G,H}|, |{H,F}|) over random linear F, G, H.

    The inner variational derivative is the closed form of
    :func:`vd_of_bracket`; the outer pairing applies P to dH/du.
    """
    grid = grid or Grid()
    skew = skew_residual(spec, min(trials, 4), seed, grid, skew_tol)
    if not skew.passed:
        return Residual(float("inf"), tol, {"seed": seed, "trial": None},
                        notes=[f"skipped: skew residual {skew.value:.3g} exceeds {skew_tol:g}"])
    vals, worst = [], None
    for k in range(trials):
        u, fs = _trial(spec, seed, k, 3, grid)
        total, scale = 0.0, 1.0
        for A, B, C in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            vd = vd_of_bracket(spec, fs[A], fs[B], u, grid)
            Pc = apply_P(spec, u, variational_derivative(fs[C], u, grid), grid)
            total += integrate(np.sum(vd.values * Pc.values, axis=0), grid)
            scale = max(scale, abs(bracket(spec, fs[A], fs[B], u, grid)))
        r = abs(total) / scale
        vals.append(r)
        if worst is None or r > vals[worst]:
            worst = k
    return Residual(max(vals), tol, {"seed": seed, "trial": worst,
                                     "functionals": ["F", "G", "H"]}, vals)


def oracle_equivalence(spec: BracketSpec, trials: int = 4, seed: int = 0,
                       grid: Grid | None = None, tol: float = 5e-5) -> Residual:
    """Closed-form dB/du paired with a direction vs a finite-difference Gateaux derivative.

    Uses :func:`vd_of_bracket` when the spec is skew-symmetric and
    :func:`vd_of_bracket_general` otherwise; the error is relative to
    ``1 + |oracle|``.
    """
    grid = grid or Grid()
    vals, worst, routes = [], None, set()
    for k in range(trials):
        u, (F, G) = _trial(spec, seed, k, 2, grid)
        rng = trial_rng(seed, 10_000 + k)
        direction = random_test_function(rng, Omega.whole(spec.n))
        try:
            vd = vd_of_bracket(spec, F, G, u, grid)
            routes.add("closed form")
        except PreconditionError:
            vd = vd_of_bracket_general(spec, F, G, u, grid)
            routes.add("general")
        paired = integrate(np.sum(vd.values * direction.jets(grid.nodes, 0)[:, 0], axis=0), grid)
        oracle = gateaux(lambda v: bracket(spec, F, G, v, grid), u, direction)
        r = abs(paired - oracle.value) / (1.0 + abs(oracle.value))
        vals.append(r)
        if worst is None or r > vals[worst]:
            worst = k
    return Residual(max(vals), tol, {"seed": seed, "trial": worst}, vals,
                    [f"route: {', '.join(sorted(routes))}"])


# ------------------------------------------------- nonlinear spot check


def _P_symbolic(spec: BracketSpec, v: Sequence[ChainSum]) -> list[ChainSum]:
    n = spec.n
    W = [add(*(mul(spec.w[i, k], Var(k + 1, 1)) for k in range(n))) for i in range(n)]
    tail = ChainSum()
    for j in range(n):
        tail = tail + v[j] * W[j]
    tail = ChainSum.dinv(tail)
    out = []
    dv = [vj.D() for vj in v]
    for i in range(n):
        acc = ChainSum()
        for j in range(n):
            if spec.g[i, j] != ZERO:
                acc = acc + dv[j] * spec.g[i, j]
            gt = add(*(mul(spec.g[i, s], spec.gamma[j, s, k], Var(k + 1, 1))
                       for s in range(n) for k in range(n)))
            gt = simplify(gt)
            if gt != ZERO:
                acc = acc - v[j] * gt
        if W[i] != ZERO:
            acc = acc + tail * W[i]
        out.append(acc)
    return out


def bracket_density(spec: BracketSpec, F, G) -> ChainSum:
    """Density of ``{F, G}`` as a ChainSum, for local or WNL functionals F, G."""
    f = [vd_chainsum(F, l) for l in range(1, spec.n + 1)]
    Pg = _P_symbolic(spec, [vd_chainsum(G, l) for l in range(1, spec.n + 1)])
    out = ChainSum()
    for i in range(spec.n):
        out = out + f[i] * Pg[i]
    return out


def nonlinear_jacobi(spec: BracketSpec, F, G, H, u: TestFunction, grid: Grid) -> dict:
    """Jacobi cyclic sum for general functionals, through symbolic bracket densities."""
    fs = (F, G, H)
    ev = ChainEvaluator(u, grid)
    total, scale = 0.0, 1.0
    for A, B, C in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        dens = bracket_density(spec, fs[A], fs[B])
        scale = max(scale, abs(integrate(ev.sum(dens), grid)))
        vd = [vd_of_density(dens, l) for l in range(1, spec.n + 1)]
        Pc = _P_symbolic(spec, [vd_chainsum(fs[C], l) for l in range(1, spec.n + 1)])
        total += integrate(sum(ev.sum(vd[i]) * ev.sum(Pc[i]) for i in range(spec.n)), grid)
    return {"value": abs(total) / scale, "raw": total, "scale": scale}
