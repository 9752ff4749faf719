"""Pointwise differential geometry of a hydrodynamic-type bracket.

Tensors are stored with fixed index placement and no implicit raising or
lowering:

* ``g[i, j]``      contravariant metric ``g^{ij}``
* ``gamma[j, s, k]`` connection ``Gamma^j_{sk}``
* ``w[i, j]``      the (1,1) tensor ``w^i_j``
* a leading axis ``q`` on a derivative array means ``d/du^q``.

Symbolic tensors are numpy object arrays of :class:`JetExpr` in the order-0
jet variables. Numeric tensors carry the sample axes last.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .jetexpr import (ZERO, JetExpr, JetPoint, add, const, d_partial, evaluate,
                      mul, parse, power, simplify)
from .schwartz import Omega

__all__ = [
    "symbolic_tensor", "partials", "evaluate_tensor", "covariant_metric",
    "levi_civita", "riemann", "TensorFields", "PointTensors", "riemann_values",
    "gpc_residuals", "gpc_check", "GeometryReport", "coefficient_tensors",
    "equivalence_audit", "sample_points", "CONDITIONS",
]

CONDITIONS = ("g_symmetry", "nondegeneracy", "compatibility", "GPC:1", "GPC:2", "GPC:3", "GPC:4")


# ------------------------------------------------------------ symbolic


def symbolic_tensor(entries, n: int, constants: Mapping[str, float] | None = None) -> np.ndarray:
    """Object array of JetExpr from nested lists of strings or numbers."""
    arr = np.array(entries, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        v = arr[idx]
        if isinstance(v, JetExpr):
            out[idx] = v
        elif isinstance(v, str):
            out[idx] = parse(v, n, constants)
        else:
            out[idx] = const(float(v))
    return out


def zeros_tensor(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def partials(T: np.ndarray, n: int) -> np.ndarray:
    """``out[q, ...] = dT/du^{q+1}``."""
    out = np.empty((n,) + T.shape, dtype=object)
    for q in range(n):
        for idx in np.ndindex(T.shape):
            out[(q,) + idx] = simplify(d_partial(T[idx], q + 1, 0))
    return out


def evaluate_tensor(T: np.ndarray, z: np.ndarray, memo: dict | None = None) -> np.ndarray:
    """Evaluate a symbolic tensor at points ``z`` of shape ``(n,) + S``."""
    z = np.asarray(z, float)
    sample_shape = z.shape[1:]
    point = JetPoint(0.0, z[:, None])
    memo = {} if memo is None else memo
    out = np.empty(T.shape + sample_shape)
    for idx in np.ndindex(T.shape):
        out[idx] = np.broadcast_to(evaluate(T[idx], point, memo), sample_shape)
    return out


def _det(M: np.ndarray) -> JetExpr:
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    if n == 2:
        return add(mul(M[0, 0], M[1, 1]), mul(-1.0, M[0, 1], M[1, 0]))
    terms = []
    for c in range(n):
        minor = np.delete(np.delete(M, 0, 0), c, 1)
        terms.append(mul((-1.0) ** c, M[0, c], _det(minor)))
    return add(*terms)


def covariant_metric(g: np.ndarray) -> np.ndarray:
    """Symbolic inverse ``g_{ij}`` through the adjugate."""
    n = g.shape[0]
    inv_det = power(simplify(_det(g)), -1)
    out = np.empty((n, n), dtype=object)
    if n == 1:
        out[0, 0] = inv_det
        return out
    for i, j in itertools.product(range(n), repeat=2):
        minor = np.delete(np.delete(g, j, 0), i, 1)
        out[i, j] = simplify(mul((-1.0) ** (i + j), _det(minor), inv_det))
    return out


def levi_civita(g: np.ndarray) -> np.ndarray:
    """Christoffel symbols ``Gamma^k_{ij}`` of the contravariant metric ``g``.

    Derivatives of the covariant metric come from
    ``d_k g_{ij} = -g_{ia} (d_k g^{ab}) g_{bj}``, so only the given entries
    are ever differentiated.
    """
    n = g.shape[0]
    low = covariant_metric(g)
    dg = partials(g, n)
    dlow = np.empty((n, n, n), dtype=object)  # dlow[q, i, j] = d_q g_{ij}
    for q, i, j in itertools.product(range(n), repeat=3):
        dlow[q, i, j] = simplify(mul(-1.0, add(*(mul(low[i, a], dg[q, a, b], low[b, j])
                                                 for a in range(n) for b in range(n)))))
    gamma = np.empty((n, n, n), dtype=object)
    for k, i, j in itertools.product(range(n), repeat=3):
        gamma[k, i, j] = simplify(mul(0.5, add(*(
            mul(g[k, l], add(dlow[i, j, l], dlow[j, i, l], mul(-1.0, dlow[l, i, j])))
            for l in range(n)))))
    return gamma


def riemann(g: np.ndarray, gamma: np.ndarray, dgamma: np.ndarray | None = None) -> np.ndarray:
    """``R^{ij}_{pk} = g^{is}(d_k G^j_{sp} - d_p G^j_{sk} + G^l_{sp} G^j_{lk} - G^l_{sk} G^j_{lp})``."""
    n = g.shape[0]
    dG = partials(gamma, n) if dgamma is None else dgamma
    R = np.empty((n,) * 4, dtype=object)
    for i, j, p, k in itertools.product(range(n), repeat=4):
        terms = []
        for s in range(n):
            if g[i, s] == ZERO:
                continue
            inner = [dG[k, j, s, p], mul(-1.0, dG[p, j, s, k])]
            for l in range(n):
                inner.append(mul(gamma[l, s, p], gamma[j, l, k]))
                inner.append(mul(-1.0, gamma[l, s, k], gamma[j, l, p]))
            terms.append(mul(g[i, s], add(*inner)))
        R[i, j, p, k] = add(*terms)
    return R


# ------------------------------------------------------------- numeric


@dataclass
class PointTensors:
    """Numeric tensors and first u-derivatives at a batch of points."""

    g: np.ndarray
    dg: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    w: np.ndarray
    dw: np.ndarray

    @property
    def n(self) -> int:
        return self.g.shape[0]


class TensorFields:
    """Symbolic ``(g, Gamma, w)`` with cached symbolic partial derivatives."""

    def __init__(self, g: np.ndarray, gamma: np.ndarray, w: np.ndarray):
        self.g, self.gamma, self.w = g, gamma, w
        self.n = g.shape[0]

    @cached_property
    def dg(self):
        return partials(self.g, self.n)

    @cached_property
    def dgamma(self):
        return partials(self.gamma, self.n)

    @cached_property
    def dw(self):
        return partials(self.w, self.n)

    @cached_property
    def riemann(self):
        return riemann(self.g, self.gamma, self.dgamma)

    def at(self, z: np.ndarray) -> PointTensors:
        memo: dict = {}
        ev = lambda T: evaluate_tensor(T, z, memo)
        return PointTensors(ev(self.g), ev(self.dg), ev(self.gamma), ev(self.dgamma),
                            ev(self.w), ev(self.dw))


def riemann_values(t: PointTensors) -> np.ndarray:
    G, dG = t.gamma, t.dgamma
    inner = (np.einsum("kjsp...->jspk...", dG) - np.einsum("pjsk...->jspk...", dG)
             + np.einsum("lsp...,jlk...->jspk...", G, G)
             - np.einsum("lsk...,jlp...->jspk...", G, G))
    return np.einsum("is...,jspk...->ijpk...", t.g, inner)


def _wedge(w: np.ndarray) -> np.ndarray:
    """``w^i_p w^j_k - w^i_k w^j_p`` indexed ``[i, j, p, k]``."""
    return np.einsum("ip...,jk...->ijpk...", w, w) - np.einsum("ik...,jp...->ijpk...", w, w)


def compatibility_values(t: PointTensors) -> np.ndarray:
    """``d_k g^{ij} + g^{is} G^j_{sk} + g^{js} G^i_{sk}`` indexed ``[i, j, k]``."""
    gG = np.einsum("is...,jsk...->ijk...", t.g, t.gamma)
    return np.einsum("kij...->ijk...", t.dg) + gG + np.einsum("jik...->ijk...", gG)


def codazzi_values(t: PointTensors) -> np.ndarray:
    """``nabla_p w^j_k - nabla_k w^j_p`` indexed ``[j, p, k]``."""
    nab = (np.einsum("pjk...->jpk...", t.dw)
           + np.einsum("jps...,sk...->jpk...", t.gamma, t.w)
           - np.einsum("skp...,js...->jpk...", t.gamma, t.w))
    return nab - np.einsum("jpk...->jkp...", nab)


def gpc_residuals(t: PointTensors) -> dict[str, np.ndarray]:
    """Per-sample residual magnitudes (max over indices) for every condition."""
    def mx(a, k):
        return np.max(np.abs(a.reshape((-1,) + a.shape[k:])), axis=0)

    det = np.linalg.det(np.moveaxis(t.g, (0, 1), (-2, -1)))
    R = riemann_values(t)
    gw = np.einsum("ip...,pl...->il...", t.w, t.g)
    return {
        "g_symmetry": mx(t.g - np.swapaxes(t.g, 0, 1), 2),
        "nondegeneracy": np.abs(det),
        "compatibility": mx(compatibility_values(t), 3),
        "GPC:1": mx(t.gamma - np.swapaxes(t.gamma, 1, 2), 3),
        "GPC:2": mx(R - _wedge(t.w), 4),
        "GPC:3": mx(gw - np.swapaxes(gw, 0, 1), 2),
        "GPC:4": mx(codazzi_values(t), 3),
    }


@dataclass
class GeometryReport:
    residuals: dict[str, float]
    worst_points: dict[str, list[float]]
    verdicts: dict[str, bool]
    tolerance: float
    samples: int
    coefficient_residuals: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def failing(self) -> list[str]:
        return [k for k, ok in self.verdicts.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "samples": self.samples, "tolerance": self.tolerance,
            "residuals": self.residuals, "worst_points": self.worst_points,
            "verdicts": self.verdicts, "coefficient_residuals": self.coefficient_residuals,
            "passed": self.passed, "notes": self.notes,
        }


def gpc_check(fields: TensorFields, samples: np.ndarray, tol: float = 1e-8,
              nondegeneracy_floor: float = 1e-12, ux_seed: int = 0) -> GeometryReport:
    """Evaluate every condition at ``samples`` (shape ``(n, N)``)."""
    samples = np.asarray(samples, float)
    t = fields.at(samples)
    res = gpc_residuals(t)
    residuals, worst, verdicts = {}, {}, {}
    for name, vals in res.items():
        if name == "nondegeneracy":
            k = int(np.argmin(vals))
            residuals[name] = float(vals[k])
            verdicts[name] = bool(vals[k] > nondegeneracy_floor)
        else:
            k = int(np.argmax(vals))
            residuals[name] = float(vals[k])
            verdicts[name] = bool(vals[k] <= tol)
        worst[name] = samples[:, k].tolist()
    ux = np.random.default_rng(ux_seed).uniform(-1.0, 1.0, samples.shape)
    coef = coefficient_tensors(t, ux)
    coef_res = coefficient_residuals(coef)
    notes = ["a and c are measured contracted with a random tangent u_x, as they enter the "
             "Jacobi integrand"]
    return GeometryReport(residuals, worst, verdicts, tol, samples.shape[1], coef_res, notes)


def coefficient_residuals(coef: dict[str, np.ndarray]) -> dict[str, float]:
    """Max magnitudes; a and c use their contractions with u_x."""
    pick = {"a": "a_ux", "b": "b", "c": "c_ux", "d": "d", "e": "e", "m": "m"}
    return {k: float(np.max(np.abs(coef[v]))) for k, v in pick.items()}


def coefficient_tensors(t: PointTensors, ux: np.ndarray, printed_b: bool = False) -> dict[str, np.ndarray]:
    """The Jacobi-integrand coefficients a, b, c, d, e, m at points with tangent ``ux``.

    ``a_ux`` and ``c_ux`` are the contractions with ``ux`` over the last
    lower index, the combinations that actually multiply the test
    functions. ``b`` is returned in the form that matches the integrand; ``printed_b``
    switches the sign of its first block back to the typeset variant.
    """
    g, G, w, dw = t.g, t.gamma, t.w, t.dw
    R = riemann_values(t)
    Q = (np.einsum("vs...,ivp...,jsk...->ijpk...", g, G, G)
         - np.einsum("vs...,ivk...,jsp...->ijpk...", g, G, G))
    X = Q + R - _wedge(w)
    first = (np.einsum("is...,jsp...,pv...,lvk...->ijlk...", g, G, g, G)
             - np.einsum("is...,lsp...,pv...,jvk...->ijlk...", g, G, g, G))
    Xg = np.einsum("jlpk...,pi...->ijlk...", X, g)
    b = (first if printed_b else -first) + Xg
    d = (np.einsum("js...,lsp...,pi...->ijl...", g, G, g)
         - np.einsum("is...,lsp...,pj...->ijl...", g, G, g))
    curl = np.einsum("pjk...->jpk...", dw) - np.einsum("kjp...->jpk...", dw)  # d_p w^j_k - d_k w^j_p
    e = (np.einsum("ip...,pa...,jak...->ijk...", w, g, G)
         - np.einsum("jpk...,pi...->ijk...", curl, g)
         - np.einsum("is...,jsp...,pk...->ijk...", g, G, w))
    m = np.einsum("ip...,pj...->ij...", w, g) - np.einsum("jp...,pi...->ij...", w, g)
    Y = np.einsum("ijpk...,pa...,lab...,b...->ijlk...", X, g, G, ux)
    a = Y + np.einsum("jlik...->ijlk...", Y) + np.einsum("lijk...->ijlk...", Y)
    curl_ux = np.einsum("jpb...,b...->jp...", curl, ux)
    c = (np.einsum("jp...,pa...,lak...->jlk...", curl_ux, g, G)
         + np.einsum("jlpb...,b...,pk...->jlk...", X, ux, w)
         - np.einsum("lp...,pa...,jak...->jlk...", curl_ux, g, G))
    return {"a": a, "b": b, "c": c, "d": d, "e": e, "m": m,
            "a_ux": np.einsum("ijlk...,k...->ijl...", a, ux),
            "c_ux": np.einsum("jlk...,k...->jl...", c, ux)}


def equivalence_audit(fields: TensorFields, samples: np.ndarray, tol: float = 1e-8,
                      tol_gpc: float | None = None) -> dict:
    """Per-sample check of (b, d, e, m vanish) <=> (GPC:1-4 hold)."""
    tol_gpc = tol if tol_gpc is None else tol_gpc
    samples = np.asarray(samples, float)
    t = fields.at(samples)
    coef = coefficient_tensors(t, np.zeros_like(samples))
    res = gpc_residuals(t)
    def mx(a, k):
        return np.max(np.abs(a.reshape((-1,) + a.shape[k:])), axis=0)
    coef_side = np.max(np.stack([mx(coef["b"], 4), mx(coef["d"], 3), mx(coef["e"], 3),
                                 mx(coef["m"], 2)]), axis=0)
    gpc_side = np.max(np.stack([res[k] for k in ("GPC:1", "GPC:2", "GPC:3", "GPC:4")]), axis=0)
    coef_pass = coef_side <= tol
    gpc_pass = gpc_side <= tol_gpc
    bad = np.nonzero(coef_pass != gpc_pass)[0]
    mismatches = [{"point": samples[:, k].tolist(), "coefficients": float(coef_side[k]),
                   "gpc": float(gpc_side[k])} for k in bad]
    return {"samples": int(samples.shape[1]), "mismatches": mismatches,
            "coefficients_pass": int(coef_pass.sum()), "gpc_pass": int(gpc_pass.sum()),
            "holds": not mismatches}


def sample_points(count: int, lo: Sequence[float], hi: Sequence[float], omega: Omega | None = None,
                  margin: float = 0.0, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the box ``[lo, hi]`` at distance > margin from the chart boundary."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    sampler = qmc.Halton(d=lo.size, scramble=True, seed=seed)
    out = []
    while sum(len(o) for o in out) < count:
        pts = qmc.scale(sampler.random(max(2 * count, 16)), lo, hi).T
        if omega is not None and omega.A.shape[0]:
            norms = np.linalg.norm(omega.A, axis=1)[:, None]
            ok = np.all(omega.slack(pts) / norms > margin, axis=0)
            pts = pts[:, ok]
        out.append(pts.T)
        if len(out) > 100:
            raise ValueError("subchart box has no points inside the chart")
    return np.concatenate(out)[:count].T
