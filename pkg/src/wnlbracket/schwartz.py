"""Test functions, grids, quadrature over R and the antiderivative d^{-1}.

Test functions are analytic: every component is a constant base value plus
a finite sum of terms ``p(x) exp(-a (x - c)^2)``. Derivatives of any order
stay in that class, so jets are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .jetexpr import JetExpr, JetPoint, X, add, func, mul, power

__all__ = [
    "GaussianTerm", "GaussianSum", "Omega", "TestFunction", "Grid",
    "SampledFunction", "ImageEscapesOmega", "integrate", "dinv", "jet",
    "make_test_function", "EPS_TAIL", "DEFAULT_L", "DEFAULT_M",
]

EPS_TAIL = 1e-14
DEFAULT_L = 12.0
DEFAULT_M = 4097


class ImageEscapesOmega(ValueError):
    """A test function leaves the chart."""

    def __init__(self, message, x=None, value=None, constraint=None):
        self.x = x
        self.value = value
        self.constraint = constraint
        super().__init__(message)


# ------------------------------------------------------------ functions


@dataclass(frozen=True)
class GaussianTerm:
    """``p(x) * exp(-a (x - c)^2)`` with ``p`` given by ascending coefficients."""

    coeffs: tuple[float, ...]
    a: float
    c: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"Gaussian rate must be positive, got {self.a}")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in self.coeffs))

    def derivative(self) -> "GaussianTerm":
        p = Polynomial(self.coeffs)
        q = p.deriv() - 2.0 * self.a * Polynomial([-self.c, 1.0]) * p
        return GaussianTerm(tuple(q.coef), self.a, self.c)

    def envelope(self, x):
        return np.exp(-self.a * (x - self.c) ** 2)

    def to_jetexpr(self) -> JetExpr:
        poly = add(*(mul(v, power(X(), k)) for k, v in enumerate(self.coeffs) if v != 0.0))
        arg = mul(-self.a, power(add(X(), -self.c), 2))
        return mul(poly, func("exp", arg))


@dataclass(frozen=True)
class GaussianSum:
    """Scalar Schwartz function: a finite sum of Gaussian terms."""

    terms: tuple[GaussianTerm, ...] = ()

    @classmethod
    def bump(cls, amplitude: float, a: float, c: float = 0.0) -> "GaussianSum":
        return cls((GaussianTerm((amplitude,), a, c),))

    @classmethod
    def from_spec(cls, terms: Iterable) -> "GaussianSum":
        if isinstance(terms, GaussianSum):
            return terms
        out = []
        for t in terms:
            if isinstance(t, GaussianTerm):
                out.append(t)
            elif isinstance(t, dict):
                coeffs = t.get("poly", [t.get("amp", 1.0)])
                out.append(GaussianTerm(tuple(coeffs), t["a"], t.get("c", 0.0)))
            else:
                coeffs, a, *rest = t
                coeffs = (coeffs,) if np.isscalar(coeffs) else tuple(coeffs)
                out.append(GaussianTerm(coeffs, a, rest[0] if rest else 0.0))
        return cls(tuple(out))

    def _derivative_terms(self, order: int) -> list[tuple[GaussianTerm, ...]]:
        cache = self.__dict__.setdefault("_dcache", [self.terms])
        while len(cache) <= order:
            cache.append(tuple(t.derivative() for t in cache[-1]))
        return cache

    def derivatives(self, x, maxorder: int) -> np.ndarray:
        """Array of shape ``(maxorder + 1,) + x.shape`` of exact derivatives."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((maxorder + 1,) + x.shape)
        levels = self._derivative_terms(maxorder)
        for k, term in enumerate(self.terms):
            env = term.envelope(x)
            for i in range(maxorder + 1):
                t = levels[i][k]
                out[i] += Polynomial(t.coeffs)(x) * env
        return out

    def __call__(self, x, order: int = 0):
        return self.derivatives(x, order)[order]

    def __add__(self, other: "GaussianSum") -> "GaussianSum":
        return GaussianSum(self.terms + other.terms)

    def __mul__(self, s: float) -> "GaussianSum":
        s = float(s)
        return GaussianSum(tuple(GaussianTerm(tuple(s * v for v in t.coeffs), t.a, t.c)
                                 for t in self.terms))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_jetexpr(self) -> JetExpr:
        return add(*(t.to_jetexpr() for t in self.terms))

    def search_radius(self) -> float:
        r = 0.0
        for t in self.terms:
            deg = max(len(t.coeffs) - 1, 0)
            amp = max(1.0, max(abs(v) for v in t.coeffs) if t.coeffs else 1.0)
            r = max(r, abs(t.c) + np.sqrt((40.0 + np.log(amp) + 4.0 * deg) / t.a) + 4.0)
        return r


# ---------------------------------------------------------------- chart


@dataclass(frozen=True)
class Omega:
    """Open polyhedral chart ``{z : A z > b}`` in R^n (no rows: all of R^n)."""

    n: int
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.zeros((0, self.n)) if self.A is None else np.atleast_2d(np.asarray(self.A, float))
        b = np.zeros(A.shape[0]) if self.b is None else np.atleast_1d(np.asarray(self.b, float))
        if A.shape != (b.shape[0], self.n):
            raise ValueError(f"constraint matrix shape {A.shape} does not fit n={self.n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        labels = tuple(self.labels) or tuple(_describe_row(r, v) for r, v in zip(A, b))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def whole(cls, n: int) -> "Omega":
        return cls(n)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "Omega":
        n = len(lo)
        rows, rhs = [], []
        for j in range(n):
            if np.isfinite(lo[j]):
                e = np.zeros(n)
                e[j] = 1.0
                rows.append(e)
                rhs.append(lo[j])
            if np.isfinite(hi[j]):
                e = np.zeros(n)
                e[j] = -1.0
                rows.append(e)
                rhs.append(-hi[j])
        return cls(n, np.array(rows).reshape(-1, n), np.array(rhs))

    def intersect(self, other: "Omega") -> "Omega":
        return Omega(self.n, np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]),
                     self.labels + other.labels)

    def slack(self, z: np.ndarray) -> np.ndarray:
        """Constraint values ``A z - b`` for points ``z`` of shape (n, ...)."""
        z = np.asarray(z, float)
        return np.tensordot(self.A, z, axes=(1, 0)) - self.b.reshape((-1,) + (1,) * (z.ndim - 1))

    def contains(self, z, margin: float = 0.0) -> np.ndarray:
        s = self.slack(z)
        if s.shape[0] == 0:
            return np.ones(np.asarray(z).shape[1:], bool)
        return np.all(s > margin, axis=0)

    def to_dict(self) -> dict:
        return {"n": self.n, "A": self.A.tolist(), "b": self.b.tolist()}


def _describe_row(row, rhs) -> str:
    parts = []
    for j, v in enumerate(row):
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        mag = "" if abs(v) == 1 else f"{abs(v):g}*"
        parts.append(f"{sign} {mag}u{j + 1}")
    lhs = " ".join(parts).lstrip("+ ").strip()
    return f"{lhs} > {rhs:g}"


# ------------------------------------------------------- test function


class TestFunction:
    """Element of S(Omega): ``u_j(x) = base_j + s_j(x)`` with ``s_j`` Schwartz.

    ``base`` is the point the function tends to at infinity (the origin of
    the translated chart). It is zero unless the chart excludes the origin.
    """

    __test__ = False  # not a pytest class

    def __init__(self, components: Sequence[GaussianSum], base: Sequence[float] | None = None,
                 omega: Omega | None = None, eps_tail: float = EPS_TAIL,
                 working_order: int = 8, name: str = ""):
        self.components = tuple(components)
        self.n = len(self.components)
        self.base = np.zeros(self.n) if base is None else np.asarray(base, float).copy()
        if self.base.shape != (self.n,):
            raise ValueError("base point dimension does not match the component count")
        self.omega = omega
        self.eps_tail = eps_tail
        self.working_order = working_order
        self.name = name

    def jets(self, x, maxorder: int) -> np.ndarray:
        """Exact jets, shape ``(n, maxorder + 1) + x.shape``."""
        x = np.asarray(x, float)
        out = np.empty((self.n, maxorder + 1) + x.shape)
        for j, comp in enumerate(self.components):
            out[j] = comp.derivatives(x, maxorder)
            out[j, 0] += self.base[j]
        return out

    def __call__(self, x, order: int = 0) -> np.ndarray:
        return self.jets(x, order)[:, order]

    @cached_property
    def l_cut(self) -> float:
        """Half-width outside which all jets up to the working order are below eps_tail."""
        radius = max((c.search_radius() for c in self.components), default=1.0)
        xs = np.linspace(-radius, radius, 8001)
        big = np.zeros(xs.shape, bool)
        for comp in self.components:
            d = comp.derivatives(xs, self.working_order)
            big |= np.any(np.abs(d) >= self.eps_tail, axis=0)
        if not big.any():
            return 0.0
        return float(np.max(np.abs(xs[big]))) + 2 * radius / 8000

    def check_image(self, omega: Omega | None = None, margin: float = 0.0,
                    half_width: float | None = None, points: int = 20001) -> None:
        omega = omega or self.omega
        if omega is None:
            return
        if omega.n != self.n:
            raise ValueError(f"chart dimension {omega.n} differs from test function's {self.n}")
        L = max(half_width or 0.0, self.l_cut, DEFAULT_L)
        xs = np.linspace(-L, L, points)
        z = self.jets(xs, 0)[:, 0]
        s = omega.slack(z)
        if s.shape[0] == 0:
            return
        bad = s <= margin
        if bad.any():
            row, k = np.unravel_index(np.argmin(s), s.shape)
            raise ImageEscapesOmega(
                f"test function {self.name or '<anonymous>'} leaves the chart: constraint "
                f"'{omega.labels[row]}' fails at x={xs[k]:.6g} where u={z[:, k].tolist()}",
                x=float(xs[k]), value=z[:, k].tolist(), constraint=omega.labels[row])

    def shifted(self, direction: "TestFunction", t: float) -> "TestFunction":
        """``self + t * direction`` (the direction's base point is ignored)."""
        comps = [a + b * t for a, b in zip(self.components, direction.components)]
        return TestFunction(comps, self.base, self.omega, self.eps_tail, self.working_order,
                            name=f"{self.name}+{t:g}*{direction.name}")

    def __repr__(self):
        return f"TestFunction(name={self.name!r}, n={self.n}, base={self.base.tolist()})"


def make_test_function(spec, omega: Omega | None = None, base=None, margin: float = 0.0,
                       name: str = "", eps_tail: float = EPS_TAIL) -> TestFunction:
    """Build a test function from ``spec``: a list of ``(component, terms)``.

    ``component`` counts from 1 and ``terms`` is accepted by
    :meth:`GaussianSum.from_spec`. Components not mentioned are zero. The
    image is checked against ``omega`` on a fine grid.
    """
    pairs = list(spec)
    n = omega.n if omega is not None else max(c for c, _ in pairs)
    comps = [GaussianSum() for _ in range(n)]
    for comp, terms in pairs:
        if not 1 <= comp <= n:
            raise ValueError(f"component {comp} out of range 1..{n}")
        comps[comp - 1] = comps[comp - 1] + GaussianSum.from_spec(terms)
    u = TestFunction(comps, base, omega, eps_tail=eps_tail, name=name)
    u.check_image(margin=margin)
    return u


def jet(u: TestFunction, x: float, maxorder: int) -> JetPoint:
    """Exact jet ``(x, u(x), u'(x), ..., u^{(maxorder)}(x))``."""
    return JetPoint(float(x), u.jets(np.asarray(float(x)), maxorder))


# ----------------------------------------------------------------- grid


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-L, L]`` with ``m`` nodes and trapezoid weights."""

    L: float = DEFAULT_L
    m: int = DEFAULT_M

    def __post_init__(self):
        if self.m < 2 or not self.L > 0:
            raise ValueError("grid needs m >= 2 and L > 0")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.m)

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.m - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.m, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def coarse(self) -> "Grid":
        if self.m % 2 == 0:
            raise ValueError("half-resolution grid needs an odd node count")
        return Grid(self.L, (self.m + 1) // 2)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Samples of an n-component function on a grid.

    ``derivative`` carries exact x-derivative samples when the producer knows
    them (analytic closures, chain identities); it is never obtained by
    differencing ``values``.
    """

    values: np.ndarray
    grid: Grid
    derivative: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape[-1] != self.grid.m:
            raise ValueError("sample count does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite samples ({self.provenance})")
        object.__setattr__(self, "values", v)
        if self.derivative is not None:
            d = np.asarray(self.derivative, float)
            object.__setattr__(self, "derivative", d.reshape(v.shape))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def component(self, j: int) -> "SampledFunction":
        d = None if self.derivative is None else self.derivative[j]
        return SampledFunction(self.values[j], self.grid, d, f"{self.provenance}[{j}]")


# ------------------------------------------------------------ quadrature


def _samples(f, grid: Grid) -> np.ndarray:
    v = f.values if isinstance(f, SampledFunction) else np.asarray(f, float)
    if v.ndim == 2:
        if v.shape[0] != 1:
            raise ValueError("expected a single-component function")
        v = v[0]
    if v.shape != (grid.m,):
        raise ValueError("sample count does not match the grid")
    return v


def _trapezoid(v: np.ndarray, h: float) -> float:
    return float(h * (np.sum(v[1:-1]) + 0.5 * (v[0] + v[-1])))


def integrate(f, grid: Grid, with_error: bool = False):
    """Trapezoid approximation of the integral over R.

    With ``with_error`` also returns the difference against the
    half-resolution grid (a conservative error estimate for Schwartz data).
    """
    v = _samples(f, grid)
    value = _trapezoid(v, grid.h)
    if not with_error:
        return value
    if grid.m % 2 == 1 and grid.m >= 5:
        err = abs(value - _trapezoid(v[::2], 2 * grid.h))
    else:
        err = float("nan")
    return value, err


_STENCIL = 8


@lru_cache(maxsize=None)
def _interval_weights(start: int, npts: int = _STENCIL) -> tuple[float, ...]:
    """Exact integrals over ``[start, start+1]`` of the Lagrange basis on nodes 0..npts-1."""
    nodes = [Fraction(q) for q in range(npts)]
    out = []
    for mnode in range(npts):
        coeffs = [Fraction(1)]
        denom = Fraction(1)
        for q in range(npts):
            if q == mnode:
                continue
            coeffs = [Fraction(0)] + coeffs
            for k in range(len(coeffs) - 1):
                coeffs[k] -= nodes[q] * coeffs[k + 1]
            denom *= nodes[mnode] - nodes[q]
        a, b = Fraction(start), Fraction(start + 1)
        integral = sum(c * (b ** (k + 1) - a ** (k + 1)) / (k + 1) for k, c in enumerate(coeffs))
        out.append(float(integral / denom))
    return tuple(out)


def _interval_integrals(v: np.ndarray, h: float) -> np.ndarray:
    """Integrals over each grid interval from local degree-7 interpolation."""
    m = v.shape[-1]
    if m < _STENCIL:
        return 0.5 * h * (v[..., 1:] + v[..., :-1])
    half = _STENCIL // 2
    out = np.empty(v.shape[:-1] + (m - 1,))
    w = _interval_weights(half - 1)
    lo, hi = half - 1, m - 1 - half  # interior intervals k in [lo, hi]
    acc = np.zeros(v.shape[:-1] + (hi - lo + 1,))
    for q, wq in enumerate(w):
        acc += wq * v[..., q:q + hi - lo + 1]
    out[..., lo:hi + 1] = acc
    for k in range(lo):
        out[..., k] = np.tensordot(v[..., :_STENCIL], _interval_weights(k), axes=(-1, 0))
    for k in range(hi + 1, m - 1):
        s = k - (m - _STENCIL)
        out[..., k] = np.tensordot(v[..., m - _STENCIL:], _interval_weights(s), axes=(-1, 0))
    return h * out


def dinv(f, grid: Grid) -> SampledFunction:
    """The symmetric antiderivative ``(1/2)(int_{-inf}^x f - int_x^{inf} f)``.

    Prefix and suffix sums of per-interval integrals are accumulated in
    extended precision; the result carries ``f`` as its derivative.
    """
    v = _samples(f, grid)
    pieces = _interval_integrals(v, grid.h).astype(np.longdouble)
    left = np.concatenate([[0.0], np.cumsum(pieces)])
    right = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    values = np.asarray(0.5 * (left - right), dtype=float)
    prov = f.provenance if isinstance(f, SampledFunction) else ""
    return SampledFunction(values, grid, derivative=v, provenance=f"dinv({prov})")


def dinv_array(v: np.ndarray, grid: Grid) -> np.ndarray:
    """:func:`dinv` on raw arrays, vectorised over leading axes."""
    pieces = _interval_integrals(np.asarray(v, float), grid.h).astype(np.longdouble)
    zeros = np.zeros(pieces.shape[:-1] + (1,), dtype=np.longdouble)
    left = np.concatenate([zeros, np.cumsum(pieces, axis=-1)], axis=-1)
    right = np.concatenate([np.flip(np.cumsum(np.flip(pieces, -1), axis=-1), -1), zeros], axis=-1)
    return np.asarray(0.5 * (left - right), dtype=float)


def random_test_function(rng: np.random.Generator, omega: Omega, base=None, *,
                         n_bumps: int = 3, radius: float = 1.0, margin: float = 0.0,
                         rate: tuple[float, float] = (0.5, 2.0),
                         centre: float = 2.0, name: str = "") -> TestFunction:
    """Random element of S(Omega) around ``base``.

    ``u = y + sum_m c_m exp(-a_m (x - x_m)^2) (z_m - y)`` with ``c_m > 0``,
    ``sum c_m <= 1`` and every ``z_m`` inside the chart, so ``u`` is a convex
    combination of ``y`` and chart points at every ``x``.
    """
    y = np.zeros(omega.n) if base is None else np.asarray(base, float)
    if omega.slack(y[:, None]).size and np.any(omega.slack(y[:, None]) < 0):
        raise ValueError(f"base point {y.tolist()} lies outside the chart")
    targets = []
    for _ in range(10000):
        z = y + rng.uniform(-radius, radius, omega.n)
        if omega.contains(z[:, None], margin)[0]:
            targets.append(z)
            if len(targets) == n_bumps:
                break
    else:
        raise ValueError("could not sample chart points near the base point")
    weights = rng.uniform(0.2, 1.0, n_bumps)
    weights *= rng.uniform(0.5, 1.0) / weights.sum()
    rates = rng.uniform(*rate, n_bumps)
    centres = rng.uniform(-centre, centre, n_bumps)
    comps = []
    for j in range(omega.n):
        comps.append(GaussianSum(tuple(
            GaussianTerm((weights[k] * (targets[k][j] - y[j]),), rates[k], centres[k])
            for k in range(n_bumps))))
    return TestFunction(comps, y, omega, name=name or "random")
