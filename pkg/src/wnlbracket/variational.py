"""Local and weakly nonlocal functionals and their variational derivatives.

A weakly nonlocal density has the form

    g * prod_alpha d^{-1}(h_{alpha,1} d^{-1}(h_{alpha,2} ... d^{-1}(h_{alpha,D}))).

Internally such densities, and everything derived from them, are kept as a
:class:`ChainSum`: a linear combination of terms ``jet * prod dinv(...)``
where ``jet`` is a :class:`JetExpr` and every ``dinv(...)`` wraps another
ChainSum. The total derivative acts symbolically, using
``D dinv(X) = X`` for the nonlocal factors, so sampled data is never
differenced. Numbers only appear at evaluation time, where every distinct
``dinv`` node is materialised once on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .jetexpr import (ONE, ZERO, Const, JetExpr, JetPoint, d_partial, d_total,
                      evaluate, max_order, mul, parse, simplify, add)
from .schwartz import (GaussianSum, GaussianTerm, Grid, SampledFunction,
                       TestFunction, dinv_array, integrate)

__all__ = [
    "LocalDensity", "WNLChain", "Functional", "LinearFunctional", "ChainSum",
    "DInvNode", "ChainEvaluator", "eval_functional", "variational_derivative",
    "variational_derivative_local", "variational_derivative_wnl",
    "gateaux", "gateaux_oracle", "GateauxResult", "boundedness_check",
    "BoundednessResult", "random_linear_functional", "LIMITS", "vd_of_density",
    "vd_chainsum", "density_chainsum",
]

LIMITS = {"max_depth": 3, "max_chains": 4}


# ------------------------------------------------------------ densities


@dataclass(frozen=True)
class LocalDensity:
    phi: JetExpr
    n: int

    @classmethod
    def parse(cls, source: str, n: int, constants=None) -> "LocalDensity":
        return cls(parse(source, n, constants), n)

    @property
    def order(self) -> int:
        """Highest jet order present (0 for densities free of u-derivatives)."""
        return max(max_order(self.phi), 0)

    def __str__(self):
        return str(self.phi)


@dataclass(frozen=True)
class WNLChain:
    """Outer density times a product of nested d^{-1} chains (innermost last)."""

    g: LocalDensity
    chains: tuple[tuple[LocalDensity, ...], ...] = ()

    def __post_init__(self):
        chains = tuple(tuple(c) for c in self.chains)
        object.__setattr__(self, "chains", chains)
        if len(chains) > LIMITS["max_chains"]:
            raise ValueError(f"{len(chains)} chains exceed the limit {LIMITS['max_chains']}")
        for c in chains:
            if not c:
                raise ValueError("every chain needs at least one density")
            if len(c) > LIMITS["max_depth"]:
                raise ValueError(f"chain depth {len(c)} exceeds the limit {LIMITS['max_depth']}")
            for h in c:
                if h.n != self.g.n:
                    raise ValueError("all densities of a chain must share the field count")

    @property
    def n(self) -> int:
        return self.g.n

    @classmethod
    def local(cls, g: LocalDensity) -> "WNLChain":
        return cls(g, ())


@dataclass(frozen=True)
class Functional:
    """Finite linear combination of WNL chains, integrated over R."""

    parts: tuple[tuple[float, WNLChain], ...]
    name: str = ""

    @classmethod
    def of(cls, chain: Union[WNLChain, LocalDensity], name: str = "") -> "Functional":
        if isinstance(chain, LocalDensity):
            chain = WNLChain.local(chain)
        return cls(((1.0, chain),), name)

    @classmethod
    def parse(cls, g: str, chains: Sequence[Sequence[str]] = (), n: int = 1,
              name: str = "", constants=None) -> "Functional":
        chain = WNLChain(LocalDensity.parse(g, n, constants),
                         tuple(tuple(LocalDensity.parse(h, n, constants) for h in c)
                               for c in chains))
        return cls.of(chain, name)

    @property
    def n(self) -> int:
        return self.parts[0][1].n

    def __add__(self, other: "Functional") -> "Functional":
        return Functional(self.parts + other.parts, f"{self.name}+{other.name}")

    def __mul__(self, s: float) -> "Functional":
        return Functional(tuple((s * c, ch) for c, ch in self.parts), f"{s:g}*{self.name}")

    __rmul__ = __mul__


@dataclass(frozen=True)
class LinearFunctional:
    """``F(u) = int alpha_i(x) u^i(x) dx`` with Gaussian-sum coefficients."""

    coefficients: tuple[GaussianSum, ...]
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.coefficients)

    def coefficient_exprs(self) -> list[JetExpr]:
        return [c.to_jetexpr() for c in self.coefficients]

    def samples(self, grid: Grid, order: int = 1) -> np.ndarray:
        """Coefficients and derivatives, shape ``(n, order + 1, m)``."""
        return np.stack([c.derivatives(grid.nodes, order) for c in self.coefficients])

    def as_functional(self) -> Functional:
        from .jetexpr import Var
        phi = add(*(mul(a, Var(i + 1, 0)) for i, a in enumerate(self.coefficient_exprs())))
        return Functional.of(LocalDensity(phi, self.n), self.name)


def random_linear_functional(rng: np.random.Generator, n: int, L: float, bumps: int = 3,
                             spread: float = 0.25, name: str = "") -> LinearFunctional:
    """Seeded coefficients: sums of Gaussian bumps ``A exp(-((x - c)/w)^2)``.

    Amplitudes lie in [-1, 1], widths in [0.5, 2] and centres in
    ``[-spread*2L, spread*2L]``, keeping the tails far below the grid edges.
    """
    coeffs = []
    for _ in range(n):
        amp = rng.uniform(-1.0, 1.0, bumps)
        width = rng.uniform(0.5, 2.0, bumps)
        centre = rng.uniform(-spread * L, spread * L, bumps)
        coeffs.append(GaussianSum(tuple(GaussianTerm((a,), 1.0 / w ** 2, c)
                                        for a, w, c in zip(amp, width, centre))))
    return LinearFunctional(tuple(coeffs), name or "linear")


# ------------------------------------------------------- chain algebra


class DInvNode:
    """The factor ``d^{-1}(arg)``."""

    __slots__ = ("arg", "_hash")

    def __init__(self, arg: "ChainSum"):
        self.arg = arg
        self._hash = hash(("dinv", arg))

    def __eq__(self, other):
        return self is other or (isinstance(other, DInvNode) and self._hash == other._hash
                                 and self.arg == other.arg)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"dinv({self.arg!r})"


Term = tuple  # (coef: float, jet: JetExpr, nodes: tuple[DInvNode, ...])


def _split(jet: JetExpr) -> tuple[float, JetExpr]:
    from .jetexpr import Mul
    if isinstance(jet, Const):
        return jet.value, ONE
    if isinstance(jet, Mul) and isinstance(jet.factors[0], Const):
        return jet.factors[0].value, mul(*jet.factors[1:])
    return 1.0, jet


class ChainSum:
    """Sum of ``coef * jet * prod(dinv nodes)`` terms with like terms merged."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Iterable[Term] = ()):
        merged: dict = {}
        for c, j, nodes in terms:
            if c == 0.0 or j == ZERO:
                continue
            k, j = _split(j)
            c *= k
            nodes = tuple(sorted(nodes, key=hash))
            key = (j, nodes)
            merged[key] = merged.get(key, 0.0) + c
        self.terms = tuple((c, j, nodes) for (j, nodes), c in merged.items() if c != 0.0)
        self._hash = hash(self.terms)

    @classmethod
    def jet(cls, e: JetExpr) -> "ChainSum":
        return cls([(1.0, e, ())])

    @classmethod
    def one(cls) -> "ChainSum":
        return cls.jet(ONE)

    @classmethod
    def dinv(cls, arg: "ChainSum") -> "ChainSum":
        if not arg.terms:
            return cls()
        return cls([(1.0, ONE, (DInvNode(arg),))])

    def __eq__(self, other):
        return self is other or (isinstance(other, ChainSum) and self._hash == other._hash
                                 and self.terms == other.terms)

    def __hash__(self):
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    def __add__(self, other: "ChainSum") -> "ChainSum":
        return ChainSum(self.terms + other.terms)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s: float) -> "ChainSum":
        return ChainSum((s * c, j, n) for c, j, n in self.terms)

    def __mul__(self, other) -> "ChainSum":
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        if isinstance(other, JetExpr):
            other = ChainSum.jet(other)
        return ChainSum((c1 * c2, mul(j1, j2), n1 + n2)
                        for c1, j1, n1 in self.terms for c2, j2, n2 in other.terms)

    __rmul__ = __mul__

    def D(self) -> "ChainSum":
        """Total x-derivative, with ``D dinv(X) = X``."""
        out: list[Term] = []
        for c, j, nodes in self.terms:
            dj = simplify(d_total(j))
            if dj != ZERO:
                out.append((c, dj, nodes))
            for m, node in enumerate(nodes):
                rest = nodes[:m] + nodes[m + 1:]
                for c2, j2, n2 in node.arg.terms:
                    out.append((c * c2, mul(j, j2), rest + n2))
        return ChainSum(out)

    def minus_D_power(self, k: int) -> "ChainSum":
        """``(-D)^k`` applied to this sum."""
        out = self
        for _ in range(k):
            out = -out.D()
        return out

    def max_order(self) -> int:
        best = -1
        for _, j, nodes in self.terms:
            best = max(best, max_order(j))
            for node in nodes:
                best = max(best, node.arg.max_order())
        return best

    def size(self) -> int:
        return len(self.terms) + sum(node.arg.size() for _, _, ns in self.terms for node in ns)

    def __repr__(self):
        parts = []
        for c, j, nodes in self.terms:
            s = f"{c:g}*({j})"
            parts.extend([s] if not nodes else [s + "*" + "*".join(map(repr, nodes))])
        return " + ".join(parts) or "0"


class ChainEvaluator:
    """Samples ChainSums along a test function on a grid, caching dinv nodes."""

    def __init__(self, u: TestFunction, grid: Grid):
        self.u = u
        self.grid = grid
        self._order = -1
        self._point: JetPoint | None = None
        self._memo: dict = {}
        self._nodes: dict = {}
        self._orders: dict = {}

    def point(self, order: int) -> JetPoint:
        if order > self._order:
            order = max(order, 2 * self._order, 2)
            self._point = JetPoint(self.grid.nodes, self.u.jets(self.grid.nodes, order))
            self._order = order
            self._memo = {}
        return self._point

    def jet(self, e: JetExpr) -> np.ndarray:
        order = self._orders.get(e)
        if order is None:
            order = self._orders[e] = max(max_order(e), 0)
        p = self.point(order)
        v = evaluate(e, p, self._memo)
        return np.broadcast_to(np.asarray(v, float), (self.grid.m,))

    def node(self, node: DInvNode) -> np.ndarray:
        hit = self._nodes.get(node)
        if hit is None:
            hit = self._nodes[node] = dinv_array(self.sum(node.arg), self.grid)
        return hit

    def sum(self, cs: ChainSum) -> np.ndarray:
        out = np.zeros(self.grid.m)
        for c, j, nodes in cs.terms:
            t = c * self.jet(j)
            for node in nodes:
                t = t * self.node(node)
            out += t
        return out

    def sampled(self, components: Sequence[ChainSum], provenance: str = "",
                with_derivative: bool = True) -> SampledFunction:
        values = np.stack([self.sum(c) for c in components])
        deriv = np.stack([self.sum(c.D()) for c in components]) if with_derivative else None
        return SampledFunction(values, self.grid, deriv, provenance)


# --------------------------------------------------- symbolic assembly


def _chain_hats(chain: Sequence[LocalDensity]) -> list[ChainSum]:
    """``hat[d]`` for d = 1..D+1 (index 0 unused): hat[D+1] = 1, hat[d] = dinv(h_d hat[d+1])."""
    D = len(chain)
    hats = [ChainSum()] * (D + 2)
    hats[D + 1] = ChainSum.one()
    for d in range(D, 0, -1):
        hats[d] = ChainSum.dinv(ChainSum.jet(chain[d - 1].phi) * hats[d + 1])
    return hats


def density_chainsum(F: Union[Functional, WNLChain, LocalDensity]) -> ChainSum:
    if isinstance(F, LocalDensity):
        return ChainSum.jet(F.phi)
    if isinstance(F, WNLChain):
        out = ChainSum.jet(F.g.phi)
        for c in F.chains:
            out = out * _chain_hats(c)[1]
        return out
    out = ChainSum()
    for coef, ch in F.parts:
        out = out + density_chainsum(ch).scale(coef)
    return out


def _euler_lagrange(phi: JetExpr, l: int, weight: ChainSum) -> ChainSum:
    """``sum_i (-D)^i [dphi/du_l^{(i)} * weight]``."""
    out = ChainSum()
    for i in range(max(max_order(phi), 0) + 1):
        dphi = simplify(d_partial(phi, l, i))
        if dphi == ZERO:
            continue
        out = out + (weight * dphi).minus_D_power(i)
    return out


def vd_chainsum(F: Union[Functional, WNLChain, LocalDensity], l: int) -> ChainSum:
    """Variational derivative with respect to ``u_l`` as a ChainSum."""
    if isinstance(F, LocalDensity):
        return _euler_lagrange(F.phi, l, ChainSum.one())
    if isinstance(F, Functional):
        out = ChainSum()
        for coef, ch in F.parts:
            out = out + vd_chainsum(ch, l).scale(coef)
        return out
    hats = [_chain_hats(c) for c in F.chains]
    H = [h[1] for h in hats]
    prod_all = ChainSum.one()
    for h in H:
        prod_all = prod_all * h
    out = _euler_lagrange(F.g.phi, l, prod_all)
    for a, chain in enumerate(F.chains):
        A = ChainSum.jet(F.g.phi)
        for b, h in enumerate(H):
            if b != a:
                A = A * h
        check = ChainSum.dinv(A)  # check^1(A)
        for d, h_d in enumerate(chain, start=1):
            if d > 1:
                check = ChainSum.dinv(ChainSum.jet(chain[d - 2].phi) * check)
            weight = check * hats[a][d + 1]
            out = out + _euler_lagrange(h_d.phi, l, weight).scale((-1.0) ** d)
    return out


def vd_of_density(cs: ChainSum, l: int, weight: ChainSum | None = None) -> ChainSum:
    """Variational derivative of ``int weight * cs`` with ``weight`` held fixed.

    Works for any ChainSum density: a factor ``dinv(X)`` is moved onto the
    rest of the term by ``int A dinv(B) = -int dinv(A) B`` and the recursion
    continues into ``X``.
    """
    weight = ChainSum.one() if weight is None else weight
    out = ChainSum()
    for c, j, nodes in cs.terms:
        out = out + _euler_lagrange(j, l, weight * ChainSum([(c, ONE, nodes)]))
        for m, node in enumerate(nodes):
            rest = ChainSum([(c, j, nodes[:m] + nodes[m + 1:])])
            out = out + vd_of_density(node.arg, l, ChainSum.dinv(weight * rest).scale(-1.0))
    return out


# ----------------------------------------------------------- numerics


FunctionalLike = Union[Functional, WNLChain, LocalDensity, LinearFunctional]


def eval_functional(F: FunctionalLike, u: TestFunction, grid: Grid) -> float:
    """``int f dx`` with nested chains materialised innermost first."""
    if isinstance(F, LinearFunctional):
        a = F.samples(grid, 0)[:, 0]
        return integrate(np.sum(a * u.jets(grid.nodes, 0)[:, 0], axis=0), grid)
    cs = density_chainsum(F)
    if not cs:
        return 0.0
    return integrate(ChainEvaluator(u, grid).sum(cs), grid)


def variational_derivative_local(f: LocalDensity, u: TestFunction, grid: Grid) -> SampledFunction:
    """Euler-Lagrange expression ``sum_i (-D)^i df/du_j^{(i)}`` sampled along u."""
    ev = ChainEvaluator(u, grid)
    comps = [_euler_lagrange(f.phi, l, ChainSum.one()) for l in range(1, f.n + 1)]
    return ev.sampled(comps, f"vd_local({f})")


def variational_derivative_wnl(F: Union[WNLChain, Functional], u: TestFunction,
                               grid: Grid) -> SampledFunction:
    """R + sum of T terms, sampled; the derivative channel is exact."""
    ev = ChainEvaluator(u, grid)
    comps = [vd_chainsum(F, l) for l in range(1, F.n + 1)]
    return ev.sampled(comps, f"vd_wnl({getattr(F, 'name', '')})")


def variational_derivative(F: FunctionalLike, u: TestFunction, grid: Grid) -> SampledFunction:
    if isinstance(F, LinearFunctional):
        s = F.samples(grid, 1)
        return SampledFunction(s[:, 0], grid, s[:, 1], f"vd_linear({F.name})")
    if isinstance(F, LocalDensity):
        return variational_derivative_local(F, u, grid)
    return variational_derivative_wnl(F, u, grid)


@dataclass(frozen=True)
class GateauxResult:
    value: float
    error: float
    steps: tuple[float, float]


def gateaux(fn: Callable[[TestFunction], float], u: TestFunction, k: TestFunction,
            steps: tuple[float, float] = (1e-3, 5e-4), check_image: bool = True) -> GateauxResult:
    """Central differences at two steps combined by Richardson extrapolation."""
    diffs = []
    for t in steps:
        plus, minus = u.shifted(k, t), u.shifted(k, -t)
        if check_image:
            plus.check_image()
            minus.check_image()
        diffs.append((fn(plus) - fn(minus)) / (2.0 * t))
    r = (steps[0] / steps[1]) ** 2
    extrap = diffs[1] + (diffs[1] - diffs[0]) / (r - 1.0)
    return GateauxResult(float(extrap), float(abs(extrap - diffs[1])), tuple(steps))


def gateaux_oracle(F: FunctionalLike, u: TestFunction, k: TestFunction, grid: Grid,
                   steps: tuple[float, float] = (1e-3, 5e-4)) -> GateauxResult:
    return gateaux(lambda v: eval_functional(F, v, grid), u, k, steps)


@dataclass(frozen=True)
class BoundednessResult:
    sup: float
    verdict: str
    edge_values: tuple[tuple[float, float], ...]


def boundedness_check(F: FunctionalLike, u: TestFunction, grid: Grid) -> BoundednessResult:
    """Empirical sup of the variational derivative over the whole grid."""
    vd = variational_derivative(F, u, grid).values
    finite = bool(np.all(np.isfinite(vd)))
    sup = float(np.max(np.abs(vd))) if finite else float("inf")
    edges = tuple((float(c[0]), float(c[-1])) for c in vd)
    return BoundednessResult(sup, f"bounded <= {sup:.6g}" if finite else "unbounded", edges)
