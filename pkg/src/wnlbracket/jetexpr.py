"""Symbolic expressions on the jet space of maps R -> R^n.

An expression is an immutable tree over the independent variable ``x``,
jet variables ``u_j^{(i)}`` (field ``j`` counted from 1, derivative order
``i``), real constants, integer powers and the unary functions
exp, sin, cos, sqrt and ln.

Source syntax::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := base ('^' '-'? integer)?
    base   := number | 'x' | jetvar | func '(' expr ')' | '(' expr ')'

Jet variables are written ``u1``, ``u1_x``, ``u1_xx`` and ``u1_d3`` for
order three and above. When ``n <= 3`` the names ``u``, ``v`` and ``w``
alias ``u1``, ``u2`` and ``u3``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "JetExpr", "Const", "X", "Var", "Add", "Mul", "Pow", "Func",
    "JetPoint", "JetExprError", "ParseError", "EvaluationError",
    "parse", "evaluate", "d_partial", "d_total", "d_explicit_x", "simplify",
    "const", "add", "mul", "power", "func", "jet_vars", "max_order",
    "depends_on_x", "ZERO", "ONE", "FUNCTIONS",
]

FUNCTIONS = ("exp", "sin", "cos", "sqrt", "ln")
_ALIASES = {"u": 1, "v": 2, "w": 3}


class JetExprError(Exception):
    pass


class ParseError(JetExprError):
    def __init__(self, message: str, source: str, position: int):
        self.source = source
        self.position = position
        super().__init__(f"{message} at position {position}: "
                         f"{source!r}\n{' ' * (position + 1)}^")


class EvaluationError(JetExprError):
    def __init__(self, message: str, subexpr: "JetExpr"):
        self.subexpr = subexpr
        super().__init__(f"{message} in subexpression '{subexpr}'")


# ---------------------------------------------------------------- nodes


class JetExpr:
    """Base node. Structural equality and hashing are cached per node."""

    __slots__ = ("_key", "_hash")

    def _init(self, key: tuple) -> None:
        self._key = key
        self._hash = hash(key)

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, JetExpr) or self._hash != other._hash:
            return False
        return self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    def __setattr__(self, name, value):
        if hasattr(self, "_hash"):
            raise AttributeError("JetExpr nodes are immutable")
        object.__setattr__(self, name, value)

    def __str__(self) -> str:
        return _format(self)

    def __repr__(self) -> str:
        return f"JetExpr({_format(self)!r})"

    # arithmetic builds through the light-simplifying constructors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, mul(-1.0, _lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), mul(-1.0, self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return mul(self, power(_lift(other), -1))

    def __rtruediv__(self, other):
        return mul(_lift(other), power(self, -1))

    def __neg__(self):
        return mul(-1.0, self)

    def __pow__(self, n: int):
        if int(n) != n:
            raise JetExprError("only integer powers are supported")
        return power(self, int(n))


class Const(JetExpr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise JetExprError(f"non-finite constant {value}")
        object.__setattr__(self, "value", value)
        self._init(("c", value))


class X(JetExpr):
    __slots__ = ()

    def __init__(self):
        self._init(("x",))


class Var(JetExpr):
    """Jet variable u_field^{(order)}; ``field`` counts from 1."""

    __slots__ = ("field", "order")

    def __init__(self, field: int, order: int = 0):
        if field < 1 or order < 0:
            raise JetExprError(f"invalid jet variable ({field}, {order})")
        object.__setattr__(self, "field", int(field))
        object.__setattr__(self, "order", int(order))
        self._init(("u", self.field, self.order))


class Add(JetExpr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[JetExpr]):
        terms = tuple(terms)
        object.__setattr__(self, "terms", terms)
        self._init(("+",) + terms)


class Mul(JetExpr):
    __slots__ = ("factors",)

    def __init__(self, factors: Iterable[JetExpr]):
        factors = tuple(factors)
        object.__setattr__(self, "factors", factors)
        self._init(("*",) + factors)


class Pow(JetExpr):
    __slots__ = ("base", "exp")

    def __init__(self, base: JetExpr, exp: int):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exp", int(exp))
        self._init(("^", base, self.exp))


class Func(JetExpr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: JetExpr):
        if name not in FUNCTIONS:
            raise JetExprError(f"unknown function {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)
        self._init(("f", name, arg))


ZERO = Const(0.0)
ONE = Const(1.0)
_X = X()


def _lift(value) -> JetExpr:
    if isinstance(value, JetExpr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} in a JetExpr")


# --------------------------------------------------- smart constructors


def const(value: float) -> Const:
    return Const(value)


def add(*terms) -> JetExpr:
    """Sum with flattening, constant folding and zero removal."""
    out = []
    c = 0.0
    for t in map(_lift, terms):
        if isinstance(t, Add):
            parts = t.terms
        else:
            parts = (t,)
        for p in parts:
            if isinstance(p, Const):
                c += p.value
            else:
                out.append(p)
    if c != 0.0:
        out.append(Const(c))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Add(out)


def mul(*factors) -> JetExpr:
    """Product with flattening, constant folding and 0/1 identities."""
    out = []
    c = 1.0
    for f in map(_lift, factors):
        parts = f.factors if isinstance(f, Mul) else (f,)
        for p in parts:
            if isinstance(p, Const):
                if p.value == 0.0:
                    return ZERO
                c *= p.value
            else:
                out.append(p)
    if not out:
        return Const(c)
    if c != 1.0:
        out.insert(0, Const(c))
    if len(out) == 1:
        return out[0]
    return Mul(out)


def power(base, n: int) -> JetExpr:
    base = _lift(base)
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0.0 and n < 0):
        return Const(base.value ** n)
    if isinstance(base, Pow):
        return power(base.base, base.exp * n)
    return Pow(base, n)


def func(name: str, arg) -> JetExpr:
    arg = _lift(arg)
    if isinstance(arg, Const):
        v = _apply_scalar(name, arg.value)
        if v is not None:
            return Const(v)
    return Func(name, arg)


def _apply_scalar(name: str, v: float):
    if name == "exp":
        return math.exp(v)
    if name == "sin":
        return math.sin(v)
    if name == "cos":
        return math.cos(v)
    if name == "sqrt":
        return math.sqrt(v) if v >= 0 else None
    if name == "ln":
        return math.log(v) if v > 0 else None
    raise JetExprError(name)


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)

_JETVAR = re.compile(r"^(?:u(?P<idx>\d+)|(?P<alias>[uvw]))(?:_(?P<suffix>x+|d\d+))?$")


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


def _neg_raw(e: JetExpr) -> JetExpr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Mul):
        first = e.factors[0]
        if isinstance(first, Const):
            return Mul((Const(-first.value),) + e.factors[1:])
        return Mul((Const(-1.0),) + e.factors)
    return Mul((Const(-1.0), e))


class _Parser:
    def __init__(self, source: str, n: int, constants: Mapping[str, float]):
        self.source = source
        self.n = n
        self.constants = dict(constants or {})
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            raise ParseError(f"expected {value!r}, found {text or 'end of input'!r}",
                             self.source, pos)

    def parse(self) -> JetExpr:
        if self.peek()[0] == "end":
            raise ParseError("empty expression", self.source, 0)
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", self.source, pos)
        return e

    def expr(self) -> JetExpr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else _neg_raw(t))
        return terms[0] if len(terms) == 1 else Add(terms)

    def term(self) -> JetExpr:
        factors = [self.unary()]
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            f = self.unary()
            if op == "/":
                f = Pow(f.base, -f.exp) if isinstance(f, Pow) else Pow(f, -1)
            factors.append(f)
        if len(factors) == 1:
            return factors[0]
        if isinstance(factors[0], Mul):
            factors = list(factors[0].factors) + factors[1:]
        return Mul(factors)

    def unary(self) -> JetExpr:
        if self.peek()[1] == "-":
            self.take()
            return _neg_raw(self.unary())
        return self.power()

    def power(self) -> JetExpr:
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, pos = self.take()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be an integer", self.source, pos)
            return Pow(b, sign * int(text))
        return b

    def base(self) -> JetExpr:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            if text == "x":
                return _X
            if text in self.constants:
                return Const(self.constants[text])
            m = _JETVAR.match(text)
            if m is not None and (m.group("idx") or self.n <= 3):
                field = int(m.group("idx")) if m.group("idx") else _ALIASES[m.group("alias")]
                if field < 1 or field > self.n:
                    raise ParseError(f"field index {field} out of range 1..{self.n}",
                                     self.source, pos)
                suffix = m.group("suffix") or ""
                order = int(suffix[1:]) if suffix.startswith("d") else len(suffix)
                return Var(field, order)
            raise ParseError(f"unknown identifier {text!r}", self.source, pos)
        raise ParseError(f"unexpected token {text or 'end of input'!r}", self.source, pos)


def parse(source: str, n: int, constants: Mapping[str, float] | None = None) -> JetExpr:
    """Parse ``source`` into an expression over ``n`` fields.

    ``constants`` maps extra identifiers (model parameters) to numbers.
    The tree mirrors the source; call :func:`simplify` to normalise it.
    """
    if n < 1:
        raise JetExprError("field count must be at least 1")
    return _Parser(source, n, constants or {}).parse()


# ------------------------------------------------------------- printing


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt_var(e: Var) -> str:
    if e.order == 0:
        return f"u{e.field}"
    if e.order <= 2:
        return f"u{e.field}_" + "x" * e.order
    return f"u{e.field}_d{e.order}"


def _is_negative(e: JetExpr) -> bool:
    if isinstance(e, Const):
        return e.value < 0
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return e.factors[0].value < 0
    return False


def _negated(e: JetExpr) -> JetExpr:
    if isinstance(e, Const):
        return Const(-e.value)
    first, rest = e.factors[0], e.factors[1:]
    if first.value == -1.0 and not isinstance(rest[0], Const):
        return rest[0] if len(rest) == 1 else Mul(rest)
    return Mul((Const(-first.value),) + rest)


def _atom(e: JetExpr) -> str:
    if isinstance(e, (X, Var, Func)) or (isinstance(e, Const) and e.value >= 0):
        return _format(e)
    return f"({_format(e)})"


def _format(e: JetExpr) -> str:
    if isinstance(e, Const):
        return _fmt_num(e.value)
    if isinstance(e, X):
        return "x"
    if isinstance(e, Var):
        return _fmt_var(e)
    if isinstance(e, Func):
        return f"{e.name}({_format(e.arg)})"
    if isinstance(e, Pow):
        return f"{_atom(e.base)}^{e.exp}"
    if isinstance(e, Mul):
        parts = []
        factors = e.factors
        first = factors[0]
        if (isinstance(first, Const) and first.value == -1.0 and len(factors) > 1
                and not isinstance(factors[1], Const)):
            prefix = "-"
            factors = factors[1:]
        else:
            prefix = ""
        for k, f in enumerate(factors):
            if k > 0 and isinstance(f, Pow) and f.exp < 0:
                inv = f.base if f.exp == -1 else Pow(f.base, -f.exp)
                parts.append("/" + (_atom(inv) if not isinstance(inv, Pow) else _format(inv)))
                continue
            if isinstance(f, (Add, Mul)):
                s = f"({_format(f)})"
            elif isinstance(f, Const) and f.value < 0 and (k > 0 or prefix):
                s = f"({_format(f)})"
            elif isinstance(f, Pow) and k == 0 and f.exp < 0:
                s = _format(f)
            else:
                s = _format(f)
            parts.append(("*" if k > 0 else "") + s)
        return prefix + "".join(parts)
    if isinstance(e, Add):
        out = []
        for k, t in enumerate(e.terms):
            if k == 0:
                out.append(f"({_format(t)})" if isinstance(t, Add) else _format(t))
                continue
            if _is_negative(t):
                t2 = _negated(t)
                s = f"({_format(t2)})" if isinstance(t2, Add) or _is_negative(t2) else _format(t2)
                out.append(" - " + s)
            else:
                out.append(" + " + (f"({_format(t)})" if isinstance(t, Add) else _format(t)))
        return "".join(out)
    raise TypeError(type(e))


# ----------------------------------------------------------- evaluation


@dataclass(frozen=True)
class JetPoint:
    """Values of ``x`` and of the jets ``u_j^{(i)}``.

    ``jets[j-1, i]`` holds ``u_j^{(i)}``. Entries may be arrays of a common
    shape, in which case evaluation is vectorised over them.
    """

    x: float | np.ndarray
    jets: np.ndarray

    @property
    def n(self) -> int:
        return self.jets.shape[0]

    @property
    def max_order(self) -> int:
        return self.jets.shape[1] - 1

    @classmethod
    def from_values(cls, x, values: Mapping[tuple[int, int], float], n: int,
                    order: int) -> "JetPoint":
        jets = np.zeros((n, order + 1))
        for (j, i), val in values.items():
            jets[j - 1, i] = val
        return cls(x, jets)


def evaluate(e: JetExpr, p: JetPoint, memo: dict | None = None):
    """Evaluate ``e`` at ``p``; raises :class:`EvaluationError` on poles.

    A ``memo`` dict may be shared between calls at the same point so that
    structurally equal subexpressions are computed once.
    """
    if memo is None:
        memo = {}
    with np.errstate(all="ignore"):
        return _eval(e, p, memo)


def _eval(e: JetExpr, p: JetPoint, memo):
    key = e
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        r = e.value
    elif isinstance(e, X):
        r = p.x
    elif isinstance(e, Var):
        if e.field > p.n or e.order > p.max_order:
            raise EvaluationError(
                f"jet point lacks u{e.field}^({e.order}) (has n={p.n}, order={p.max_order})", e)
        r = p.jets[e.field - 1, e.order]
    elif isinstance(e, Add):
        r = _eval(e.terms[0], p, memo)
        for t in e.terms[1:]:
            r = r + _eval(t, p, memo)
    elif isinstance(e, Mul):
        r = _eval(e.factors[0], p, memo)
        for f in e.factors[1:]:
            r = r * _eval(f, p, memo)
    elif isinstance(e, Pow):
        b = _eval(e.base, p, memo)
        if e.exp < 0 and np.any(np.asarray(b) == 0):
            raise EvaluationError("division by zero", e.base)
        r = b ** e.exp if e.exp > 0 else 1.0 / (b ** -e.exp)
    elif isinstance(e, Func):
        a = _eval(e.arg, p, memo)
        if e.name == "exp":
            r = np.exp(a)
        elif e.name == "sin":
            r = np.sin(a)
        elif e.name == "cos":
            r = np.cos(a)
        elif e.name == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise EvaluationError("sqrt of a negative argument", e)
            r = np.sqrt(a)
        else:
            if np.any(np.asarray(a) <= 0):
                raise EvaluationError("ln of a non-positive argument", e)
            r = np.log(a)
    else:
        raise TypeError(type(e))
    memo[key] = r
    return r


# ------------------------------------------------------ differentiation


def _diff(e: JetExpr, leaf: Callable[[JetExpr], JetExpr], memo) -> JetExpr:
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        r = ZERO
    elif isinstance(e, (X, Var)):
        r = leaf(e)
    elif isinstance(e, Add):
        r = add(*(_diff(t, leaf, memo) for t in e.terms))
    elif isinstance(e, Mul):
        terms = []
        fs = e.factors
        for k, f in enumerate(fs):
            df = _diff(f, leaf, memo)
            if df is ZERO or (isinstance(df, Const) and df.value == 0.0):
                continue
            terms.append(mul(*fs[:k], df, *fs[k + 1:]))
        r = add(*terms)
    elif isinstance(e, Pow):
        db = _diff(e.base, leaf, memo)
        r = mul(float(e.exp), power(e.base, e.exp - 1), db)
    elif isinstance(e, Func):
        da = _diff(e.arg, leaf, memo)
        if isinstance(da, Const) and da.value == 0.0:
            r = ZERO
        elif e.name == "exp":
            r = mul(e, da)
        elif e.name == "sin":
            r = mul(func("cos", e.arg), da)
        elif e.name == "cos":
            r = mul(-1.0, func("sin", e.arg), da)
        elif e.name == "sqrt":
            r = mul(0.5, power(e, -1), da)
        else:
            r = mul(power(e.arg, -1), da)
    else:
        raise TypeError(type(e))
    memo[key] = r
    return r


def d_partial(e: JetExpr, j: int, i: int = 0) -> JetExpr:
    """Partial derivative with respect to the jet variable ``u_j^{(i)}``."""
    target = Var(j, i)

    def leaf(v):
        return ONE if v == target else ZERO

    return _diff(e, leaf, {})


def d_explicit_x(e: JetExpr) -> JetExpr:
    """Partial derivative with respect to the explicit ``x`` dependence."""
    return _diff(e, lambda v: ONE if isinstance(v, X) else ZERO, {})


def d_total(e: JetExpr) -> JetExpr:
    """Total x-derivative: each ``u_j^{(i)}`` becomes ``u_j^{(i+1)}``."""

    def leaf(v):
        if isinstance(v, X):
            return ONE
        return Var(v.field, v.order + 1)

    return _diff(e, leaf, {})


# -------------------------------------------------------------- queries


def _walk(e: JetExpr):
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        if isinstance(node, Add):
            stack.extend(node.terms)
        elif isinstance(node, Mul):
            stack.extend(node.factors)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, Func):
            stack.append(node.arg)


def jet_vars(e: JetExpr) -> set[tuple[int, int]]:
    return {(v.field, v.order) for v in _walk(e) if isinstance(v, Var)}


def max_order(e: JetExpr) -> int:
    """Highest derivative order present; -1 for expressions free of u."""
    return max((i for _, i in jet_vars(e)), default=-1)


def depends_on_x(e: JetExpr) -> bool:
    return any(isinstance(v, X) for v in _walk(e))


# ------------------------------------------------------------ simplify


def _split_coef(t: JetExpr) -> tuple[float, JetExpr]:
    if isinstance(t, Mul) and isinstance(t.factors[0], Const):
        rest = t.factors[1:]
        return t.factors[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return 1.0, t


def _split_pow(f: JetExpr) -> tuple[JetExpr, int]:
    if isinstance(f, Pow):
        return f.base, f.exp
    return f, 1


def _simplify_once(e: JetExpr, memo) -> JetExpr:
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, (Const, X, Var)):
        r = e
    elif isinstance(e, Func):
        r = func(e.name, _simplify_once(e.arg, memo))
    elif isinstance(e, Pow):
        b = _simplify_once(e.base, memo)
        if isinstance(b, Mul) and isinstance(b.factors[0], Const):
            c, rest = _split_coef(b)
            r = mul(c ** e.exp, power(rest, e.exp))
        else:
            r = power(b, e.exp)
    elif isinstance(e, Mul):
        flat = mul(*(_simplify_once(f, memo) for f in e.factors))
        if not isinstance(flat, Mul):
            r = flat
        else:
            c = 1.0
            exps: dict[JetExpr, int] = {}
            for f in flat.factors:
                if isinstance(f, Const):
                    c *= f.value
                    continue
                b, n = _split_pow(f)
                exps[b] = exps.get(b, 0) + n
            r = mul(c, *(power(b, n) for b, n in exps.items() if n != 0))
    elif isinstance(e, Add):
        flat = add(*(_simplify_once(t, memo) for t in e.terms))
        if not isinstance(flat, Add):
            r = flat
        else:
            c = 0.0
            coefs: dict[JetExpr, float] = {}
            for t in flat.terms:
                if isinstance(t, Const):
                    c += t.value
                    continue
                k, core = _split_coef(t)
                coefs[core] = coefs.get(core, 0.0) + k
            r = add(*(mul(k, core) for core, k in coefs.items() if k != 0.0), c)
    else:
        raise TypeError(type(e))
    memo[key] = r
    return r


def simplify(e: JetExpr, max_passes: int = 50) -> JetExpr:
    """Semantics-preserving normalisation, iterated to a fixed point.

    Folds constants, applies the 0/1 identities, flattens sums and
    products, collects like terms and merges powers of a common base.
    """
    for _ in range(max_passes):
        nxt = _simplify_once(e, {})
        if nxt == e:
            return nxt
        e = nxt
    return e
