"""Verification engine for weakly nonlocal Poisson brackets of hydrodynamic type."""

__version__ = "0.1.0"

from .jetexpr import JetExpr, JetPoint, d_partial, d_total, evaluate, parse, simplify
from .schwartz import (Grid, Omega, SampledFunction, TestFunction, dinv, integrate, jet,
                       make_test_function)
from .variational import (Functional, LinearFunctional, LocalDensity, WNLChain,
                          boundedness_check, eval_functional, gateaux_oracle,
                          variational_derivative_local, variational_derivative_wnl)
from .bracket import (BracketSpec, apply_P, bracket, jacobi_residual, skew_residual,
                      vd_of_bracket)
from .geometry import (coefficient_tensors, equivalence_audit, gpc_check, levi_civita,
                       riemann)

__all__ = [
    "JetExpr", "JetPoint", "parse", "evaluate", "d_partial", "d_total", "simplify",
    "Grid", "Omega", "SampledFunction", "TestFunction", "dinv", "integrate", "jet",
    "make_test_function", "Functional", "LinearFunctional", "LocalDensity", "WNLChain",
    "eval_functional", "variational_derivative_local", "variational_derivative_wnl",
    "gateaux_oracle", "boundedness_check", "BracketSpec", "apply_P", "bracket",
    "vd_of_bracket", "skew_residual", "jacobi_residual", "levi_civita", "riemann",
    "gpc_check", "coefficient_tensors", "equivalence_audit",
]
