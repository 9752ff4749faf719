import numpy as np
import pytest

from wnlbracket.bracket import (BracketSpec, MissingDerivativeError, PreconditionError, apply_P,
                                bracket, jacobi_residual, nonlinear_jacobi, oracle_equivalence,
                                skew_residual, trial_rng, vd_of_bracket, vd_of_bracket_general)
from wnlbracket.config import load_config
from wnlbracket.schwartz import Grid, Omega, SampledFunction, integrate, random_test_function
from wnlbracket.variational import (Functional, random_linear_functional,
                                    variational_derivative)

GRID = Grid(12.0, 4097)
CORPUS = ["gardner.cfg", "flat2d.cfg", "example_constant_curvature.cfg", "broken_gauss.cfg",
          "broken_gamma.cfg"]


@pytest.fixture(scope="module")
def specs():
    return {name: load_config(name).spec() for name in CORPUS}


def test_gardner_operator_is_the_x_derivative():
    spec = BracketSpec.build(1, [["1"]])
    u = random_test_function(np.random.default_rng(0), Omega.whole(1))
    kdv = Functional.parse("u^3 + 0.5*u_x^2", n=1)
    Pv = apply_P(spec, u, variational_derivative(kdv, u, GRID), GRID).values[0]
    j = u.jets(GRID.nodes, 3)[0]
    assert np.max(np.abs(Pv - (6 * j[0] * j[1] - j[3]))) <= 1e-10


def test_constant_coefficient_bracket_of_linear_functionals():
    spec = BracketSpec.build(1, [["1"]])
    rng = np.random.default_rng(1)
    u = random_test_function(rng, Omega.whole(1))
    F, G = (random_linear_functional(rng, 1, GRID.L) for _ in range(2))
    f, gd = F.samples(GRID, 1)[0], G.samples(GRID, 1)[0]
    assert abs(bracket(spec, F, G, u, GRID) - integrate(f[0] * gd[1], GRID)) <= 1e-14


def test_nonlocal_tail_matches_direct_quadrature():
    # P = w u_x dinv w u_x with w = 1 and g = 0 part removed: {F,G} = int f u_x dinv(u_x g)
    spec = BracketSpec.build(1, [["0"]], w=[["1"]])
    rng = np.random.default_rng(2)
    u = random_test_function(rng, Omega.whole(1))
    F, G = (random_linear_functional(rng, 1, GRID.L) for _ in range(2))
    ux = u.jets(GRID.nodes, 1)[0, 1]
    f, g = F.samples(GRID, 0)[0, 0], G.samples(GRID, 0)[0, 0]
    from wnlbracket.schwartz import dinv
    direct = integrate(f * ux * dinv(ux * g, GRID).values[0], GRID)
    assert abs(bracket(spec, F, G, u, GRID) - direct) <= 1e-14


def test_operator_needs_a_derivative_channel(specs):
    spec = specs["gardner.cfg"]
    u = spec.random_point_function(trial_rng(0, 0))
    with pytest.raises(MissingDerivativeError):
        apply_P(spec, u, SampledFunction(np.zeros(GRID.m), GRID), GRID)


@pytest.mark.parametrize("name", ["gardner.cfg", "flat2d.cfg", "example_constant_curvature.cfg",
                                  "broken_gauss.cfg"])
def test_skew_symmetric_specs(specs, name):
    res = skew_residual(specs[name], trials=6, seed=3, grid=GRID)
    assert res.passed and res.value <= 1e-12, res.value


def test_asymmetric_connection_breaks_skew_symmetry(specs):
    res = skew_residual(specs["broken_gamma.cfg"], trials=6, seed=3, grid=GRID)
    assert not res.passed


def test_nonlinear_functionals_are_skew_under_gardner(specs):
    spec = specs["gardner.cfg"]
    kdv = Functional.parse("u^3 + 0.5*u_x^2", n=1)
    depth = Functional.parse("u^2", [["u"]], n=1)
    for k in range(3):
        u = spec.random_point_function(trial_rng(4, k))
        a, b = bracket(spec, kdv, depth, u, GRID), bracket(spec, depth, kdv, u, GRID)
        assert abs(a + b) <= 1e-12 * max(1.0, abs(a))


def test_jacobi_holds_on_the_example(specs):
    res = jacobi_residual(specs["example_constant_curvature.cfg"], trials=6, seed=5, grid=GRID)
    assert res.passed and res.value <= 1e-10


def test_jacobi_fails_under_gauss_defect(specs):
    res = jacobi_residual(specs["broken_gauss.cfg"], trials=6, seed=5, grid=GRID)
    assert res.value >= 1e-2


def test_jacobi_is_skipped_without_skew_symmetry(specs):
    res = jacobi_residual(specs["broken_gamma.cfg"], trials=4, seed=5, grid=GRID)
    assert res.value == float("inf") and "skipped" in res.notes[0]


def test_closed_form_refuses_non_skew_spec(specs):
    spec = specs["broken_gamma.cfg"]
    rng = trial_rng(6, 0)
    u = spec.random_point_function(rng)
    F, G = (random_linear_functional(rng, 2, GRID.L) for _ in range(2))
    with pytest.raises(PreconditionError):
        vd_of_bracket(spec, F, G, u, GRID)


@pytest.mark.parametrize("name", ["flat2d.cfg", "example_constant_curvature.cfg",
                                  "broken_gauss.cfg"])
def test_general_route_agrees_with_closed_form(specs, name):
    spec = specs[name]
    rng = trial_rng(7, 0)
    u = spec.random_point_function(rng)
    F, G = (random_linear_functional(rng, spec.n, GRID.L) for _ in range(2))
    a = vd_of_bracket(spec, F, G, u, GRID).values
    b = vd_of_bracket_general(spec, F, G, u, GRID).values
    assert np.max(np.abs(a - b)) <= 1e-10 * (1 + np.max(np.abs(a)))


@pytest.mark.parametrize("name", CORPUS)
def test_bracket_derivative_matches_gateaux_oracle(specs, name):
    res = oracle_equivalence(specs[name], trials=2, seed=8, grid=GRID)
    assert res.passed, res.value


def test_nonlinear_jacobi_on_the_example():
    cfg = load_config("example_constant_curvature.cfg")
    spec = cfg.spec()
    F, G, H = (cfg.functional(n) for n in ("f1", "f2", "f3"))
    u = spec.random_point_function(trial_rng(9, 0))
    out = nonlinear_jacobi(spec, F, G, H, u, GRID)
    assert out["scale"] > 1e-3 and out["value"] <= 1e-8


def test_nonlinear_jacobi_detects_gauss_defect():
    cfg = load_config("broken_gauss.cfg")
    spec = cfg.spec()
    names = list(cfg.functionals)[:3]
    F, G, H = (cfg.functional(n) for n in names)
    u = spec.random_point_function(trial_rng(9, 0))
    assert nonlinear_jacobi(spec, F, G, H, u, GRID)["value"] > 1e-3
