import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wnlbracket.geometry import (TensorFields, coefficient_tensors, equivalence_audit,
                                 evaluate_tensor, gpc_check, levi_civita, riemann, riemann_values,
                                 sample_points, symbolic_tensor, zeros_tensor)
from wnlbracket.schwartz import Omega

HALF_PLANE = Omega(2, np.array([[1.0, -1.0]]), np.array([0.0]))


def example_metric(k, c1, c2, c3):
    consts = {"k": k, "c1": c1, "c2": c2, "c3": c3}
    return symbolic_tensor([["-(c1 + k + c2*u + c3*u^2)*(u - v)^2", "0"],
                            ["0", "(c1 + c2*v + c3*v^2)*(u - v)^2"]], 2, consts)


def example_points(count=50, seed=0):
    return sample_points(count, [0.3, -1.5], [1.5, -0.1], HALF_PLANE, margin=0.15, seed=seed)


def sympy_christoffel(k, c1, c2, c3):
    """Independent oracle: Levi-Civita symbols of the inverse of the given matrix."""
    u, v = sp.symbols("u v")
    X = (u, v)
    alpha = c1 + k + c2 * u + c3 * u ** 2
    beta = c1 + c2 * v + c3 * v ** 2
    low = sp.diag(-alpha * (u - v) ** 2, beta * (u - v) ** 2).inv()
    up = low.inv()
    G = [[[sum(up[a, l] * (sp.diff(low[j, l], X[i]) + sp.diff(low[i, l], X[j])
                           - sp.diff(low[i, j], X[l])) for l in range(2)) / 2
           for j in range(2)] for i in range(2)] for a in range(2)]
    return sp.lambdify((u, v), G, "numpy")


def printed_christoffel(z, k, c1, c2, c3):
    """The closed-form table as typeset, keyed (upper, lower, lower) from 0."""
    u, v = z
    al, dal = c1 + k + c2 * u + c3 * u ** 2, c2 + 2 * c3 * u
    be, dbe = c1 + c2 * v + c3 * v ** 2, c2 + 2 * c3 * v
    return {(0, 0, 0): 1 / (v - u) - dal / (2 * al), (1, 1, 1): 1 / (u - v) - dbe / (2 * be),
            (0, 1, 0): 1 / (u - v), (0, 0, 1): 1 / (u - v),
            (1, 1, 0): 1 / (v - u), (1, 0, 1): 1 / (v - u),
            (1, 0, 0): be / (al * (u - v)), (0, 1, 1): al / (be * (u - v))}


PARAMS = [(1.0, 1.0, 0.0, 0.0), (1.3, 0.7, 0.2, 0.1), (0.5, 2.0, -0.3, 0.05)]


def test_identity_metric_is_flat():
    g = symbolic_tensor([["1", "0"], ["0", "1"]], 2)
    z = np.random.default_rng(0).normal(size=(2, 10))
    G = levi_civita(g)
    assert np.all(evaluate_tensor(G, z) == 0)
    assert np.all(evaluate_tensor(riemann(g, G), z) == 0)


def test_conformal_line_metric():
    g = symbolic_tensor([["exp(u)"]], 1)
    z = np.linspace(-2, 2, 9)[None]
    G = evaluate_tensor(levi_civita(g), z)
    assert np.allclose(G, -0.5, atol=1e-15)
    assert np.all(evaluate_tensor(riemann(g, levi_civita(g)), z) == 0)


@pytest.mark.parametrize("params", PARAMS)
def test_example_connection_matches_independent_oracle(params):
    z = example_points()
    ours = evaluate_tensor(levi_civita(example_metric(*params)), z)
    oracle = np.array(sympy_christoffel(*params)(*z), dtype=float)
    assert np.max(np.abs(ours - oracle)) <= 1e-9


@pytest.mark.parametrize("params", PARAMS)
def test_example_connection_against_typeset_table(params):
    z = example_points()
    ours = evaluate_tensor(levi_civita(example_metric(*params)), z)
    table = printed_christoffel(z, *params)
    for key, closed in table.items():
        if key == (0, 1, 1):
            # Gamma^1_22 is typeset with the opposite sign
            assert np.max(np.abs(ours[key] + closed)) <= 1e-9
        else:
            assert np.max(np.abs(ours[key] - closed)) <= 1e-9


@pytest.mark.parametrize("params", PARAMS)
def test_example_has_constant_curvature(params):
    k = params[0]
    g = example_metric(*params)
    fields = TensorFields(g, levi_civita(g), symbolic_tensor([["sqrt(k)", "0"], ["0", "sqrt(k)"]], 2,
                                                             {"k": k}))
    z = example_points()
    R = riemann_values(fields.at(z))
    d = np.eye(2)
    target = k * (np.einsum("ip,jk->ijpk", d, d) - np.einsum("ik,jp->ijpk", d, d))
    assert np.max(np.abs(R - target[..., None])) <= 1e-8
    rep = gpc_check(fields, z)
    assert rep.passed, rep.residuals
    assert all(v <= 1e-8 for v in rep.coefficient_residuals.values()), rep.coefficient_residuals
    assert equivalence_audit(fields, z)["holds"]


def random_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(0.1, 0.5, 3)
    return symbolic_tensor([[f"2 + {a}*u^2 + sin(v)", f"{c}*u*v"],
                            [f"{c}*u*v", f"3 + {b}*v^2 + cos(u)"]], 2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_derived_connection_is_symmetric_and_compatible(seed):
    g = random_metric(seed)
    fields = TensorFields(g, levi_civita(g), zeros_tensor((2, 2)))
    z = np.random.default_rng(seed).uniform(-1, 1, (2, 20))
    rep = gpc_check(fields, z)
    assert rep.residuals["GPC:1"] <= 1e-12
    assert rep.residuals["compatibility"] <= 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_curvature_symmetries_and_first_bianchi(seed):
    g = random_metric(seed)
    fields = TensorFields(g, levi_civita(g), zeros_tensor((2, 2)))
    z = np.random.default_rng(seed).uniform(-1, 1, (2, 20))
    t = fields.at(z)
    R = riemann_values(t)  # R^{ij}_{pk}
    assert np.max(np.abs(R + np.swapaxes(R, 2, 3))) <= 1e-9
    assert np.max(np.abs(R + np.swapaxes(R, 0, 1))) <= 1e-9
    low = np.linalg.inv(np.moveaxis(t.g, (0, 1), (-2, -1)))
    Rm = np.einsum("...si,ijpk...->jspk...", low, R)  # R^j_{spk}
    cyc = Rm + np.einsum("jpks...->jspk...", Rm) + np.einsum("jksp...->jspk...", Rm)
    assert np.max(np.abs(cyc)) <= 1e-9


def test_one_dimensional_curvature_vanishes():
    g = symbolic_tensor([["1 + u^2"]], 1)
    assert np.all(evaluate_tensor(riemann(g, levi_civita(g)), np.array([[0.3, -1.0]])) == 0)


def gauss_broken(lam):
    g = symbolic_tensor([["1", "0"], ["0", "1"]], 2)
    w = symbolic_tensor([[str(lam), "0"], ["0", str(2 * lam)]], 2)
    return TensorFields(g, zeros_tensor((2, 2, 2)), w)


def test_gauss_defect_is_two_and_carried_by_b():
    z = np.random.default_rng(1).uniform(-1, 1, (2, 50))
    fields = gauss_broken(1.0)
    rep = gpc_check(fields, z)
    assert abs(rep.residuals["GPC:2"] - 2.0) <= 1e-10
    assert rep.failing() == ["GPC:2"]
    coef = coefficient_tensors(fields.at(z), np.ones_like(z))
    assert np.max(np.abs(coef["m"])) == 0
    assert abs(np.max(np.abs(coef["b"])) - 2.0) <= 1e-12
    assert abs(np.max(np.abs(coef["b"][0, 1])) - 2.0) <= 1e-12
    audit = equivalence_audit(fields, z)
    assert audit["holds"] and audit["gpc_pass"] == 0 and audit["coefficients_pass"] == 0


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_gauss_defect_scales_quadratically(lam):
    z = np.random.default_rng(2).uniform(-1, 1, (2, 10))
    base = gpc_check(gauss_broken(1.0), z).residuals["GPC:2"]
    scaled = gpc_check(gauss_broken(lam), z).residuals["GPC:2"]
    assert abs(scaled - lam ** 2 * base) <= 1e-12


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_asymmetric_connection_defect_is_linear(eps):
    g = symbolic_tensor([["1", "0"], ["0", "1"]], 2)
    G = symbolic_tensor([[["0", str(eps)], ["0", "0"]], [["0", "0"], ["0", "0"]]], 2)
    fields = TensorFields(g, G, zeros_tensor((2, 2)))
    z = np.random.default_rng(3).uniform(-1, 1, (2, 50))
    rep = gpc_check(fields, z)
    assert abs(rep.residuals["GPC:1"] - eps) <= 1e-15
    d = coefficient_tensors(fields.at(z), np.zeros_like(z))["d"]
    assert abs(np.max(np.abs(d)) - eps) <= 1e-15
    assert equivalence_audit(fields, z)["holds"]


def test_typeset_b_fails_on_the_example():
    g = example_metric(1.0, 1.0, 0.0, 0.0)
    fields = TensorFields(g, levi_civita(g), symbolic_tensor([["1", "0"], ["0", "1"]], 2))
    z = example_points()
    t = fields.at(z)
    ux = np.random.default_rng(0).uniform(-1, 1, z.shape)
    assert np.max(np.abs(coefficient_tensors(t, ux)["b"])) <= 1e-8
    assert np.max(np.abs(coefficient_tensors(t, ux, printed_b=True)["b"])) > 1.0


def test_sample_points_respect_margin_and_are_reproducible():
    z = example_points(200, seed=4)
    assert z.shape == (2, 200)
    assert np.all((z[0] - z[1]) / np.sqrt(2) > 0.15)
    assert np.array_equal(z, example_points(200, seed=4))
