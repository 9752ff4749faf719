import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wnlbracket.schwartz import Grid, Omega, dinv_array, integrate, random_test_function
from wnlbracket.variational import (LIMITS, ChainEvaluator, Functional, LocalDensity, WNLChain,
                                    boundedness_check, density_chainsum, eval_functional,
                                    gateaux_oracle, random_linear_functional,
                                    variational_derivative, vd_chainsum, vd_of_density)

GRID = Grid(12.0, 4097)
KDV = Functional.parse("u^3 + 0.5*u_x^2", n=1, name="kdv")


def random_pair(seed, n=1):
    rng = np.random.default_rng(seed)
    u = random_test_function(rng, Omega.whole(n), radius=1.0)
    k = random_test_function(rng, Omega.whole(n), radius=1.0)
    return u, k


def duality_gap(F, u, k):
    vd = variational_derivative(F, u, GRID).values
    paired = integrate(np.sum(vd * k.jets(GRID.nodes, 0)[:, 0], axis=0), GRID)
    oracle = gateaux_oracle(F, u, k, GRID).value
    return abs(paired - oracle) / (1.0 + abs(oracle))


def test_kdv_value_matches_direct_quadrature():
    u, _ = random_pair(0)
    jets = u.jets(GRID.nodes, 1)[0]
    direct = integrate(jets[0] ** 3 + 0.5 * jets[1] ** 2, GRID)
    assert abs(eval_functional(KDV, u, GRID) - direct) < 1e-14


@pytest.mark.parametrize("seed", range(20))
def test_kdv_gateaux_duality(seed):
    u, k = random_pair(seed)
    assert duality_gap(KDV, u, k) <= 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_kdv_variational_derivative_closed_form(seed):
    u, _ = random_pair(100 + seed)
    jets = u.jets(GRID.nodes, 2)[0]
    vd = variational_derivative(KDV, u, GRID)
    assert np.max(np.abs(vd.values[0] - (3 * jets[0] ** 2 - jets[2]))) <= 1e-10


DEPTH1 = Functional.parse("u^2", [["u"]], n=1, name="depth1")
DEPTH1_DX = Functional.parse("u_x^2", [["u"]], n=1, name="depth1_dx")
DEPTH2 = Functional.parse("exp(-u^2)*u", [["u^2", "u_x"]], n=1, name="depth2")
TWO_CHAINS = Functional.parse("u", [["u"], ["u^2"]], n=1, name="two_chains")


def test_depth_one_matches_hand_derivation():
    # d/du int u^2 dinv(u) = 2u dinv(u) - dinv(u^2)
    u, _ = random_pair(7)
    s = u.jets(GRID.nodes, 0)[0, 0]
    expected = 2 * s * dinv_array(s, GRID) - dinv_array(s ** 2, GRID)
    got = variational_derivative(DEPTH1, u, GRID).values[0]
    assert np.max(np.abs(got - expected)) <= 1e-10


def test_depth_one_with_derivatives_matches_hand_derivation():
    # d/du int u_x^2 dinv(u) = -2 u_xx dinv(u) - 2 u_x u - dinv(u_x^2)
    u, _ = random_pair(8)
    s = u.jets(GRID.nodes, 2)[0]
    expected = (-2 * s[2] * dinv_array(s[0], GRID) - 2 * s[1] * s[0]
                - dinv_array(s[1] ** 2, GRID))
    got = variational_derivative(DEPTH1_DX, u, GRID).values[0]
    assert np.max(np.abs(got - expected)) <= 1e-10


def test_depth_two_matches_hand_derivation():
    # g dinv(h1 dinv(h2)), g = u, h1 = u^2, h2 = u:
    # dinv(h1 dinv h2) - dinv(g) 2u dinv(u) + dinv(h1 dinv(g))
    F = Functional.parse("u", [["u^2", "u"]], n=1)
    u, _ = random_pair(9)
    s = u.jets(GRID.nodes, 0)[0, 0]
    dg = dinv_array(s, GRID)
    expected = (dinv_array(s ** 2 * dinv_array(s, GRID), GRID) - dg * 2 * s * dinv_array(s, GRID)
                + dinv_array(s ** 2 * dg, GRID))
    got = variational_derivative(F, u, GRID).values[0]
    assert np.max(np.abs(got - expected)) <= 1e-10


@pytest.mark.parametrize("F", [DEPTH1, DEPTH1_DX, DEPTH2, TWO_CHAINS], ids=lambda F: F.name)
@pytest.mark.parametrize("seed", range(6))
def test_wnl_gateaux_duality(F, seed):
    u, k = random_pair(200 + seed)
    assert duality_gap(F, u, k) <= 2e-5


def test_two_field_duality():
    F = Functional.parse("u*v_x + v^2", [["u*v"]], n=2)
    for seed in range(4):
        u, k = random_pair(300 + seed, n=2)
        assert duality_gap(F, u, k) <= 2e-5


def test_self_pairing_degenerates_to_zero():
    F = Functional.parse("u", [["u"]], n=1)
    for seed in range(5):
        u, k = random_pair(400 + seed)
        assert abs(eval_functional(F, u, GRID)) <= 1e-9
        assert np.max(np.abs(variational_derivative(F, u, GRID).values)) <= 1e-8


def test_total_derivative_has_zero_variational_derivative():
    # D(u^2 u_x) = 2 u u_x^2 + u^2 u_xx
    F = Functional.parse("2*u*u_x^2 + u^2*u_xx", n=1)
    u, _ = random_pair(11)
    assert np.max(np.abs(variational_derivative(F, u, GRID).values)) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_variational_derivative_is_linear_in_the_functional(a, b, seed):
    u, _ = random_pair(seed)
    combo = variational_derivative(a * DEPTH1 + b * KDV, u, GRID).values
    parts = (a * variational_derivative(DEPTH1, u, GRID).values
             + b * variational_derivative(KDV, u, GRID).values)
    assert np.max(np.abs(combo - parts)) <= 1e-12 * (1 + np.max(np.abs(parts)))


def test_generic_density_route_agrees_with_chain_formula():
    u, _ = random_pair(12)
    ev = ChainEvaluator(u, GRID)
    for F in (DEPTH1, DEPTH1_DX, DEPTH2, TWO_CHAINS):
        a = ev.sum(vd_chainsum(F, 1))
        b = ev.sum(vd_of_density(density_chainsum(F), 1))
        assert np.max(np.abs(a - b)) <= 1e-12


def test_derivative_channel_is_exact():
    u, _ = random_pair(13)
    vd = variational_derivative(DEPTH2, u, GRID)
    c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    v = vd.values[0]
    fd = sum(ck * v[k:len(v) - 6 + k] for k, ck in enumerate(c)) / GRID.h
    assert np.max(np.abs(fd - vd.derivative[0][3:-3])) <= 1e-6


def test_linear_functional_derivative_is_its_coefficient():
    rng = np.random.default_rng(5)
    lf = random_linear_functional(rng, 2, GRID.L)
    u, k = random_pair(14, n=2)
    vd = variational_derivative(lf, u, GRID)
    assert np.array_equal(vd.values, lf.samples(GRID, 1)[:, 0])
    assert abs(eval_functional(lf, u, GRID) - eval_functional(lf.as_functional(), u, GRID)) < 1e-14
    assert duality_gap(lf, u, k) <= 1e-10


def test_boundedness_of_chain_functionals():
    u, _ = random_pair(15)
    for F in (DEPTH1, DEPTH2, TWO_CHAINS, KDV):
        res = boundedness_check(F, u, GRID)
        assert np.isfinite(res.sup) and res.verdict.startswith("bounded")
    # chains tend to constants: the local part decays, the tail does not
    res = boundedness_check(DEPTH1, u, GRID)
    left, right = res.edge_values[0]
    s = u.jets(GRID.nodes, 0)[0, 0]
    half = 0.5 * integrate(s ** 2, GRID)
    assert abs(left - half) < 1e-8 and abs(right + half) < 1e-8


def test_chain_limits_are_enforced():
    h = LocalDensity.parse("u", 1)
    with pytest.raises(ValueError):
        WNLChain(h, ((h,) * (LIMITS["max_depth"] + 1),))
    with pytest.raises(ValueError):
        WNLChain(h, ((h,),) * (LIMITS["max_chains"] + 1))
    with pytest.raises(ValueError):
        WNLChain(h, ((),))
