import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invariant_ma.densities import (ConstantDensity, DensityError, RadialExponential, RadialPolynomial, SumDensity,
                                    SymmetrizedDensity, TabulatedRadial, ball_mass, check_infinite_mass,
                                    parse_density, perturb, solve_Rk, validate_density)
from invariant_ma.groups import cyclic


def test_eval_examples():
    x = np.array([[1.0, 0.0], [0.3, -2.0]])
    assert np.all(ConstantDensity(2, 1.0)(x) == 1.0)
    assert RadialPolynomial(2, ((4.0, 2.0),))(x)[0] == pytest.approx(4.0)
    assert np.allclose(perturb(ConstantDensity(2, 1.0), 4)(x), 1.25)


def test_ball_mass_examples():
    assert ball_mass(ConstantDensity(2, 1.0), 2.0) == pytest.approx(4 * np.pi, rel=1e-12)
    assert ball_mass(RadialPolynomial(2, ((4.0, 2.0),)), 1.0) == pytest.approx(2 * np.pi, rel=1e-12)
    tab = TabulatedRadial(3, np.linspace(0, 2, 9), np.ones(9))
    assert ball_mass(tab, 1.0) == pytest.approx(4 * np.pi / 3, rel=1e-10)
    # exp: 2 pi (1 - (1 + R) e^{-R})
    assert ball_mass(RadialExponential(2, 1.0, -1.0), 3.0) == pytest.approx(2 * np.pi * (1 - 4 * np.exp(-3)), rel=1e-10)


def test_solve_Rk_examples():
    one = ConstantDensity(2, 1.0)
    assert solve_Rk(perturb(one, 5), perturb(one, 5), 5) == pytest.approx(5.0, rel=1e-10)
    g = RadialPolynomial(2, ((4.0, 2.0),))
    assert solve_Rk(perturb(one, 2), perturb(g, 2), 2) == pytest.approx(np.sqrt(68 / 3), rel=1e-8)
    one1 = ConstantDensity(1, 1.0)
    assert solve_Rk(perturb(one1, 3), perturb(one1, 3), 3) == pytest.approx(3.0, rel=1e-10)


def test_solve_Rk_identity_holds():
    f = perturb(RadialExponential(2, 2.0, -0.5), 8)
    g = perturb(RadialPolynomial(2, ((1.0, 1.0), (0.5, 3.0))), 8)
    R = solve_Rk(f, g, 8)
    assert abs(ball_mass(f, R) - ball_mass(g, 8)) <= 1e-8 * ball_mass(g, 8)


def test_check_infinite_mass_examples():
    assert check_infinite_mass(ConstantDensity(2, 1.0), [1, 10, 100]).verdict == "DIVERGES"
    assert check_infinite_mass(RadialExponential(2, 1.0, -1.0), [1, 10, 100]).verdict == "SUSPECT-FINITE"
    assert check_infinite_mass(RadialPolynomial(2, ((1.0, 2.0),)), [1, 2, 4, 8]).verdict == "DIVERGES"
    with pytest.raises(ValueError):
        check_infinite_mass(ConstantDensity(2, 1.0), [1, 2])


def test_validate_density():
    assert validate_density(ConstantDensity(2, 1.0), 4) == []
    assert validate_density(RadialPolynomial(2, ((1.0, 2.0), (-3.0, 0.0))), 4) == ["density takes negative values"]
    assert validate_density(TabulatedRadial(2, np.array([0.0, 1.0]), np.array([1.0, -1.0])), 2)


def test_symmetrized_density_is_invariant():
    d = SymmetrizedDensity(2, lambda p: 1 + p[..., 0] ** 2 + 0.5 * p[..., 1], cyclic(4))
    x = np.random.default_rng(1).normal(size=(40, 2))
    rx = x @ np.array([[0.0, -1.0], [1.0, 0.0]]).T
    assert np.allclose(d(x), d(rx), atol=1e-12)
    assert validate_density(d, 2) == []


def test_parse_density():
    assert isinstance(parse_density({"form": "constant", "value": 1}, 2), ConstantDensity)
    d = parse_density({"form": "radial-poly", "terms": [[4, 2]]}, 2)
    assert d.profile(np.array([0.5]))[0] == pytest.approx(1.0)
    assert parse_density({"form": "radial-exp", "a": 1, "b": -1}, 2).b == -1
    assert parse_density({"form": "table", "r": [0, 1], "v": [1, 2]}, 3).n == 3
    for bad in ({"value": 1}, {"form": "cosine"}, {"form": "constant"}, {"form": "table", "r": [0], "v": "x"}):
        with pytest.raises(DensityError):
            parse_density(bad, 2)


radial_terms = st.lists(st.tuples(st.floats(0.01, 5), st.floats(0, 4)), min_size=1, max_size=3)


@settings(max_examples=40, deadline=None)
@given(radial_terms, radial_terms, st.floats(0.1, 5))
def test_ball_mass_linear(t1, t2, R):
    d1, d2 = RadialPolynomial(2, tuple(t1)), RadialPolynomial(2, tuple(t2))
    both = ball_mass(SumDensity(d1, d2), R)
    assert both == pytest.approx(ball_mass(d1, R) + ball_mass(d2, R), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(radial_terms, st.lists(st.floats(0.05, 10), min_size=3, max_size=6, unique=True))
def test_ball_mass_increasing(terms, radii):
    d = perturb(RadialPolynomial(3, tuple(terms)), 3)
    m = [ball_mass(d, r) for r in sorted(radii)]
    assert all(b > a for a, b in zip(m, m[1:]))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 1e4), st.floats(-3, 3), st.floats(-3, 3))
def test_perturbation_gap(k, a, b):
    base = RadialExponential(2, 1.0, -0.3)
    x = np.array([[a, b]])
    assert perturb(base, k)(x)[0] - base(x)[0] == pytest.approx(1 / k, rel=1e-12)
