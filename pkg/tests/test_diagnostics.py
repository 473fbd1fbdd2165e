import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invariant_ma.densities import ConstantDensity, RadialPolynomial
from invariant_ma.diagnostics import (EmptySublevel, InsufficientVariation, eq4_bounds, equivariance_check,
                                      holder_gradient_fit, properness_check, run_diagnostics,
                                      strict_convexity_probe)
from invariant_ma.groups import cyclic, dihedral, full_rotation
from invariant_ma.pl import PLConvexFunction, ball_grid, random_pl
from invariant_ma.radial import solve_radial

ONE = ConstantDensity(2, 1.0)


class Quadratic:
    n = 2

    def __call__(self, x):
        return 0.5 * (np.asarray(x) ** 2).sum(-1)

    def gradient(self, x):
        return np.asarray(x, dtype=float)


def quadratic_pl(a=1.0, radius=1.5, res=121):
    p = ball_grid(radius, res, 2)
    return PLConvexFunction(a * p, 0.5 * a * (p ** 2).sum(1))


def cone(m=256):
    th = np.linspace(0, 2 * np.pi, m, endpoint=False)
    return PLConvexFunction(np.column_stack([np.cos(th), np.sin(th)]), np.zeros(m))


@pytest.fixture(scope="module")
def cubic():
    return solve_radial(ONE, RadialPolynomial(2, ((4.0, 2.0),)), 2.0)


def test_properness_quadratic():
    rep = properness_check(Quadratic(), [1, 2, 3])
    assert rep.minima == pytest.approx([0.5, 2.0, 4.5], abs=1e-12)
    assert rep.verdict == "PROPER-TREND"
    assert rep.table()[1] == {"r": 2.0, "min_on_sphere": rep.minima[1]}


def test_properness_flat():
    assert properness_check(lambda x: 0 * x[..., 0], [1, 2, 3]).verdict == "FLAT"
    assert properness_check(cone(), [1, 2, 3]).verdict == "PROPER-TREND"
    # the rise 0.5 -> 4.5 is swamped by a tolerance of 5
    assert properness_check(Quadratic(), [1, 2, 3], flat_tol=5.0).verdict == "FLAT"
    with pytest.raises(ValueError):
        properness_check(Quadratic(), [1, 2])


@pytest.mark.parametrize("a, frozen", [(1.0, (1.0860836181911049, 1.0995449398406627)),
                                       (1.5, (2.6755382184395167, 2.698896120063486))])
def test_eq4_scaled_quadratic(a, frozen):
    rep = eq4_bounds(quadratic_pl(a), 0.4, ONE, ConstantDensity(2, a * a))
    assert rep.predicted == pytest.approx((a * a, a * a))
    assert a * a * 0.9 <= rep.lambda1 <= rep.lambda2 <= a * a * 1.25
    assert (rep.lambda1, rep.lambda2) == pytest.approx(frozen, rel=1e-9)


def test_eq4_empty_sublevel():
    with pytest.raises(EmptySublevel):
        eq4_bounds(quadratic_pl(), -1.0)


def test_strict_convexity_quadratic_gap():
    # (phi(x)+phi(y))/2 - phi(mid) = |x-y|^2/8 for the quadratic
    rep = strict_convexity_probe(Quadratic(), length=0.1)
    assert rep.min_gap == pytest.approx(1.25e-3, rel=1e-9)
    assert strict_convexity_probe(Quadratic(), min_length=0.2).min_gap >= 0.2 ** 2 / 8 - 1e-12


def test_strict_convexity_affine_zero():
    rep = strict_convexity_probe(lambda x: x @ np.array([0.3, 0.2]) + 1, n=2)
    assert abs(rep.min_gap) <= 1e-12
    with pytest.raises(ValueError):
        strict_convexity_probe(Quadratic(), segments=0)


def test_holder_quadratic():
    fit = holder_gradient_fit(Quadratic())
    assert fit.beta == pytest.approx(1.0, abs=1e-9) and not fit.low_confidence
    pl = holder_gradient_fit(quadratic_pl())
    assert pl.beta >= 0.95 and pl.min_separation > 0
    assert pl.points.shape == (pl.pairs, 2)


def test_holder_cubic_windows(cubic):
    # phi' ~ sqrt(2) r^2 near the origin: C^{1,1} there, beta clips to 1
    assert holder_gradient_fit(cubic, window="origin").beta == 1.0
    assert holder_gradient_fit(cubic).beta >= 0.95


def test_holder_cone_low_confidence():
    fit = holder_gradient_fit(cone(), window="origin")
    assert fit.low_confidence and fit.beta < 0.5
    with pytest.raises(InsufficientVariation):
        holder_gradient_fit(PLConvexFunction(np.array([[0.3, 0.1]]), np.array([0.0])))
    with pytest.raises(ValueError):
        holder_gradient_fit(Quadratic(), pairs=10)


def test_equivariance(cubic):
    grid = ball_grid(1.0, 41, 2)
    rep = equivariance_check(cubic, cyclic(8), grid)
    assert rep.value_violation <= 1e-12 and rep.gradient_violation <= 1e-12
    # an injected non-invariant term of size 1e-3 is seen at twice its size
    bad = equivariance_check(lambda x: 0.5 * (x ** 2).sum(-1) + 1e-3 * x[..., 0], cyclic(8), grid)
    assert bad.value_violation == pytest.approx(2e-3, rel=1e-6)
    with pytest.raises(ValueError):
        equivariance_check(cubic, full_rotation(2), grid)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(3, 6))
def test_symmetrized_pl_is_equivariant(seed, m):
    grp = dihedral(m)
    base = random_pl(np.random.default_rng(seed), 2, 6)
    s = np.concatenate([base.slopes @ e.T for e in grp.elements])
    phi = PLConvexFunction(s, np.tile(base.intercepts, len(grp.elements)))
    rep = equivariance_check(phi, grp, ball_grid(1.0, 21, 2))
    assert rep.value_violation <= 1e-12 and rep.gradient_violation <= 1e-9


def test_run_diagnostics_quadratic():
    rep = run_diagnostics(quadratic_pl(), ONE, ONE, cyclic(4))
    assert rep.properness.verdict == "PROPER-TREND"
    assert rep.strict_convexity.min_gap > 0
    assert rep.holder.beta >= 0.95
    assert rep.equivariance.value_violation <= 1e-12
    d = rep.to_dict()
    assert "points" not in d["holder"] and d["eq4"]["lambda1"] > 0
