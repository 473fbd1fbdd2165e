import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invariant_ma.densities import ConstantDensity, RadialPolynomial, perturb
from invariant_ma.groups import cyclic
from invariant_ma.measure import (TestSet, concentric_balls, integrate_against, ma_measure, ma_measures, set_mass,
                                  tent, weak_convergence_check, weak_residual, weak_residual_report)
from invariant_ma.pl import PLConvexFunction, ball_grid, random_pl
from invariant_ma.radial import solve_radial

ONE = ConstantDensity(2, 1.0)


def cone(m=256):
    th = np.linspace(0, 2 * np.pi, m, endpoint=False)
    return PLConvexFunction(np.column_stack([np.cos(th), np.sin(th)]), np.zeros(m))


def quadratic(a=1.0, radius=1.5, res=121):
    p = ball_grid(radius, res, 2)
    return PLConvexFunction(a * p, 0.5 * a * (p ** 2).sum(1))


def test_cone_apex():
    est = ma_measure(TestSet.ball([0, 0], 0.1), cone(), ONE)
    assert est.value == pytest.approx(np.pi, rel=0.05)
    # frozen value at the default y-quadrature
    assert est.value == pytest.approx(3.143074121460498, rel=1e-9)


def test_scaled_quadratic():
    a, r = 1.5, 0.5
    est = ma_measure(TestSet.ball([0, 0], r), quadratic(a), ONE)
    assert est.value == pytest.approx(np.pi * a ** 2 * r ** 2, rel=0.05)


def test_affine_has_no_mass():
    phi = PLConvexFunction(np.array([[0.3, 0.1]]), np.array([0.2]))
    assert ma_measure(TestSet.ball([0.1, 0], 0.4), phi, ONE).value == 0.0


def test_zero_data_zero_residual():
    phi = PLConvexFunction(np.zeros((1, 2)), np.zeros(1))
    zero = ConstantDensity(2, 0.0)
    assert weak_residual(phi, ONE, zero, concentric_balls(2, 1.0)) == 0.0


def test_radial_oracle_residual():
    sol = solve_radial(ONE, ONE, 2.0, steps=400)
    phi = sol.to_pl(1.5)
    rep = weak_residual_report(phi, ONE, ONE, concentric_balls(2, 1.0))
    assert rep.max_residual <= 0.02
    assert len(rep.table()) == 5 and set(rep.table()[0]) == {"set", "lhs", "omega", "quadrature_error",
                                                             "relative_residual"}


def test_set_mass_closed_forms():
    g = RadialPolynomial(2, ((4.0, 2.0),))
    assert set_mass(TestSet.ball([0, 0], 1.0), g) == pytest.approx(2 * np.pi, rel=1e-12)
    assert set_mass(TestSet.annulus([0, 0], 0.5, 1.0), g) == pytest.approx(2 * np.pi * (1 - 1 / 16), rel=1e-12)
    assert set_mass(TestSet.box([0, 0], [1, 1]), g) == pytest.approx(8 / 3, rel=1e-10)
    assert set_mass(TestSet.ball([0.5, 0.2], 0.3), ONE) == pytest.approx(np.pi * 0.09, rel=1e-10)


def test_constant_shift_invariance():
    phi = random_pl(np.random.default_rng(3), 2, 20)
    sets = [TestSet.ball([0.1, 0.0], 0.5), TestSet.box([-0.5, -0.2], [0.3, 0.4])]
    a = [e.value for e in ma_measures(sets, phi, ONE)]
    b = [e.value for e in ma_measures(sets, phi.shifted(-3.0), ONE)]
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_rotated_ball_equivariance():
    phi = quadratic(1.0)
    sets = [TestSet.ball([0.4, 0.1], 0.2)]
    sets += [sets[0].rotated(e) for e in cyclic(4).elements[1:]]
    vals = np.array([e.value for e in ma_measures(sets, phi, ONE)])
    assert np.ptp(vals) <= 0.05 * vals.mean()


def test_transport_solution_image_is_slope_hull():
    from scipy.spatial import ConvexHull

    from invariant_ma.densities import ball_mass, solve_Rk
    from invariant_ma.sd_ot import OTProblemInstance, sample_targets, solve_weights
    k, group = 2, cyclic(8)
    fk, gk = perturb(ONE, k), perturb(RadialPolynomial(2, ((4.0, 2.0),)), k)
    R = solve_Rk(fk, gk, k)
    ts = sample_targets(fk, R, 64, group, g_mass=ball_mass(gk, k))
    phi, _ = solve_weights(OTProblemInstance.from_targets(k, gk, ts, group), tol=1e-8)
    # every vertex lies in B_k, so the gradient image is the hull of the slopes
    est = ma_measure(TestSet.ball([0, 0], k), phi, fk, y_radius=R, x_radius=1.5 * k)
    area = ConvexHull(phi.slopes).volume
    assert est.value == pytest.approx(1.5 * area, rel=0.01)


def test_weak_convergence_examples():
    h = tent([0.0, 0.0], 1.0)
    phi = quadratic(1.0, res=81)
    rep = weak_convergence_check([phi, phi], [ONE, ONE], [h], phi, ONE)
    assert rep.max_discrepancy == 0.0
    seq = [quadratic(1 + 1 / j, res=81) for j in (1, 2, 4, 8)]
    rep = weak_convergence_check(seq, [ONE] * 4, [h], phi, ONE)
    assert rep.decreasing
    # omega(., a x, 1) = a^2 dx, so int h = a^2 pi / 3 for the unit tent
    assert rep.reference[0] == pytest.approx(np.pi / 3, rel=0.03)
    assert rep.integrals[0, 0] == pytest.approx(4 * np.pi / 3, rel=0.03)
    fs = [ConstantDensity(2, 1 + 1 / j) for j in (1, 2, 4, 8)]
    rep = weak_convergence_check([phi] * 4, fs, [h], phi, ONE)
    assert rep.decreasing
    assert np.allclose(rep.integrals[:, 0] / rep.reference[0], [2, 1.5, 1.25, 1.125], rtol=1e-12)


def test_integrate_against_constant_on_support():
    # h = 1 on B_0.5 gives the measure of that ball
    h = lambda x: (np.linalg.norm(x, axis=-1) <= 0.5).astype(float)
    phi = quadratic(1.0)
    assert integrate_against(h, phi, ONE, 0.5) == pytest.approx(np.pi * 0.25, rel=0.03)


def test_config_round_trip():
    for s in (TestSet.ball([0.1, 0.2], 0.3), TestSet.annulus([0, 0], 0.2, 0.5), TestSet.box([0, 0], [1, 2])):
        assert TestSet.from_config(s.to_config(), 2) == s
    with pytest.raises(ValueError):
        TestSet.from_config({"kind": "ball", "center": [0, 0, 0], "radius": 1}, 2)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_additive_and_monotone(seed):
    rng = np.random.default_rng(seed)
    phi = random_pl(rng, 2, int(rng.integers(3, 40)))
    c = rng.uniform(-0.3, 0.3, 2)
    sets = [TestSet.ball(c, 0.3), TestSet.annulus(c, 0.3, 0.6), TestSet.ball(c, 0.6)]
    e = ma_measures(sets, phi, ONE, resolution=128)
    tol = 2 * sum(x.quadrature_error for x in e) + 1e-9
    assert abs(e[0].value + e[1].value - e[2].value) <= tol
    assert e[0].value <= e[2].value + e[2].quadrature_error + 1e-12
    assert all(x.value >= 0 for x in e)
