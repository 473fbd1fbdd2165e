import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invariant_ma.pl import (MalformedSolution, PLConvexFunction, ball_grid, gradient_select, legendre_transform,
                            lower_hull_vertices, normalize_at_origin, power_vertices, random_pl)


def test_values_and_argmax_ties():
    phi = PLConvexFunction(np.array([[-1.0], [1.0]]), np.zeros(2))
    x = np.array([[-2.0], [0.0], [3.0]])
    assert np.allclose(phi(x), [2, 0, 3])
    # tie at the kink resolves to the lowest index
    assert gradient_select(phi, np.array([[0.0]]))[0, 0] == -1.0
    assert sorted(phi.active_slopes(np.array([0.0]))[:, 0]) == [-1.0, 1.0]


def test_single_piece_gradient():
    phi = PLConvexFunction(np.array([[0.5, -2.0]]), np.array([3.0]))
    x = np.random.default_rng(0).normal(size=(10, 2))
    assert np.all(phi.gradient_select(x) == [0.5, -2.0])


def test_normalize_examples():
    phi = PLConvexFunction(np.array([[1.0, 2.0]]), np.array([5.0]))
    out = normalize_at_origin(phi)
    assert out.intercepts[0] == 0.0 and out(np.zeros((1, 2)))[0] == 0.0
    again = normalize_at_origin(out)
    assert np.array_equal(again.intercepts, out.intercepts)
    rnd = random_pl(np.random.default_rng(4), 2, 10)
    nr = normalize_at_origin(rnd)
    assert nr(np.zeros((1, 2)))[0] == pytest.approx(0.0, abs=1e-15)
    d0 = rnd.intercepts[:, None] - rnd.intercepts[None]
    d1 = nr.intercepts[:, None] - nr.intercepts[None]
    assert np.allclose(d0, d1, atol=1e-14)


def test_prune_keeps_values():
    rng = np.random.default_rng(2)
    phi = PLConvexFunction(rng.normal(size=(60, 2)), rng.uniform(0, 3, 60))
    grid = ball_grid(1.0, 41, 2)
    pruned = phi.prune(grid)
    assert len(pruned) < len(phi)
    assert np.abs(pruned(grid) - phi(grid)).max() == 0.0


def test_ball_grid():
    g = ball_grid(1.0, 5, 2)
    assert len(g) == 13 and any(np.all(p == 0) for p in g)
    assert np.linalg.norm(g, axis=1).max() <= 1.0 + 1e-12


def test_serialisation_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    phi = PLConvexFunction(rng.normal(size=(7, 2)), rng.normal(size=7), np.array([2, 2, 0, 1, 1, 0, 2]))
    path = tmp_path / "phi.json"
    phi.save(path)
    back = PLConvexFunction.load(path)
    x = rng.normal(size=(30, 2))
    assert np.array_equal(back(x), phi(x))
    orbits = [p["orbit"] for p in json.loads(path.read_text())["pieces"]]
    assert orbits == sorted(orbits)
    # ordering is canonical: saving a permuted copy gives the same bytes
    perm = rng.permutation(7)
    PLConvexFunction(phi.slopes[perm], phi.intercepts[perm], phi.orbit[perm]).save(tmp_path / "b.json")
    assert (tmp_path / "b.json").read_text() == path.read_text()


@pytest.mark.parametrize("payload", ['{"n": 2, "pieces": []}', '{"n": 2}', '{"n": 2, "pieces": [{"slope": [1]}]}',
                                     '{"n": 2, "pieces": [{"slope": [1, 2, 3], "intercept": 0}]}', "not json"])
def test_malformed(tmp_path, payload):
    p = tmp_path / "bad.json"
    p.write_text(payload)
    with pytest.raises(MalformedSolution):
        PLConvexFunction.load(p)


def test_legendre_quadratic():
    phi_pts = ball_grid(2.0, 81, 2)
    # |x|^2/2 as a max of tangent planes
    phi = PLConvexFunction(phi_pts, 0.5 * (phi_pts ** 2).sum(1))
    psi = legendre_transform(phi, 2.0, 161)
    y = ball_grid(0.8, 21, 2)
    h = 4.0 / 160
    assert np.abs(psi(y) - 0.5 * (y ** 2).sum(1)).max() <= 2 * h ** 2


def test_legendre_affine():
    y1, c1 = np.array([0.3, -0.2]), 0.7
    phi = PLConvexFunction(y1[None], np.array([c1]))
    psi = legendre_transform(phi, 1.0, 201)
    assert psi(y1[None])[0] == pytest.approx(c1, abs=1e-12)
    # slope R away from y1
    d = np.array([1.0, 0.0])
    assert psi((y1 + 0.5 * d)[None])[0] - c1 == pytest.approx(0.5, abs=1e-12)


def test_double_transform():
    rng = np.random.default_rng(8)
    phi = random_pl(rng, 2, 12)
    grid = ball_grid(1.0, 51, 2)
    psi = legendre_transform(phi, 1.0, points=grid)
    back = legendre_transform(psi, 1.0, points=phi.slopes)
    inner = grid[np.linalg.norm(grid, axis=1) <= 0.9]
    assert np.abs(back(inner) - phi(inner)).max() <= 1e-8


def test_lower_hull_1d():
    x = np.linspace(-1, 1, 9)[:, None]
    h = np.abs(x[:, 0])
    assert list(lower_hull_vertices(x, h)) == [0, 4, 8]


def test_power_vertices_square():
    # max(|x1|, |x2|) has a single vertex at the origin
    s = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    phi = PLConvexFunction(s, np.zeros(4))
    x, h, simp = power_vertices(phi, with_data=True)
    assert np.allclose(x, 0) and np.allclose(h, 0)
    # three pieces in the plane meet at one point
    phi = PLConvexFunction(np.array([[1.0, 0], [0, 1], [-1, -1]]), np.array([0.0, 0.0, 0.0]))
    assert len(power_vertices(phi)) == 0 or np.allclose(power_vertices(phi), 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.integers(1, 25))
def test_fenchel_inequality(seed, n, pieces):
    rng = np.random.default_rng(seed)
    phi = random_pl(rng, n, pieces)
    pts = rng.uniform(-1, 1, size=(40, n))
    psi = legendre_transform(phi, 1.0, points=pts)
    y = rng.normal(size=(40, n))
    lhs = psi(y)[:, None] + phi(pts)[None, :]
    assert np.all(lhs >= y @ pts.T - 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_midpoint_convexity(seed):
    rng = np.random.default_rng(seed)
    phi = random_pl(rng, 2, 15)
    x, y = rng.normal(size=(2, 100, 2))
    assert np.all(phi(0.5 * (x + y)) <= 0.5 * (phi(x) + phi(y)) + 1e-12)
