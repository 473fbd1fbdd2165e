import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from invariant_ma.groups import (ClosureOverflow, GroupDescriptorError, check_irreducible, close_group, cyclic,
                                 dihedral, full_rotation, hyperoctahedral, orbit_epsilon, neg_identity, orbit,
                                 orbit_hull_inradius, parse_group, rotation2, symmetrize_function)


def test_close_group_examples():
    assert close_group([rotation2(np.pi / 2)], cap=100).order == 4
    assert close_group([-np.eye(3)], cap=10).order == 2
    with pytest.raises(ClosureOverflow):
        close_group([rotation2(1.0)], cap=1000)


@pytest.mark.parametrize("group", [cyclic(5), dihedral(6), hyperoctahedral(3), neg_identity(4)])
def test_group_invariants(group):
    els = group.elements
    n = group.dimension
    assert np.abs(np.einsum("gji,gjk->gik", els, els) - np.eye(n)).max() <= 1e-10
    assert any(np.allclose(e, np.eye(n)) for e in els)
    assert group.is_closed()


def test_orbit_examples():
    c4 = cyclic(4)
    pts = orbit([1.0, 0.0], c4).points
    want = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    assert len(pts) == 4
    assert all(np.linalg.norm(pts - w, axis=1).min() < 1e-12 for w in want)
    assert len(orbit([0.0, 0.0], cyclic(7)).points) == 1
    pts = orbit([1.0, 1.0], neg_identity(2)).points
    assert sorted(map(tuple, np.round(pts, 12))) == [(-1.0, -1.0), (1.0, 1.0)]


def test_orbit_hull_inradius_examples():
    assert orbit_hull_inradius(orbit([1.0, 0.0], cyclic(4))) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)
    assert orbit_hull_inradius(orbit([1.0, 0.0], cyclic(8))) == pytest.approx(np.cos(np.pi / 8), abs=1e-10)
    assert orbit_hull_inradius(orbit([1.0, 0.0], neg_identity(2))) == 0.0


def test_epsilon_examples():
    assert orbit_epsilon(cyclic(6)) == pytest.approx(np.cos(np.pi / 6), abs=1e-12)
    assert orbit_epsilon(neg_identity(2)) == 0.0
    # square symmetries: min over the circle sits on the axes
    eps = orbit_epsilon(hyperoctahedral(2), 100_000)
    assert eps == pytest.approx(np.sqrt(2) / 2, abs=1e-3)
    theta = np.linspace(0, 2 * np.pi, 100_000, endpoint=False)
    brute = min(orbit_hull_inradius(orbit([np.cos(t), np.sin(t)], hyperoctahedral(2))) for t in theta[::97])
    assert eps <= brute + 1e-12


def test_epsilon_nonincreasing_in_samples():
    g = dihedral(5).conjugate(special_ortho_group.rvs(2, random_state=3))
    vals = [orbit_epsilon(g, s) for s in (16, 64, 256, 1024)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_epsilon_three_dimensions():
    # frozen: cube group, min over the sampled sphere
    eps = orbit_epsilon(hyperoctahedral(3), 512)
    assert 0.5773502 <= eps <= 0.58
    assert orbit_epsilon(hyperoctahedral(3), 512) == eps


def test_conjugation_invariance():
    q = special_ortho_group.rvs(2, random_state=11)
    g = cyclic(6)
    assert orbit_epsilon(g.conjugate(q)) == pytest.approx(orbit_epsilon(g), abs=1e-9)


def test_check_irreducible_examples():
    cert = check_irreducible(cyclic(8))
    assert cert.verdict and cert.center_of_mass_norm <= 1e-12 and cert.span_rank == 2
    c4 = np.eye(3)
    c4[:2, :2] = rotation2(np.pi / 2)
    cert = check_irreducible(close_group([c4]))
    assert not cert.verdict and cert.epsilon == 0.0
    cert = check_irreducible(neg_identity(1))
    assert cert.verdict and cert.epsilon == pytest.approx(1.0)
    assert not check_irreducible(neg_identity(2)).verdict


def test_symmetrize_examples():
    c4 = cyclic(4)
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert np.abs(symmetrize_function(lambda p: p[..., 0], c4)(x)).max() < 1e-14
    r = lambda p: np.linalg.norm(p, axis=-1) ** 3
    assert np.allclose(symmetrize_function(r, c4)(x), r(x), atol=1e-12)
    sq = symmetrize_function(lambda p: p[..., 0] ** 2, c4)(x)
    assert np.allclose(sq, 0.5 * (x ** 2).sum(1), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.floats(0, 2 * np.pi))
def test_inradius_bounded_and_positive(m, t):
    g = dihedral(m)
    r = orbit_hull_inradius(orbit([np.cos(t), np.sin(t)], g))
    assert 0 < r <= 1 + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_symmetrize_idempotent(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=2)
    h = lambda p: np.sin(p @ a) + p[..., 0] ** 3
    g = dihedral(3)
    once = symmetrize_function(h, g)
    twice = symmetrize_function(once, g)
    x = rng.normal(size=(20, 2))
    assert np.abs(once(x) - twice(x)).max() <= 1e-12


def test_parse_group():
    assert parse_group("cyclic:8").order == 8
    assert parse_group("hyperoctahedral:3").order == 48
    assert parse_group({"preset": "matrices", "n": 2, "generators": [[0, -1, 1, 0]]}).order == 4
    assert parse_group("full-rotation:3").mode == "full-rotation"
    for bad in ("cyclic", "cyclic:x", "spin:2", "cyclic:0", {"preset": "other"}):
        with pytest.raises(GroupDescriptorError):
            parse_group(bad)
    assert not full_rotation(2).is_finite
