"""Monge-Ampere measures of max-of-affine functions and weak residuals.

omega(B, phi, f) is the f-mass of the gradient image of B.  It is computed
in gradient space: a node y belongs to the image of B when some maximiser
of <x, y> - phi(x) over a candidate set of x lies in B.  Candidates are a
tensor grid on a ball around B together with the exact vertices of phi, so
for max-of-affine phi the maximisers are exact up to ties.

The maximisation is a nearest-neighbour query in one extra dimension:
argmax <x,y> - h(x) = argmin |x - y|^2 + (2 h(x) - |x|^2), and the weight
is carried by a lifted coordinate sqrt(2 h - |x|^2 - min).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .densities import Density, ball_mass
from .pl import PLConvexFunction, ball_grid, power_vertices
from .sd_ot import BallQuadrature

MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class TestSet:
    """A ball, centred annulus/shell or axis-aligned box in R^n."""

    __test__ = False  # keep pytest from collecting this class

    kind: str
    center: tuple = ()
    radius: float = 0.0
    inner: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    @staticmethod
    def ball(center, radius: float) -> "TestSet":
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return TestSet("ball", center=tuple(float(c) for c in center), radius=float(radius))

    @staticmethod
    def annulus(center, inner: float, outer: float) -> "TestSet":
        if not 0 <= inner < outer:
            raise ValueError("annulus needs 0 <= inner < outer")
        return TestSet("annulus", center=tuple(float(c) for c in center), radius=float(outer), inner=float(inner))

    @staticmethod
    def box(lo, hi) -> "TestSet":
        lo, hi = tuple(float(v) for v in lo), tuple(float(v) for v in hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box needs lo < hi in every coordinate")
        return TestSet("box", lo=lo, hi=hi)

    @property
    def n(self) -> int:
        return len(self.lo) if self.kind == "box" else len(self.center)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=-1)
        d = np.linalg.norm(x - np.array(self.center), axis=-1)
        inside = d <= self.radius
        if self.kind == "annulus":
            inside &= d >= self.inner
        return inside

    def extent(self) -> float:
        """Radius of an origin-centred ball containing the set."""
        if self.kind == "box":
            corner = np.maximum(np.abs(self.lo), np.abs(self.hi))
            return float(np.linalg.norm(corner))
        return float(np.linalg.norm(self.center) + self.radius)

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(np.array(self.hi) - np.array(self.lo)))
        from .densities import unit_ball_volume
        v = unit_ball_volume(self.n)
        return v * (self.radius ** self.n - self.inner ** self.n)

    def rotated(self, g: np.ndarray) -> "TestSet":
        if self.kind == "box":
            raise ValueError("rotated boxes are not boxes")
        c = tuple(float(v) for v in np.asarray(g) @ np.array(self.center))
        return TestSet(self.kind, center=c, radius=self.radius, inner=self.inner)

    def describe(self) -> str:
        if self.kind == "box":
            return f"box{list(self.lo)}-{list(self.hi)}"
        if self.kind == "annulus":
            return f"annulus(c={list(self.center)},{self.inner:g}<r<{self.radius:g})"
        return f"ball(c={list(self.center)},r={self.radius:g})"

    def to_config(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}
        d = {"kind": self.kind, "center": list(self.center), "radius": self.radius}
        if self.kind == "annulus":
            d["inner"] = self.inner
        return d

    @staticmethod
    def from_config(d: dict, n: int) -> "TestSet":
        kind = d.get("kind")
        if kind == "box":
            ts = TestSet.box(d["lo"], d["hi"])
        elif kind == "ball":
            ts = TestSet.ball(d.get("center", [0.0] * n), d["radius"])
        elif kind == "annulus":
            ts = TestSet.annulus(d.get("center", [0.0] * n), d["inner"], d["radius"])
        else:
            raise ValueError(f"unknown test set kind {kind!r}")
        if ts.n != n:
            raise ValueError(f"test set has dimension {ts.n}, expected {n}")
        return ts


def concentric_balls(n: int, radius: float, count: int = 5) -> list[TestSet]:
    """Balls of radius radius*j/count, j = 1..count, centred at the origin."""
    return [TestSet.ball([0.0] * n, radius * j / count) for j in range(1, count + 1)]


@dataclass
class MAMeasureEstimate:
    value: float
    quadrature_error: float
    set: TestSet
    y_radius: float = 0.0


def _ball_rule(n: int, radius: float, order: int):
    """Nodes and weights for smooth integrands on B_radius (recursive chords,
    Gauss-Legendre in the angle x_1 = r sin(theta))."""
    t, w = np.polynomial.legendre.leggauss(order)
    theta, wt = 0.5 * np.pi * t, 0.5 * np.pi * w
    if n == 1:
        return (radius * np.sin(theta))[:, None], radius * np.cos(theta) * wt
    sub_x, sub_w = _ball_rule(n - 1, 1.0, order)
    x1 = radius * np.sin(theta)
    half = radius * np.cos(theta)
    pts = np.concatenate([np.repeat(x1, len(sub_w))[:, None], (half[:, None, None] * sub_x[None]).reshape(-1, n - 1)],
                         axis=1)
    wts = (radius * np.cos(theta) * wt)[:, None] * (half[:, None] ** (n - 1)) * sub_w[None]
    return pts, wts.ravel()


def set_mass(B: TestSet, g: Density, order: int = 48) -> float:
    """int_B g, closed form / adaptive for centred balls and shells of radial g."""
    center = np.array(B.center) if B.kind != "box" else None
    if B.kind != "box" and g.is_radial and np.allclose(center, 0.0):
        outer = ball_mass(g, B.radius)
        return outer - (ball_mass(g, B.inner) if B.kind == "annulus" and B.inner > 0 else 0.0)
    if B.kind == "box":
        t, w = np.polynomial.legendre.leggauss(order)
        lo, hi = np.array(B.lo), np.array(B.hi)
        axes = [0.5 * (a + b) + 0.5 * (b - a) * t for a, b in zip(lo, hi)]
        wax = [0.5 * (b - a) * w for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, B.n)
        wm = np.prod(np.stack(np.meshgrid(*wax, indexing="ij"), axis=-1).reshape(-1, B.n), axis=1)
        return float((np.asarray(g(mesh)) * wm).sum())
    pts, wts = _ball_rule(B.n, B.radius, order)
    total = float((np.asarray(g(pts + center)) * wts).sum())
    if B.kind == "annulus" and B.inner > 0:
        pts, wts = _ball_rule(B.n, B.inner, order)
        total -= float((np.asarray(g(pts + center)) * wts).sum())
    return total


class GradientImage:
    """Maximiser lookup y -> x*(y) for a max-of-affine phi over a candidate set.

    ``x_radius`` bounds the candidate region; sets of interest should sit
    well inside it, since points y whose maximiser over the region lies on
    its boundary are never attributed to an interior set.
    """

    def __init__(self, phi: PLConvexFunction, x_radius: float, x_resolution: int = 101,
                 extra_points: np.ndarray | None = None):
        n = phi.n
        pts = [ball_grid(x_radius, x_resolution, n)]
        if extra_points is not None:
            pts.append(np.asarray(extra_points, float).reshape(-1, n))
        pts = np.concatenate(pts)
        vx, vh, _ = power_vertices(phi, x_radius, with_data=True)
        cand = np.concatenate([pts, vx])
        h = np.concatenate([phi(pts), vh])
        w = 2.0 * h - (cand * cand).sum(axis=1)
        lift = np.sqrt(np.maximum(w - w.min(), 0.0))
        self.phi = phi
        self.points = cand
        self.values = h
        self.x_radius = float(x_radius)
        self.tree = cKDTree(np.column_stack([cand, lift]))
        self._wmin = float(w.min())

    def maximizers(self, y: np.ndarray, ties: int = 4, tol: float = 1e-9):
        """Indices of the best ``ties`` candidates and a mask of those tying with the best."""
        y = np.asarray(y, float)
        q = np.column_stack([y, np.zeros(len(y))])
        ties = min(ties, len(self.points))
        d, idx = self.tree.query(q, k=ties)
        d, idx = d.reshape(len(y), ties), idx.reshape(len(y), ties)
        d2 = d * d
        scale = 1.0 + (y * y).sum(axis=1) + abs(self._wmin)
        tie = d2 <= d2[:, :1] + tol * scale[:, None]
        return idx, tie

    def member(self, y: np.ndarray, sets: Sequence[TestSet]) -> np.ndarray:
        """Boolean (len(sets), len(y)): some maximiser of y lies in the set."""
        idx, tie = self.maximizers(y)
        out = np.zeros((len(sets), len(y)), dtype=bool)
        for j, B in enumerate(sets):
            inside = B.contains(self.points)[idx] & tie
            out[j] = inside.any(axis=1)
        return out


def default_y_radius(phi: PLConvexFunction, sets: Sequence[TestSet], resolution: int = 41) -> float:
    """Largest slope active on the sets, with a small margin.

    Active pieces are those meeting at vertices inside a set plus the argmax
    pieces on a coarse grid (for cells that contain no vertex).
    """
    R = max(B.extent() for B in sets)

    def inside(p):
        return np.any(np.stack([B.contains(p) for B in sets]), axis=0) if len(p) else np.zeros(0, bool)

    grid = ball_grid(R, resolution, phi.n)
    vx, _, simp = power_vertices(phi, R, with_data=True)
    active = np.union1d(np.unique(phi.argmax(grid[inside(grid)])), np.unique(simp[inside(vx)]))
    if len(active) == 0:
        return max(phi.max_slope_norm(), 1e-12)
    return float(np.linalg.norm(phi.slopes[active], axis=1).max()) * 1.02 + 1e-12


def ma_measures(sets: Sequence[TestSet], phi: PLConvexFunction, f: Density, y_radius: float | None = None,
                resolution: int = 256, x_radius: float | None = None, x_resolution: int = 101,
                error_estimate: bool = True) -> list[MAMeasureEstimate]:
    """omega(B, phi, f) for several sets sharing one gradient-space quadrature.

    The y-quadrature is the line-sweep rule on B_{y_radius} (masses
    renormalised to the exact ball mass of f); nodes are segment midpoints.
    The error indicator is the change against the half-resolution rule.
    """
    sets = list(sets)
    d = phi.slopes - phi.slopes[0]
    if len(phi) <= phi.n or np.linalg.matrix_rank(d) < phi.n:
        # slopes span a lower-dimensional set: every gradient image is null
        return [MAMeasureEstimate(0.0, 0.0, B, 0.0) for B in sets]
    if y_radius is None:
        y_radius = default_y_radius(phi, sets)
    if x_radius is None:
        x_radius = 1.5 * max(B.extent() for B in sets) + 1e-12
    image = GradientImage(phi, x_radius, x_resolution)

    def estimate(res):
        quad = BallQuadrature(y_radius, f, lines=res, focus=y_radius)
        y = quad.segment_midpoints().reshape(-1, phi.n)
        w = quad.seg_mass.reshape(-1)
        keep = w > 0
        mem = image.member(y[keep], sets)
        return mem.astype(float) @ w[keep]

    fine = estimate(resolution)
    coarse = estimate(max(resolution // 2, 8)) if error_estimate else fine
    return [MAMeasureEstimate(float(v), float(abs(v - c)), B, float(y_radius)) for v, c, B in zip(fine, coarse, sets)]


def ma_measure(B: TestSet, phi: PLConvexFunction, f: Density, y_radius: float | None = None, resolution: int = 256,
               **kw) -> MAMeasureEstimate:
    return ma_measures([B], phi, f, y_radius=y_radius, resolution=resolution, **kw)[0]


@dataclass
class ResidualRow:
    set: TestSet
    lhs: float
    omega: float
    quadrature_error: float
    relative: float


@dataclass
class WeakResidualReport:
    rows: list[ResidualRow] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((r.relative for r in self.rows), default=0.0)

    def table(self) -> list[dict]:
        return [{"set": r.set.describe(), "lhs": r.lhs, "omega": r.omega, "quadrature_error": r.quadrature_error,
                 "relative_residual": r.relative} for r in self.rows]


def weak_residual_report(phi: PLConvexFunction, f: Density, g: Density, sets: Sequence[TestSet], **kw) -> WeakResidualReport:
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one test set")
    est = ma_measures(sets, phi, f, **kw)
    rep = WeakResidualReport()
    for B, e in zip(sets, est):
        lhs = set_mass(B, g)
        rel = abs(lhs - e.value) / max(lhs, MASS_FLOOR)
        rep.rows.append(ResidualRow(B, lhs, e.value, e.quadrature_error, rel))
    return rep


def weak_residual(phi: PLConvexFunction, f: Density, g: Density, sets: Sequence[TestSet], **kw) -> float:
    """max_B |int_B g - omega(B, phi, f)| / max(int_B g, 1e-12)."""
    return weak_residual_report(phi, f, g, sets, **kw).max_residual


def tent(center, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    """Continuous tent function supported on B(center, radius)."""
    c = np.asarray(center, float)

    def h(x):
        return np.clip(1.0 - np.linalg.norm(np.asarray(x, float) - c, axis=-1) / radius, 0.0, None)

    h.support = float(np.linalg.norm(c) + radius)
    return h


def integrate_against(h: Callable, phi: PLConvexFunction, f: Density, support: float, y_radius: float | None = None,
                      resolution: int = 256, x_resolution: int = 101) -> float:
    """int h d omega(., phi, f) = int h(x*(y)) f(y) dy.

    This is the limit of the Riemann sums over boxes weighted by omega:
    omega is the push-forward of f dy under y -> x*(y).
    """
    if y_radius is None:
        y_radius = default_y_radius(phi, [TestSet.ball([0.0] * phi.n, support)])
    image = GradientImage(phi, 1.5 * support, x_resolution)
    quad = BallQuadrature(y_radius, f, lines=resolution, focus=y_radius)
    y = quad.segment_midpoints().reshape(-1, phi.n)
    w = quad.seg_mass.reshape(-1)
    idx = image.maximizers(y, ties=1)[0][:, 0]
    return float((np.asarray(h(image.points[idx])) * w).sum())


@dataclass
class WeakConvergenceReport:
    integrals: np.ndarray  # (len(sequence), len(test_functions))
    reference: np.ndarray  # (len(test_functions),)
    discrepancy: np.ndarray  # per sequence entry, max over test functions

    @property
    def max_discrepancy(self) -> float:
        return float(self.discrepancy[-1])

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.discrepancy) <= 1e-12 * (1 + self.discrepancy[:-1])))


def weak_convergence_check(phis: Sequence[PLConvexFunction], fs: Sequence[Density], test_functions: Sequence[Callable],
                           reference_phi: PLConvexFunction, reference_f: Density, support: float | None = None,
                           resolution: int = 256) -> WeakConvergenceReport:
    """Compare int h d omega(., phi_j, f_j) with the reference measure for tent-like h."""
    if len(phis) < 2 or len(phis) != len(fs):
        raise ValueError("need at least two (phi, f) pairs")
    if support is None:
        support = max(getattr(h, "support", 1.0) for h in test_functions)
    # one y-domain for all members keeps the comparison on a common quadrature
    y_radius = max(default_y_radius(p, [TestSet.ball([0.0] * p.n, support)]) for p in list(phis) + [reference_phi])
    vals = np.array([[integrate_against(h, p, f, support, y_radius, resolution) for h in test_functions]
                     for p, f in zip(phis, fs)])
    ref = np.array([integrate_against(h, reference_phi, reference_f, support, y_radius, resolution)
                    for h in test_functions])
    disc = np.abs(vals - ref[None]).max(axis=1)
    return WeakConvergenceReport(vals, ref, disc)
