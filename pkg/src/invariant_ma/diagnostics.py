"""Numerical surrogates for properness, the gradient-image bounds, strict
convexity, gradient Hoelder regularity and equivariance of a solution."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .densities import ConstantDensity, Density
from .groups import OrthogonalGroupSpec
from .measure import TestSet, ma_measures
from .pl import PLConvexFunction, ball_grid
from .sampling import sphere_points


class EmptySublevel(ValueError):
    pass


class InsufficientVariation(ValueError):
    pass


@dataclass
class PropernessReport:
    radii: list
    minima: list
    verdict: str

    def table(self) -> list[dict]:
        return [{"r": r, "min_on_sphere": m} for r, m in zip(self.radii, self.minima)]


def properness_check(phi: Callable, radii, directions: int = 512, slack: float = 0.1,
                     flat_tol: float = 0.0) -> PropernessReport:
    """Minimum of phi over spheres of the given radii.

    PROPER-TREND when the minima increase strictly with increments that do
    not shrink (up to ``slack`` relative, which absorbs the granularity of
    piecewise-linear solutions); FLAT otherwise.  A total rise of at most
    ``flat_tol`` also counts as FLAT: an iterate known only to within that
    tolerance cannot be told apart from a constant.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("need at least three increasing radii")
    n = phi.n if isinstance(phi, PLConvexFunction) else int(getattr(phi, "n", 2))
    dirs = sphere_points(n, directions)
    mins = [float(np.min(phi(r * dirs))) for r in radii]
    inc = np.diff(mins)
    scale = max(abs(mins[-1]), 1e-12)
    proper = bool(np.all(inc > 1e-12 * scale) and np.all(inc[1:] >= (1 - slack) * inc[:-1])
                  and mins[-1] - mins[0] > flat_tol)
    return PropernessReport(radii, mins, "PROPER-TREND" if proper else "FLAT")


@dataclass
class Eq4Report:
    c: float
    lambda1: float
    lambda2: float
    ratios: list
    centers: list
    ball_radius: float
    predicted: tuple | None = None


def eq4_bounds(phi: PLConvexFunction, c: float, f: Density | None = None, g: Density | None = None,
               balls: int = 24, ball_radius: float | None = None, domain_radius: float = 1.0, seed: int = 0,
               resolution: int = 256) -> Eq4Report:
    """lambda_1 |B| <= |grad phi(B)| <= lambda_2 |B| over balls inside {phi <= c}.

    Ball centres are drawn from grid points of the sublevel set whose whole
    ball stays in it.  With f, g given, the range of g(x)/f(grad phi(x)) at
    the centres is returned as the predicted band.
    """
    n = phi.n
    grid = ball_grid(domain_radius, 81, n)
    below = phi(grid) <= c
    sub = grid[below]
    if len(sub) == 0:
        raise EmptySublevel(f"no grid point with phi <= {c:g}")
    if ball_radius is None:
        spread = np.linalg.norm(sub, axis=1).max()
        ball_radius = max(0.1 * spread, 1e-3)
    # a ball fits when it stays in the domain and away from grid points above c
    h = 2.0 * domain_radius / 80
    ok = np.linalg.norm(sub, axis=1) + ball_radius <= domain_radius
    if np.any(~below):
        dist, _ = cKDTree(grid[~below]).query(sub)
        ok &= dist >= ball_radius + h
    sub = sub[ok]
    if len(sub) == 0:
        raise EmptySublevel(f"no ball of radius {ball_radius:g} fits in the sublevel set")
    rng = np.random.default_rng(seed)
    centers = sub[rng.choice(len(sub), size=min(balls, len(sub)), replace=False)]
    sets = [TestSet.ball(x, ball_radius) for x in centers]
    est = ma_measures(sets, phi, ConstantDensity(n, 1.0), resolution=resolution, error_estimate=False)
    ratios = [e.value / B.volume() for e, B in zip(est, sets)]
    predicted = None
    if f is not None and g is not None:
        q = np.asarray(g(centers)) / np.maximum(np.asarray(f(phi.gradient_select(centers))), 1e-300)
        predicted = (float(q.min()), float(q.max()))
    return Eq4Report(float(c), float(min(ratios)), float(max(ratios)), ratios, centers.tolist(), float(ball_radius),
                     predicted)


@dataclass
class StrictConvexityReport:
    segments: int
    min_length: float
    min_gap: float


def strict_convexity_probe(phi: Callable, segments: int = 1000, min_length: float = 0.1, radius: float = 1.0,
                           length: float | None = None, seed: int = 0, n: int | None = None) -> StrictConvexityReport:
    """min over random segments [x, y] in B_radius of (phi(x)+phi(y))/2 - phi((x+y)/2).

    Segments have |x - y| >= min_length, or exactly ``length`` when given.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    n = n or (phi.n if isinstance(phi, PLConvexFunction) else 2)
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    while len(xs) < segments:
        m = rng.normal(size=(4 * segments, n))
        m *= (radius * rng.random(4 * segments) ** (1 / n) / np.linalg.norm(m, axis=1))[:, None]
        if length is None:
            other = rng.normal(size=(4 * segments, n))
            other *= (radius * rng.random(4 * segments) ** (1 / n) / np.linalg.norm(other, axis=1))[:, None]
            ok = np.linalg.norm(other - m, axis=1) >= min_length
            xs.extend(m[ok])
            ys.extend(other[ok])
        else:
            d = rng.normal(size=(4 * segments, n))
            d *= (length / np.linalg.norm(d, axis=1))[:, None]
            other = m + d
            ok = np.linalg.norm(other, axis=1) <= radius
            xs.extend(m[ok])
            ys.extend(other[ok])
    x, y = np.array(xs[:segments]), np.array(ys[:segments])
    gap = 0.5 * (phi(x) + phi(y)) - phi(0.5 * (x + y))
    return StrictConvexityReport(segments, float(length if length is not None else min_length), float(gap.min()))


@dataclass
class HolderFit:
    beta: float
    residual: float
    raw_slope: float
    pairs: int
    min_separation: float
    low_confidence: bool
    # (log separation, log gradient difference) per kept pair, for plotting
    points: np.ndarray | None = field(default=None, repr=False, compare=False)


def _gradient_fn(phi):
    if isinstance(phi, PLConvexFunction):
        return phi.gradient_select
    if hasattr(phi, "gradient"):
        return phi.gradient
    raise TypeError("need a PL function or an object with a gradient method")


def cell_diameter(phi: PLConvexFunction, radius: float, n: int) -> float:
    """Typical cell diameter over B_radius: 2 (|B| / #cells)^(1/n)."""
    grid = ball_grid(radius, 81, n)
    cells = len(np.unique(phi.argmax(grid)))
    from .densities import unit_ball_volume
    return 2.0 * (unit_ball_volume(n) * radius ** n / max(cells, 1)) ** (1.0 / n)


def holder_gradient_fit(phi, radius: float = 1.0, pairs: int = 2000, min_separation: float | None = None,
                        window: str = "all", seed: int = 0, n: int | None = None) -> HolderFit:
    """Least-squares slope of log|grad phi(x) - grad phi(y)| against log|x - y|.

    ``window='all'`` samples pairs across B_radius; ``window='origin'`` takes
    pairs from B_{radius/4} lying on opposite sides of the origin.  Pairs
    closer than ``min_separation`` (default: one cell diameter for PL phi)
    are discarded.  The exponent is clipped to (0, 1].
    """
    if pairs < 100:
        raise ValueError("pairs must be >= 100")
    n = n or (phi.n if isinstance(phi, PLConvexFunction) else 2)
    grad = _gradient_fn(phi)
    if min_separation is None:
        min_separation = cell_diameter(phi, radius, n) if isinstance(phi, PLConvexFunction) else 0.0
    rng = np.random.default_rng(seed)
    R = radius if window == "all" else radius / 4

    def draw(m):
        p = rng.normal(size=(m, n))
        return p * (R * rng.random(m) ** (1 / n) / np.linalg.norm(p, axis=1))[:, None]

    xs, ys = [], []
    tries = 0
    while len(xs) < pairs and tries < 50:
        tries += 1
        x, y = draw(4 * pairs), draw(4 * pairs)
        ok = np.linalg.norm(x - y, axis=1) >= max(min_separation, 1e-12)
        if window == "origin":
            ok &= np.einsum("ij,ij->i", x, y) < 0
        xs.extend(x[ok])
        ys.extend(y[ok])
    x, y = np.array(xs[:pairs]), np.array(ys[:pairs])
    if len(x) < 10:
        raise InsufficientVariation("too few pairs above the minimum separation")
    dg = np.linalg.norm(grad(x) - grad(y), axis=1)
    dx = np.linalg.norm(x - y, axis=1)
    keep = dg > 1e-14
    if keep.sum() < 10:
        raise InsufficientVariation("gradient is (nearly) constant on the sampled pairs")
    lx, lg = np.log(dx[keep]), np.log(dg[keep])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, lg, rcond=None)
    resid = lg - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    ss = float(np.sum((lg - lg.mean()) ** 2))
    r2 = 1 - float(np.sum(resid ** 2)) / ss if ss > 0 else 0.0
    slope = float(coef[0])
    beta = float(np.clip(slope, 1e-6, 1.0))
    return HolderFit(beta, rms, slope, int(keep.sum()), float(min_separation), bool(r2 < 0.5 or slope <= 0),
                     np.column_stack([lx, lg]))


@dataclass
class EquivarianceReport:
    value_violation: float
    gradient_violation: float


def equivariance_check(phi: Callable, group: OrthogonalGroupSpec, grid: np.ndarray, gap: float = 1e-6
                       ) -> EquivarianceReport:
    """max |phi(gx) - phi(x)| and max |grad phi(gx) - g grad phi(x)| over grid x and g in K.

    Gradients of a PL phi are compared only at points whose active piece
    wins by more than ``gap`` at both x and gx (cell interiors).
    """
    if not group.is_finite:
        raise ValueError("equivariance_check needs an explicit finite group")
    grid = np.asarray(grid, dtype=float)
    base = phi(grid)
    vmax = 0.0
    gmax = 0.0
    pl = isinstance(phi, PLConvexFunction)
    if pl:
        def interior(p):
            v = phi.affine_values(p)
            top = np.partition(v, -2, axis=1)[:, -2:] if v.shape[1] > 1 else np.column_stack([v[:, 0] - 1, v[:, 0]])
            return top[:, 1] - top[:, 0] > gap
        inner = interior(grid)
        gbase = phi.gradient_select(grid)
    for gm in group.elements:
        moved = grid @ gm.T
        vmax = max(vmax, float(np.abs(phi(moved) - base).max()))
        if pl:
            ok = inner & interior(moved)
            if np.any(ok):
                d = phi.gradient_select(moved[ok]) - gbase[ok] @ gm.T
                gmax = max(gmax, float(np.linalg.norm(d, axis=1).max()))
        elif hasattr(phi, "gradient"):
            d = phi.gradient(moved) - phi.gradient(grid) @ gm.T
            gmax = max(gmax, float(np.linalg.norm(d, axis=1).max()))
    return EquivarianceReport(vmax, gmax)


@dataclass
class DiagnosticsReport:
    properness: PropernessReport
    eq4: Eq4Report | None
    strict_convexity: StrictConvexityReport
    holder: HolderFit | None
    equivariance: EquivarianceReport | None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["holder"] is not None:
            d["holder"].pop("points", None)
        return d


def run_diagnostics(phi: PLConvexFunction, f: Density, g: Density, group: OrthogonalGroupSpec | None,
                    radius: float = 1.0, seed: int = 0, c: float | None = None,
                    flat_tol: float = 0.0) -> DiagnosticsReport:
    """All diagnostics with defaults scaled to the eval radius."""
    notes = []
    radii = [radius * j / 4 for j in range(1, 5)]
    prop = properness_check(phi, radii, flat_tol=flat_tol)
    if c is None:
        c = float(prop.minima[-1])
    try:
        eq4 = eq4_bounds(phi, c, f, g, domain_radius=radius, seed=seed)
    except EmptySublevel as exc:
        eq4 = None
        notes.append(f"eq4: {exc}")
    sc = strict_convexity_probe(phi, radius=radius, seed=seed)
    try:
        hol = holder_gradient_fit(phi, radius=radius, seed=seed)
    except InsufficientVariation as exc:
        hol = None
        notes.append(f"holder: {exc}")
    eqv = None
    if group is not None and group.is_finite:
        eqv = equivariance_check(phi, group, ball_grid(radius, 41, phi.n))
    return DiagnosticsReport(prop, eq4, sc, hol, eqv, notes)
