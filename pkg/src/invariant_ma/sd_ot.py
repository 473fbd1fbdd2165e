"""Semi-discrete transport from a ball to orbit-complete atoms.

The source measure g_k on B_k is integrated with a line-sweep rule in a
fixed generic frame: the first n-1 coordinates run over a graded tensor
grid of lines, and each line is cut into segments between graded nodes
along the last coordinate with the chord ends placed exactly on the
sphere.  Nodes are labelled by the argmax piece; segments whose ends
disagree are cut at the breakpoints of the upper envelope, so the
envelope along every line is exact.  Cell masses are then continuous,
piecewise linear functions of the intercepts, which lets a Newton-type
ascent drive the mass residual far below the node spacing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import special_ortho_group

from .densities import Density, ball_mass
from .groups import OrthogonalGroupSpec, generic_unit_vector
from .pl import PLConvexFunction
from .sampling import sphere_points

log = logging.getLogger(__name__)

_CHUNK = 1 << 22


class DegenerateTargets(ValueError):
    pass


class MaxIterExceeded(RuntimeError):
    def __init__(self, message, phi=None, trace=None):
        super().__init__(message)
        self.phi = phi
        self.trace = trace


class EmptyCell(RuntimeError):
    pass


def graded_nodes(extent: float, count: int, focus: float) -> np.ndarray:
    """``count`` nodes on [-extent, extent], denser within ``focus`` of 0."""
    xi = np.linspace(-1.0, 1.0, count)
    if focus <= 0 or extent <= 0:
        return xi * extent
    return focus * np.sinh(xi * np.arcsinh(extent / focus))


def sweep_frame(n: int) -> np.ndarray:
    """Fixed rotation taking quadrature coordinates to world coordinates.

    Lines run along the last column.  A generic direction keeps cell
    faces of symmetric target sets from lying parallel to the lines, where
    the line rule would make cell masses jump.
    """
    if n == 1:
        return np.eye(1)
    if n == 2:
        a = 0.3819660112501051
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return special_ortho_group.rvs(n, random_state=np.random.default_rng(12345))


@dataclass
class BallQuadrature:
    """Line-sweep quadrature of a density over the ball B_radius in R^n."""

    radius: float
    density: Density
    lines: int = 256
    nodes: int | None = None
    focus: float = 1.0
    frame: np.ndarray = field(init=False, repr=False)
    lines_t: np.ndarray = field(init=False, repr=False)
    s: np.ndarray = field(init=False, repr=False)
    rho: np.ndarray = field(init=False, repr=False)
    seg_mass: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.density.n
        R = float(self.radius)
        m = self.nodes or self.lines
        if n == 1:
            t = np.zeros((1, 0))
            w = np.ones(1)
        else:
            edges = np.linspace(-1.0, 1.0, self.lines + 1)
            e = self.focus * np.sinh(edges * np.arcsinh(R / self.focus))
            mid = 0.5 * (e[:-1] + e[1:])
            width = np.diff(e)
            grids = np.meshgrid(*([mid] * (n - 1)), indexing="ij")
            wgrids = np.meshgrid(*([width] * (n - 1)), indexing="ij")
            t = np.stack([g.ravel() for g in grids], axis=-1)
            w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=1)
            inside = np.linalg.norm(t, axis=1) < R
            t, w = t[inside], w[inside]
        half = np.sqrt(np.clip(R * R - (t * t).sum(axis=1), 0, None))
        xi = np.linspace(-1.0, 1.0, m + 1)
        scale = np.arcsinh(half / self.focus)
        s = self.focus * np.sinh(xi[None, :] * scale[:, None])
        mids = 0.5 * (s[:, :-1] + s[:, 1:])
        pts = np.concatenate([np.broadcast_to(t[:, None, :], mids.shape + (n - 1,)), mids[..., None]], axis=-1)
        self.frame = sweep_frame(n)
        dens = np.asarray(self.density(pts @ self.frame.T), dtype=float)
        rho = dens * w[:, None]
        seg = rho * np.diff(s, axis=1)
        total = seg.sum()
        exact = ball_mass(self.density, R)
        if total <= 0:
            if exact > 0:
                raise ValueError("quadrature sees no mass; refine the grid")
            factor = 1.0
        else:
            factor = exact / total
        self.lines_t = t
        self.s = s
        self.rho = rho * factor
        self.seg_mass = seg * factor
        self.total_mass = float(exact)

    @property
    def n(self) -> int:
        return self.density.n

    def node_points(self) -> np.ndarray:
        """All nodes in world coordinates, shape (lines, nodes+1, n)."""
        t = np.broadcast_to(self.lines_t[:, None, :], self.s.shape + (self.n - 1,))
        return np.concatenate([t, self.s[..., None]], axis=-1) @ self.frame.T

    def segment_midpoints(self) -> np.ndarray:
        mids = 0.5 * (self.s[:, :-1] + self.s[:, 1:])
        t = np.broadcast_to(self.lines_t[:, None, :], mids.shape + (self.n - 1,))
        return np.concatenate([t, mids[..., None]], axis=-1) @ self.frame.T

    def labels(self, slopes: np.ndarray, intercepts: np.ndarray) -> np.ndarray:
        """Lowest-index argmax piece at every node."""
        slopes = np.asarray(slopes, float) @ self.frame
        c = np.asarray(intercepts, float)
        base = self.lines_t @ slopes[:, :-1].T - c  # (lines, N)
        sn = slopes[:, -1]
        L, M1 = self.s.shape
        out = np.empty((L, M1), dtype=np.int64)
        step = max(1, _CHUNK // (M1 * len(c)))
        for i in range(0, L, step):
            v = base[i:i + step, None, :] + self.s[i:i + step, :, None] * sn
            out[i:i + step] = v.argmax(axis=2)
        return out

    def sweep(self, slopes, intercepts, split: bool = True, labels=None):
        """Masses, envelope integral and crossing data for one intercept vector.

        Segments whose end nodes share a label lie in one cell (two affine
        functions ordered at both ends stay ordered in between).  Mixed
        segments are cut at the crossing of the end pieces, checked for a
        third piece there, and cut again until the envelope along the
        segment is exact.  Density is constant per segment.
        """
        slopes = np.asarray(slopes, float) @ self.frame
        c = np.asarray(intercepts, float)
        N = len(c)
        lab = self.labels(slopes @ self.frame.T, c) if labels is None else labels
        a, b = lab[:, :-1], lab[:, 1:]
        s0, s1 = self.s[:, :-1], self.s[:, 1:]
        beta = self.lines_t @ slopes[:, :-1].T - c  # (lines, N)
        sn = slopes[:, -1]
        same = a == b
        line_idx = np.broadcast_to(np.arange(len(lab))[:, None], a.shape)

        # single-cell segments
        ls, la, lo, hi, rs = line_idx[same], a[same], s0[same], s1[same], self.rho[same]
        mass = np.bincount(la, rs * (hi - lo), N)
        envelope = float((rs * (hi - lo) * (beta[ls, la] + sn[la] * 0.5 * (lo + hi))).sum())

        mixed = ~same
        ln, pa, pb = line_idx[mixed], a[mixed], b[mixed]
        lo, hi, rm = s0[mixed], s1[mixed], self.rho[mixed]
        if not split:
            mid = 0.5 * (lo + hi)
            mass += np.bincount(pa, rm * (mid - lo), N) + np.bincount(pb, rm * (hi - mid), N)
            envelope += float((rm * (mid - lo) * (beta[ln, pa] + sn[pa] * 0.5 * (lo + mid))).sum())
            envelope += float((rm * (hi - mid) * (beta[ln, pb] + sn[pb] * 0.5 * (mid + hi))).sum())
            empty = np.array([], dtype=int)
            return mass, envelope, (empty, empty, np.array([]))

        done = []
        scale = max(1.0, float(np.abs(beta).max()) + float(np.abs(sn).max()) * self.radius)
        for _ in range(64):
            if len(ln) == 0:
                break
            dn = sn[pb] - sn[pa]
            ok = np.abs(dn) > 1e-300
            with np.errstate(divide="ignore", invalid="ignore"):
                x = np.where(ok, (beta[ln, pa] - beta[ln, pb]) / np.where(ok, dn, 1.0), 0.5 * (lo + hi))
            x = np.clip(x, lo, hi)
            va = beta[ln, pa] + sn[pa] * x
            best = np.empty(len(ln), dtype=np.int64)
            step = max(1, _CHUNK // N)
            for i in range(0, len(ln), step):
                sl = slice(i, i + step)
                best[i:i + step] = (beta[ln[sl]] + x[sl, None] * sn).argmax(axis=1)
            vbest = beta[ln, best] + sn[best] * x
            third = (vbest > va + 1e-13 * scale) & (best != pa) & (best != pb)
            fin = ~third
            done.append((ln[fin], pa[fin], pb[fin], lo[fin], hi[fin], x[fin], rm[fin]))
            ln, pa, pb, lo, hi, x, rm, best = (v[third] for v in (ln, pa, pb, lo, hi, x, rm, best))
            ln = np.concatenate([ln, ln])
            lo, hi = np.concatenate([lo, x]), np.concatenate([x, hi])
            pa, pb = np.concatenate([pa, best]), np.concatenate([best, pb])
            rm = np.concatenate([rm, rm])
            keep = pa != pb
            if not np.all(keep):
                w = ~keep
                mass += np.bincount(pa[w], rm[w] * (hi[w] - lo[w]), N)
                envelope += float((rm[w] * (hi[w] - lo[w]) * (beta[ln[w], pa[w]] + sn[pa[w]] * 0.5 * (lo[w] + hi[w]))).sum())
                ln, pa, pb, lo, hi, rm = (v[keep] for v in (ln, pa, pb, lo, hi, rm))
        else:
            raise RuntimeError("envelope refinement did not terminate")
        if done:
            ln, pa, pb, lo, hi, x, rm = (np.concatenate(v) for v in zip(*done))
        else:
            ln = pa = pb = np.array([], dtype=int)
            lo = hi = x = rm = np.array([])
        left, right = rm * (x - lo), rm * (hi - x)
        mass += np.bincount(pa, left, N) + np.bincount(pb, right, N)
        envelope += float((left * (beta[ln, pa] + sn[pa] * 0.5 * (lo + x))).sum())
        envelope += float((right * (beta[ln, pb] + sn[pb] * 0.5 * (x + hi))).sum())
        inner = (x > lo) & (x < hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa = rm[inner] / np.abs(sn[pb[inner]] - sn[pa[inner]])
        good = np.isfinite(kappa)
        return mass, envelope, (pa[inner][good], pb[inner][good], kappa[good])


@dataclass
class TargetSet:
    points: np.ndarray
    masses: np.ndarray
    orbit: np.ndarray
    radius: float

    def __len__(self):
        return len(self.points)


def orbit_permutations(points: np.ndarray, group: OrthogonalGroupSpec, tol: float = 1e-8) -> np.ndarray:
    """perm[g, i] = index of g.points[i]; raises if the set is not invariant."""
    tree = cKDTree(points)
    scale = max(1.0, float(np.abs(points).max()))
    perms = []
    for g in group.elements:
        d, idx = tree.query(points @ g.T)
        if np.any(d > tol * scale):
            raise DegenerateTargets("target set is not invariant under the group")
        perms.append(idx)
    return np.array(perms)


def orbit_labels(points: np.ndarray, group: OrthogonalGroupSpec) -> np.ndarray:
    perms = orbit_permutations(points, group)
    lab = -np.ones(len(points), dtype=int)
    nxt = 0
    for i in range(len(points)):
        if lab[i] < 0:
            lab[np.unique(perms[:, i])] = nxt
            nxt += 1
    return lab


def _radial_quantiles(n: int, radius: float, focus: float, count: int) -> np.ndarray:
    # point density proportional to (1 + (r/focus)^2)^(-n): fine near the
    # focus region, coarse far out
    r = np.linspace(0.0, radius, 20001)
    w = r ** (n - 1) / (1 + (r / focus) ** 2) ** n
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(r))])
    cdf /= cdf[-1]
    return np.interp((np.arange(count) + 0.5) / count, cdf, r)


def fundamental_directions(group: OrthogonalGroupSpec, count: int) -> np.ndarray:
    """``count`` low-discrepancy unit vectors in a Dirichlet domain of the group.

    In the plane the domain is the sector of width 2 pi/|K| around a generic
    direction and the angles follow the golden-ratio sequence, so that with
    quantile radii the base points form a Fibonacci lattice of the sector.
    """
    n = group.dimension
    v = generic_unit_vector(n)
    if n == 2:
        frac = (np.arange(count) * 0.6180339887498949 + 0.5) % 1.0
        theta = np.arctan2(v[1], v[0]) + (frac - 0.5) * 2 * np.pi / group.order
        return np.column_stack([np.cos(theta), np.sin(theta)])
    out = []
    total = 0
    batch = max(64, 4 * count * group.order)
    while len(out) < count:
        xs = sphere_points(n, total + batch)[total:]
        total += batch
        score = np.einsum("gij,sj,i->sg", group.elements, xs, v)
        best = score.max(axis=1)
        ident = score[:, 0] if np.allclose(group.elements[0], np.eye(n)) else None
        if ident is None:
            e = int(np.argmin(np.abs(group.elements - np.eye(n)).max(axis=(1, 2))))
            ident = score[:, e]
        inside = ident >= best - 1e-12
        out.extend(xs[inside])
        if total > 10 ** 7:
            raise DegenerateTargets("could not sample the fundamental domain")
    return np.array(out[:count])


def target_layout(group: OrthogonalGroupSpec, radius: float, count: int, focus: float = 1.0,
                  base_points=None) -> tuple[np.ndarray, np.ndarray]:
    """Orbit-complete points in B_radius and their orbit labels."""
    from .groups import dedupe_points

    n = group.dimension
    if base_points is not None:
        base = np.atleast_2d(np.asarray(base_points, dtype=float))
        if np.any(np.linalg.norm(base, axis=1) > radius * (1 + 1e-12)):
            raise DegenerateTargets("base points must lie in the target ball")
        orbits = [dedupe_points(group.apply(b)) for b in base]
    else:
        size = group.order
        with_origin = count - 1 >= size
        J = (count - 1) // size if with_origin else count // size
        if J < 1:
            raise DegenerateTargets(f"{count} targets cannot hold one orbit of size {size}")
        dirs = fundamental_directions(group, J)
        radii = _radial_quantiles(n, radius, focus, J)
        orbits = [np.zeros((1, n))] if with_origin else []
        orbits += [dedupe_points(group.apply(r * d)) for r, d in zip(radii, dirs)]
    pts = np.concatenate(orbits)
    lab = np.concatenate([np.full(len(o), j) for j, o in enumerate(orbits)])
    uniq = dedupe_points(pts)
    if len(uniq) < len(pts):
        # coincident orbits: merge them
        pts, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
        pts = np.concatenate(orbits)[np.sort(idx)]
        lab = orbit_labels(pts, group)
    if len(pts) < n + 1:
        raise DegenerateTargets(f"only {len(pts)} distinct targets; need at least {n + 1}")
    return pts, lab


def orbit_average(values: np.ndarray, orbit: np.ndarray) -> np.ndarray:
    sums = np.bincount(orbit, values)
    counts = np.bincount(orbit)
    return (sums / counts)[orbit]


def sample_targets(f_k: Density, R_k: float, N: int, group: OrthogonalGroupSpec, *, g_mass: float | None = None,
                   focus: float = 1.0, lines: int = 256, base_points=None) -> TargetSet:
    """Orbit-complete atoms in B_{R_k} carrying the Voronoi masses of f_k.

    Masses are integrated with the line-sweep rule (Voronoi cells are the
    power cells with intercepts |y|^2/2), averaged over each orbit, and
    rescaled to ``g_mass`` when given.
    """
    if base_points is None and N < f_k.n + 1:
        raise DegenerateTargets(f"need N >= n + 1 = {f_k.n + 1} targets")
    pts, lab = target_layout(group, R_k, N, focus=focus, base_points=base_points)
    quad = BallQuadrature(R_k, f_k, lines=lines, focus=focus)
    mass, _, _ = quad.sweep(pts, 0.5 * (pts * pts).sum(axis=1))
    mass = orbit_average(mass, lab)
    if np.any(mass <= 0):
        keep = mass > 0
        log.warning("dropping %d targets whose Voronoi cells hold no quadrature mass", int((~keep).sum()))
        pts, lab = pts[keep], np.unique(lab[keep], return_inverse=True)[1]
        if len(pts) < f_k.n + 1:
            raise DegenerateTargets("too few targets with positive mass")
        mass, _, _ = quad.sweep(pts, 0.5 * (pts * pts).sum(axis=1))
        mass = orbit_average(mass, lab)
    if g_mass is not None:
        mass = mass * (g_mass / mass.sum())
    return TargetSet(pts, mass, lab, float(R_k))


@dataclass
class OTProblemInstance:
    source_radius: float
    source_density: Density
    targets: np.ndarray
    masses: np.ndarray
    target_radius: float
    orbit: np.ndarray | None = None
    group: OrthogonalGroupSpec | None = None

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, float))
        self.masses = np.asarray(self.masses, float)
        if self.orbit is None:
            if self.group is not None:
                self.orbit = orbit_labels(self.targets, self.group)
            else:
                self.orbit = np.arange(len(self.targets))
        self.orbit = np.asarray(self.orbit, dtype=int)
        if np.any(self.masses <= 0):
            raise ValueError("target masses must be positive")
        total = ball_mass(self.source_density, self.source_radius)
        if abs(self.masses.sum() - total) > 1e-8 * total:
            raise ValueError(f"target masses sum to {self.masses.sum():.12g}, source mass is {total:.12g}")
        if np.any(np.linalg.norm(self.targets, axis=1) > self.target_radius * (1 + 1e-12)):
            raise ValueError("targets must lie in the target ball")
        if self.group is not None and self.group.is_finite:
            perms = orbit_permutations(self.targets, self.group)
            if np.any(self.orbit[perms] != self.orbit[None, :]):
                raise ValueError("orbit labels are inconsistent with the group")
            if np.abs(self.masses[perms] - self.masses[None, :]).max() > 1e-10 * self.masses.max():
                raise ValueError("targets in one orbit must carry equal masses")

    @classmethod
    def from_targets(cls, k, g_k, ts: TargetSet, group=None) -> "OTProblemInstance":
        return cls(k, g_k, ts.points, ts.masses, ts.radius, ts.orbit, group)


@dataclass
class SolverTrace:
    iterations: int = 0
    residual: float = np.inf
    objective: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    converged: bool = False

    def is_monotone(self, tol: float = 1e-12) -> bool:
        h = np.asarray(self.objective)
        if len(h) < 2:
            return True
        scale = max(1.0, float(np.abs(h).max()))
        return bool(np.all(np.diff(h) >= -tol * scale))


def make_quadrature(inst: OTProblemInstance, lines: int = 256, focus: float = 1.0) -> BallQuadrature:
    return BallQuadrature(inst.source_radius, inst.source_density, lines=lines, focus=focus)


def cell_masses(inst: OTProblemInstance, intercepts, quad: BallQuadrature | None = None, split: bool = True,
                symmetrize: bool = False) -> np.ndarray:
    """Source mass of each power cell for the given intercepts.

    With ``split=False`` every node carries half of each adjacent segment,
    which is plain argmax assignment of quadrature nodes.
    """
    quad = quad or make_quadrature(inst)
    m, _, _ = quad.sweep(inst.targets, intercepts, split=split)
    return orbit_average(m, inst.orbit) if symmetrize else m


def _dual(quad, inst, c, labels=None):
    m, env, cross = quad.sweep(inst.targets, c, labels=labels)
    return -(c * inst.masses).sum() - env, m, cross


def radial_initial_intercepts(inst: OTProblemInstance) -> np.ndarray:
    """Intercepts of the radially monotone guess.

    Each target radius s is matched with the source radius whose ball holds
    the same mass as the targets inside s; integrating that radius map gives
    a convex radial potential psi, and c_i = psi(|y_i|).
    """
    r = np.linalg.norm(inst.targets, axis=1)
    order = np.argsort(r, kind="stable")
    rs = r[order]
    cum = np.cumsum(inst.masses[order]) - 0.5 * inst.masses[order]
    grid = np.linspace(0.0, inst.source_radius, 513)
    G = np.array([0.0] + [ball_mass(inst.source_density, t) for t in grid[1:]])
    G = np.maximum.accumulate(G)
    xr = np.interp(cum, G, grid)
    s = np.concatenate([[0.0], rs])
    xs = np.concatenate([[0.0], xr])
    psi = np.concatenate([[0.0], np.cumsum(0.5 * (xs[1:] + xs[:-1]) * np.diff(s))])[1:]
    c = np.empty(len(r))
    c[order] = psi
    return c


def solve_weights(inst: OTProblemInstance, tol: float = 1e-4, max_iter: int = 200,
                  quad: BallQuadrature | None = None, init: np.ndarray | None = None,
                  raise_on_fail: bool = False) -> tuple[PLConvexFunction, SolverTrace]:
    """Intercepts c with cell masses matching the target masses.

    Maximises the concave dual  D(c) = -sum c_i nu_i - int max_i(<y_i,x> - c_i) g_k(x) dx
    whose gradient is m(c) - nu.  Unknowns are one intercept per orbit;
    steps are damped Newton directions from the crossing-length Hessian,
    halved until the objective rises by an Armijo fraction (or, once the
    objective is flat to rounding, the relative residual shrinks) and no
    cell empties, with a diagonally preconditioned gradient step as fallback.
    """
    quad = quad or make_quadrature(inst)
    y, nu, orb = inst.targets, inst.masses, inst.orbit
    J = int(orb.max()) + 1
    V = np.bincount(orb, nu, J)
    if init is None:
        u_full = radial_initial_intercepts(inst)
        u = np.bincount(orb, u_full, J) / np.bincount(orb, minlength=J)
    else:
        u = np.bincount(orb, np.asarray(init, float), J) / np.bincount(orb, minlength=J)

    trace = SolverTrace()
    D, m, cross = _dual(quad, inst, u[orb])
    M = np.bincount(orb, m, J)
    u, D, M, cross = _revive_empty(quad, inst, u, D, M, cross, V)
    trace.objective.append(D)
    floor = 0.5 * min(M.min(), V.min())

    def residual(Mo):
        return float((np.abs(Mo - V) / V).max())

    res = residual(M)
    trace.residuals.append(res)
    it = 0
    while res > tol and it < max_iter:
        it += 1
        grad = M - V
        a_idx, b_idx, kappa = cross
        A = np.zeros((J, J))
        oa, ob = orb[a_idx], orb[b_idx]
        np.add.at(A, (oa, oa), kappa)
        np.add.at(A, (ob, ob), kappa)
        np.add.at(A, (oa, ob), -kappa)
        np.add.at(A, (ob, oa), -kappa)
        directions = []
        try:
            ridge = 1e-12 * max(1.0, np.trace(A) / J)
            directions.append(np.linalg.solve(A + ridge * np.eye(J), grad))
        except np.linalg.LinAlgError:
            pass
        diag = np.diag(A).copy()
        diag[diag <= 0] = max(diag.max(), 1.0)
        directions.append(grad / diag)
        accepted = False
        gnorm = float(np.linalg.norm(grad / V))
        for direction in directions:
            slope = float(grad @ direction)
            tau = 1.0
            while tau > 1e-8:
                u_new = u + tau * direction
                D_new, m_new, cross_new = _dual(quad, inst, u_new[orb])
                M_new = np.bincount(orb, m_new, J)
                if M_new.min() >= floor:
                    gain = D_new - D
                    noise = 1e-12 * max(1.0, abs(D))
                    if gain >= 1e-4 * tau * slope and gain > noise:
                        accepted = True
                    elif abs(gain) <= noise and np.linalg.norm((M_new - V) / V) < (1 - 0.25 * tau) * gnorm:
                        # objective flat to rounding: fall back on the gradient norm
                        accepted = True
                    if accepted:
                        break
                tau *= 0.5
            if accepted:
                break
        if not accepted:
            log.warning("solve_weights: no ascent step found at iteration %d (residual %.3g)", it, res)
            break
        u, D, M, cross = u_new, max(D_new, D), M_new, cross_new
        res = residual(M)
        trace.objective.append(D)
        trace.residuals.append(res)
        trace.steps.append(tau)
    trace.iterations = it
    trace.residual = res
    trace.converged = res <= tol
    phi = PLConvexFunction(y, u[orb], orb)
    if not trace.converged and raise_on_fail:
        raise MaxIterExceeded(f"mass residual {res:.3g} above {tol:.3g} after {it} iterations", phi, trace)
    return phi, trace


def _revive_empty(quad, inst, u, D, M, cross, V):
    """Lower the intercept of orbits whose cells miss every quadrature node."""
    orb = inst.orbit
    J = len(u)
    for _ in range(20):
        empty = np.flatnonzero(M <= 0)
        if len(empty) == 0:
            return u, D, M, cross
        x = quad.node_points().reshape(-1, quad.n)
        c = u[orb]
        phi = PLConvexFunction(inst.targets, c)
        vals = phi(x)
        for o in empty:
            i = int(np.flatnonzero(orb == o)[0])
            gap = (x @ inst.targets[i] - c[i] - vals).max()
            u[o] += gap - 1e-9 * max(1.0, abs(gap))
        D, m, cross = _dual(quad, inst, u[orb])
        M = np.bincount(orb, m, J)
        if np.all(M > 0):
            return u, D, M, cross
        # a revived cell might still be too thin; nudge further
        u[M <= 0] -= 1e-3 * max(1.0, np.abs(u).max())
    raise EmptyCell("cells with positive target mass stay empty; refine the source grid")
