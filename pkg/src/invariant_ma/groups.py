"""Finite subgroups of O(n), their orbits, and orbit-hull inradii.

Groups are stored as explicit lists of orthogonal matrices.  The full
rotation group is carried as a separate ``full-rotation`` mode with no
element list; every unit orbit is then the whole sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .sampling import sphere_points

ORTHO_TOL = 1e-10
CLOSURE_TOL = 1e-8
ORBIT_TOL = 1e-10


class ClosureOverflow(ValueError):
    """The generated group exceeds the element cap."""


class DegenerateOrbit(ValueError):
    """The convex hull of an orbit has empty interior."""


class GroupDescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class OrthogonalGroupSpec:
    dimension: int
    elements: np.ndarray = field(repr=False)
    mode: str = "explicit-finite"
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("explicit-finite", "full-rotation"):
            raise ValueError(f"unknown group mode {self.mode!r}")
        els = np.asarray(self.elements, dtype=float).reshape(-1, self.dimension, self.dimension)
        object.__setattr__(self, "elements", els)
        if self.mode == "explicit-finite":
            eye = np.eye(self.dimension)
            for g in els:
                if np.abs(g.T @ g - eye).max() > ORTHO_TOL:
                    raise ValueError("group element is not orthogonal")
            if not np.any(np.all(np.abs(els - eye) <= CLOSURE_TOL, axis=(1, 2))):
                raise ValueError("identity is missing from the group elements")

    @property
    def order(self) -> int:
        if self.mode == "full-rotation":
            raise ValueError("full-rotation group has no finite order")
        return len(self.elements)

    @property
    def is_finite(self) -> bool:
        return self.mode == "explicit-finite"

    def is_closed(self, tol: float = CLOSURE_TOL) -> bool:
        els = self.elements
        flat = els.reshape(len(els), -1)
        for a in els:
            prods = (a @ els).reshape(len(els), -1)
            d = np.abs(prods[:, None, :] - flat[None, :, :]).max(axis=2)
            if not np.all(d.min(axis=1) <= tol):
                return False
        return True

    def conjugate(self, q: np.ndarray) -> "OrthogonalGroupSpec":
        """The group q K q^T for an orthogonal matrix q."""
        q = np.asarray(q, dtype=float)
        els = np.einsum("ij,gjk,lk->gil", q, self.elements, q)
        return OrthogonalGroupSpec(self.dimension, els, self.mode, f"conj({self.name})")

    def apply(self, x: np.ndarray) -> np.ndarray:
        """All images g.x, shape ``(|K|, ..., n)``."""
        x = np.asarray(x, dtype=float)
        return np.einsum("gij,...j->g...i", self.elements, x)


def _dedupe_matrices(mats: list[np.ndarray], tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for m in mats:
        if not any(np.abs(m - o).max() <= tol for o in out):
            out.append(m)
    return out


def close_group(generators: Sequence[np.ndarray], cap: int = 1000, name: str = "") -> OrthogonalGroupSpec:
    """Generate the finite group spanned by orthogonal ``generators``.

    Raises ClosureOverflow when more than ``cap`` distinct elements appear,
    which is what happens for generators of infinite order.
    """
    gens = [np.asarray(g, dtype=float) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    n = gens[0].shape[0]
    eye = np.eye(n)
    for g in gens:
        if g.shape != (n, n) or np.abs(g.T @ g - eye).max() > ORTHO_TOL:
            raise ValueError("generators must be orthogonal n x n matrices")
    gens = _dedupe_matrices(gens, CLOSURE_TOL)

    elements = [eye]
    keys = np.array([eye.ravel()])
    frontier = [eye]
    while frontier:
        new = []
        for a in frontier:
            for g in gens:
                p = g @ a
                if np.abs(keys - p.ravel()).max(axis=1).min() > CLOSURE_TOL:
                    elements.append(p)
                    keys = np.vstack([keys, p.ravel()])
                    new.append(p)
                    if len(elements) > cap:
                        raise ClosureOverflow(
                            f"closure exceeds {cap} elements; for a continuous group use "
                            "the full-rotation mode"
                        )
        frontier = new
    return OrthogonalGroupSpec(n, np.array(elements), name=name)


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def cyclic(m: int) -> OrthogonalGroupSpec:
    """Rotations of the plane by multiples of 2*pi/m."""
    if m < 1:
        raise GroupDescriptorError("cyclic order must be >= 1")
    els = np.array([rotation2(2 * np.pi * j / m) for j in range(m)])
    return OrthogonalGroupSpec(2, els, name=f"cyclic:{m}")


def dihedral(m: int) -> OrthogonalGroupSpec:
    """Symmetries of the regular m-gon (order 2m), one mirror on the x-axis."""
    if m < 1:
        raise GroupDescriptorError("dihedral order must be >= 1")
    flip = np.diag([1.0, -1.0])
    rots = [rotation2(2 * np.pi * j / m) for j in range(m)]
    els = np.array(rots + [r @ flip for r in rots])
    return OrthogonalGroupSpec(2, els, name=f"dihedral:{m}")


def hyperoctahedral(n: int) -> OrthogonalGroupSpec:
    """Signed permutation matrices, the symmetry group of the n-cube."""
    from itertools import permutations, product

    els = []
    for perm in permutations(range(n)):
        p = np.eye(n)[list(perm)]
        for signs in product((1.0, -1.0), repeat=n):
            els.append(np.diag(signs) @ p)
    return OrthogonalGroupSpec(n, np.array(els), name=f"hyperoctahedral:{n}")


def neg_identity(n: int) -> OrthogonalGroupSpec:
    eye = np.eye(n)
    return OrthogonalGroupSpec(n, np.array([eye, -eye]), name=f"neg-identity:{n}")


def full_rotation(n: int) -> OrthogonalGroupSpec:
    return OrthogonalGroupSpec(n, np.eye(n)[None], mode="full-rotation", name=f"full-rotation:{n}")


def parse_group(desc) -> OrthogonalGroupSpec:
    """Build a group from a preset string or a ``matrices`` mapping.

    Accepted forms: ``"cyclic:m"``, ``"dihedral:m"``, ``"hyperoctahedral:n"``,
    ``"neg-identity:n"``, ``"full-rotation:n"`` and
    ``{"preset": "matrices", "n": n, "generators": [[row-major entries], ...]}``.
    """
    if isinstance(desc, dict):
        if desc.get("preset") != "matrices":
            raise GroupDescriptorError("group mapping must have preset 'matrices'")
        try:
            n = int(desc["n"])
            gens = [np.asarray(g, dtype=float).reshape(n, n) for g in desc["generators"]]
        except (KeyError, ValueError, TypeError) as exc:
            raise GroupDescriptorError(f"bad matrices descriptor: {exc}") from None
        try:
            return close_group(gens, cap=int(desc.get("cap", 1000)), name="matrices")
        except ValueError as exc:
            raise GroupDescriptorError(str(exc)) from None
    if not isinstance(desc, str) or ":" not in desc:
        raise GroupDescriptorError(f"unrecognised group descriptor {desc!r}")
    kind, _, arg = desc.partition(":")
    try:
        k = int(arg)
    except ValueError:
        raise GroupDescriptorError(f"group parameter must be an integer in {desc!r}") from None
    builders: dict[str, Callable[[int], OrthogonalGroupSpec]] = {
        "cyclic": cyclic,
        "dihedral": dihedral,
        "hyperoctahedral": hyperoctahedral,
        "neg-identity": neg_identity,
        "full-rotation": full_rotation,
    }
    if kind not in builders:
        raise GroupDescriptorError(f"unknown group preset {kind!r}")
    if k < 1:
        raise GroupDescriptorError(f"group parameter must be positive in {desc!r}")
    return builders[kind](k)


@dataclass(frozen=True)
class GroupOrbit:
    base: np.ndarray
    points: np.ndarray


def dedupe_points(points: np.ndarray, tol: float = ORBIT_TOL) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    keep: list[int] = []
    for i, p in enumerate(points):
        if not keep or np.abs(points[keep] - p).max(axis=1).min() > tol:
            keep.append(i)
    return points[keep]


def orbit(x, group: OrthogonalGroupSpec) -> GroupOrbit:
    if not group.is_finite:
        raise ValueError("orbit() needs an explicit finite group")
    x = np.asarray(x, dtype=float).reshape(group.dimension)
    return GroupOrbit(x, dedupe_points(group.apply(x)))


def orbit_hull_inradius(orb: GroupOrbit, strict: bool = False) -> float:
    """Radius of the largest origin-centred ball inside conv(orbit).

    Returns 0 when the origin is not interior.  A hull with empty interior
    returns 0, or raises DegenerateOrbit when ``strict``.
    """
    pts = np.asarray(orb.points, dtype=float)
    n = pts.shape[1]

    def degenerate():
        if strict:
            raise DegenerateOrbit("orbit hull has empty interior")
        return 0.0

    if len(pts) < n + 1 or np.linalg.matrix_rank(pts - pts[0], tol=1e-9 * max(1.0, np.abs(pts).max())) < n:
        return degenerate()
    if n == 1:
        lo, hi = pts.min(), pts.max()
        return float(max(0.0, min(hi, -lo)))
    if n == 2:
        # orbit points share one norm, so angular order traces the hull
        return float(_planar_inradii(pts[None])[0])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return degenerate()
    return float(max(0.0, -hull.equations[:, -1].max()))


def orbit_epsilon(group: OrthogonalGroupSpec, sphere_samples: int = 4096) -> float:
    """Smallest orbit-hull inradius over a nested low-discrepancy unit sample.

    Taking more samples only adds points to the sample, so the estimate is
    nonincreasing in ``sphere_samples``.
    """
    if group.mode == "full-rotation":
        return 1.0 if group.dimension >= 2 else 0.0
    n = group.dimension
    xs = sphere_points(n, sphere_samples)
    if n == 2:
        return _epsilon_planar(group, xs)
    best = np.inf
    for x in xs:
        best = min(best, orbit_hull_inradius(orbit(x, group)))
        if best == 0.0:
            break
    return float(best)


def _planar_inradii(imgs: np.ndarray) -> np.ndarray:
    """Inradius of conv(row) for each row of co-circular planar points."""
    ang = np.arctan2(imgs[..., 1], imgs[..., 0])
    order = np.argsort(ang, axis=1)
    ring = np.take_along_axis(imgs, order[..., None], axis=1)
    edge = np.roll(ring, -1, axis=1) - ring
    length = np.hypot(edge[..., 0], edge[..., 1])
    cross = ring[..., 0] * edge[..., 1] - ring[..., 1] * edge[..., 0]
    # repeated points give zero-length edges, which are skipped
    dist = np.where(length > 1e-12, cross / np.where(length > 1e-12, length, 1.0), np.inf)
    sang = np.sort(ang, axis=1)
    gaps = np.diff(np.concatenate([sang, sang[:, :1] + 2 * np.pi], axis=1), axis=1)
    outside = gaps.max(axis=1) >= np.pi - 1e-12
    r = dist.min(axis=1)
    return np.where(outside | ~np.isfinite(r) | (r <= 0), 0.0, r)


def _epsilon_planar(group: OrthogonalGroupSpec, xs: np.ndarray) -> float:
    imgs = np.einsum("gij,sj->sgi", group.elements, xs)
    return float(_planar_inradii(imgs).min())


@dataclass(frozen=True)
class IrreducibilityCertificate:
    epsilon: float
    span_rank: int
    center_of_mass_norm: float
    verdict: bool
    samples: int = 0


_GENERIC = np.array([1.0, np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0), np.sqrt(7.0), np.sqrt(11.0), np.sqrt(13.0)])


def generic_unit_vector(n: int) -> np.ndarray:
    v = _GENERIC[:n] if n <= len(_GENERIC) else np.sqrt(np.arange(1, n + 1) + 0.5)
    v = v * (1 + 0.1 * np.arange(n))
    return v / np.linalg.norm(v)


def check_irreducible(group: OrthogonalGroupSpec, tol: float = 1e-9, sphere_samples: int = 4096,
                      com_tol: float = 1e-9) -> IrreducibilityCertificate:
    n = group.dimension
    if group.mode == "full-rotation":
        eps = orbit_epsilon(group)
        return IrreducibilityCertificate(eps, n, 0.0, eps > tol, 0)
    x = generic_unit_vector(n)
    pts = group.apply(x)
    rank = int(np.linalg.matrix_rank(pts, tol=1e-9))
    com = float(np.linalg.norm(pts.mean(axis=0)))
    eps = orbit_epsilon(group, sphere_samples)
    verdict = rank == n and eps > tol and com <= com_tol
    return IrreducibilityCertificate(eps, rank, com, verdict, sphere_samples)


def symmetrize_function(h: Callable[[np.ndarray], np.ndarray], group: OrthogonalGroupSpec):
    """Return x -> mean over g of h(g.x); ``h`` must accept arrays (..., n)."""
    if not group.is_finite:
        raise ValueError("symmetrize_function needs an explicit finite group")
    els = group.elements

    def sym(x):
        x = np.asarray(x, dtype=float)
        return sum(h(x @ g.T) for g in els) / len(els)

    return sym
