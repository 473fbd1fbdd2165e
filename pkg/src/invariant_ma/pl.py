"""Max-of-affine convex functions and their discrete Legendre transforms."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

FORMAT_TAG = "invariant-ma/pl-1"


class MalformedSolution(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PLConvexFunction:
    """phi(x) = max_i <slopes[i], x> - intercepts[i].

    ``orbit`` optionally labels each piece with the group orbit of its
    slope; it is used for deterministic file ordering only.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    orbit: np.ndarray | None = None

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        c = np.asarray(self.intercepts, dtype=float).reshape(-1)
        if len(s) == 0 or len(s) != len(c):
            raise ValueError("need at least one piece and matching slopes/intercepts")
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", c)
        if self.orbit is not None:
            object.__setattr__(self, "orbit", np.asarray(self.orbit, dtype=int).reshape(-1))

    @property
    def n(self) -> int:
        return self.slopes.shape[1]

    def __len__(self) -> int:
        return len(self.intercepts)

    def affine_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.slopes.T - self.intercepts

    def __call__(self, x, chunk: int = 1 << 22) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n)
        step = max(1, chunk // len(self))
        out = np.empty(len(flat))
        for i in range(0, len(flat), step):
            out[i:i + step] = self.affine_values(flat[i:i + step]).max(axis=1)
        return out.reshape(x.shape[:-1])

    def argmax(self, x, chunk: int = 1 << 22) -> np.ndarray:
        """Index of the lowest-numbered active piece at each point."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n)
        step = max(1, chunk // len(self))
        out = np.empty(len(flat), dtype=int)
        for i in range(0, len(flat), step):
            out[i:i + step] = self.affine_values(flat[i:i + step]).argmax(axis=1)
        return out.reshape(x.shape[:-1])

    def gradient_select(self, x) -> np.ndarray:
        """Slope of the lowest-index active piece (one element of the subdifferential)."""
        return self.slopes[self.argmax(x)]

    def active_slopes(self, x, tol: float = 1e-12) -> np.ndarray:
        """All active slopes at a single point; their hull is the subdifferential."""
        v = self.affine_values(np.asarray(x, dtype=float).reshape(self.n))
        scale = max(1.0, float(np.abs(v).max()))
        return self.slopes[v >= v.max() - tol * scale]

    def shifted(self, delta: float) -> "PLConvexFunction":
        return PLConvexFunction(self.slopes, self.intercepts - delta, self.orbit)

    def normalize_at_origin(self) -> "PLConvexFunction":
        return normalize_at_origin(self)

    def prune(self, points, tol: float = 0.0) -> "PLConvexFunction":
        """Drop pieces that are never active at any of ``points``."""
        v = self.affine_values(np.asarray(points, dtype=float).reshape(-1, self.n))
        keep = np.any(v >= v.max(axis=1, keepdims=True) - tol, axis=0)
        orb = None if self.orbit is None else self.orbit[keep]
        return PLConvexFunction(self.slopes[keep], self.intercepts[keep], orb)

    def max_slope_norm(self) -> float:
        return float(np.linalg.norm(self.slopes, axis=1).max())

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        orbit = self.orbit if self.orbit is not None else np.zeros(len(self), dtype=int)
        keys = [tuple(self.slopes[:, j]) for j in range(self.n - 1, -1, -1)]
        order = np.lexsort(keys + [orbit])
        pieces = []
        for i in order:
            p = {"slope": [float(v) for v in self.slopes[i]], "intercept": float(self.intercepts[i])}
            if self.orbit is not None:
                p["orbit"] = int(self.orbit[i])
            pieces.append(p)
        return {"format": FORMAT_TAG, "n": self.n, "pieces": pieces}

    @classmethod
    def from_dict(cls, data) -> "PLConvexFunction":
        try:
            n = int(data["n"])
            pieces = data["pieces"]
            if not pieces:
                raise MalformedSolution("solution has no pieces")
            slopes = np.array([p["slope"] for p in pieces], dtype=float)
            icpt = np.array([p["intercept"] for p in pieces], dtype=float)
        except MalformedSolution:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedSolution(f"malformed solution: {exc}") from None
        if slopes.shape != (len(pieces), n) or not np.all(np.isfinite(slopes)) or not np.all(np.isfinite(icpt)):
            raise MalformedSolution("slope entries do not match the declared dimension")
        orbit = None
        if all("orbit" in p for p in pieces):
            orbit = np.array([p["orbit"] for p in pieces], dtype=int)
        return cls(slopes, icpt, orbit)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "PLConvexFunction":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise MalformedSolution(f"{path}:{exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data)


def normalize_at_origin(phi: PLConvexFunction) -> PLConvexFunction:
    """Shift intercepts so that phi(0) = 0; gradients are unchanged."""
    return PLConvexFunction(phi.slopes, phi.intercepts + float((-phi.intercepts).max()), phi.orbit)


def gradient_select(phi: PLConvexFunction, x) -> np.ndarray:
    return phi.gradient_select(x)


def ball_grid(radius: float, resolution: int, n: int) -> np.ndarray:
    """Tensor grid with ``resolution`` nodes per axis, clipped to the closed ball.

    Odd resolutions include the origin.
    """
    t = np.linspace(-radius, radius, resolution)
    mesh = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return mesh[np.linalg.norm(mesh, axis=1) <= radius * (1 + 1e-12)]


def lower_hull_vertices(points: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Indices of the vertices of the lower convex hull of ``(points, heights)``.

    Only these points can maximise <x, y> - h(x) for some y.
    """
    n = points.shape[1]
    if len(points) <= n + 1:
        return np.arange(len(points))
    if n == 1:
        order = np.argsort(points[:, 0], kind="stable")
        hull: list[int] = []
        for i in order:
            while len(hull) >= 2:
                a, b = hull[-2], hull[-1]
                cross = (points[b, 0] - points[a, 0]) * (heights[i] - heights[a]) - \
                        (heights[b] - heights[a]) * (points[i, 0] - points[a, 0])
                if cross <= 0:
                    hull.pop()
                else:
                    break
            hull.append(int(i))
        return np.array(sorted(hull))
    lifted = np.column_stack([points, heights])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        try:
            hull = ConvexHull(lifted, qhull_options="QJ")
        except QhullError:
            return np.arange(len(points))
    lower = hull.equations[:, n] < 0
    return np.unique(hull.simplices[lower].ravel())


def legendre_transform(phi: PLConvexFunction, radius: float, resolution: int = 101,
                       points: np.ndarray | None = None) -> PLConvexFunction:
    """psi(y) = max over x in a point set of <x, y> - phi(x).

    The point set is a tensor grid on the ball of ``radius`` (or ``points``
    when given).  Pieces of psi are the sampled points x with intercept
    phi(x), pruned to the lower hull vertices of the lifted graph.
    """
    xs = ball_grid(radius, resolution, phi.n) if points is None else np.asarray(points, dtype=float).reshape(-1, phi.n)
    vals = phi(xs)
    keep = lower_hull_vertices(xs, vals)
    return PLConvexFunction(xs[keep], vals[keep])


def power_vertices(phi: PLConvexFunction, radius: float | None = None, with_data: bool = False):
    """Points where n+1 pieces of phi meet (vertices of its cell complex).

    They are read off the lower facets of the hull of the lifted slopes
    (y_i, c_i): a lower facet z = <x_v, y> - h is a vertex x_v of phi with
    phi(x_v) = h, and the facet's points are the pieces active there.  The
    result may contain spurious points when the lifted set is degenerate;
    callers only use them as extra candidates, so that is harmless.
    With ``with_data`` the values and incident piece indices are returned too.
    """
    n = phi.n
    empty = (np.empty((0, n)), np.empty(0), np.empty((0, n + 1), dtype=int))
    lifted = np.column_stack([phi.slopes, phi.intercepts])
    hull = None
    if len(lifted) >= n + 2:
        for opts in (None, "QJ"):
            try:
                hull = ConvexHull(lifted, qhull_options=opts)
                break
            except QhullError:
                continue
    if hull is None:
        return empty if with_data else empty[0]
    eq = hull.equations
    lower = eq[:, n] < -1e-9
    x = -eq[lower, :n] / eq[lower, n:n + 1]
    h = eq[lower, n + 1] / eq[lower, n]
    simp = hull.simplices[lower]
    keep = np.all(np.isfinite(x), axis=1)
    if radius is not None:
        keep &= np.linalg.norm(x, axis=1) <= radius
    x, h, simp = x[keep], h[keep], simp[keep]
    if opts == "QJ":
        h = phi(x)  # joggled facets are only approximately exact
    _, first = np.unique(np.round(x, 12), axis=0, return_index=True)
    first = np.sort(first)
    if with_data:
        return x[first], h[first], simp[first]
    return x[first]


def random_pl(rng: np.random.Generator, n: int, pieces: int, slope_scale: float = 1.0,
              intercept_scale: float = 0.3) -> PLConvexFunction:
    """Random max-of-affine function for property tests and demos."""
    s = rng.normal(size=(pieces, n)) * slope_scale
    c = rng.uniform(0, intercept_scale, size=pieces)
    return PLConvexFunction(s, c)
