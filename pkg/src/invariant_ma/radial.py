"""Exact reference solutions for rotation-invariant data.

For radial convex phi the gradient image of B_R is B_{phi'(R)}, so the
weak identity on balls reads F(phi'(R)) = G(R) with F, G the ball masses
of f and g.  Inverting F gives phi' on a grid; phi follows by integration.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import interpolate, optimize

from .densities import Density, ball_mass
from .pl import PLConvexFunction, ball_grid


class InversionFailure(ValueError):
    """The f-mass function is not strictly increasing, so phi' is not determined."""


@dataclass(frozen=True, eq=False)
class RadialSolution:
    n: int
    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_dspline", interpolate.CubicSpline(self.r, self.dphi))
        object.__setattr__(self, "_spline", interpolate.CubicSpline(self.r, self.phi))

    @property
    def step(self) -> float:
        return float(self.r[1] - self.r[0])

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def profile(self, r) -> np.ndarray:
        return self._spline(np.asarray(r, dtype=float))

    def derivative(self, r) -> np.ndarray:
        return self._dspline(np.asarray(r, dtype=float))

    def __call__(self, x) -> np.ndarray:
        return self.profile(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)
        return self.derivative(r[..., 0])[..., None] * u

    def conjugate_derivative(self, s) -> np.ndarray:
        """(phi*)'(s) = (phi')^{-1}(s) on the range of phi'."""
        return np.interp(np.asarray(s, dtype=float), self.dphi, self.r)

    def scaled_derivative(self, factor: float) -> "RadialSolution":
        """Same table with phi' (and phi) multiplied by ``factor``; used to inject faults."""
        return RadialSolution(self.n, self.r, self.phi * factor, self.dphi * factor)

    def to_pl(self, radius: float | None = None, resolution: int = 201) -> PLConvexFunction:
        """Max of tangent planes at the points of a tensor lattice in B_radius."""
        radius = self.r_max if radius is None else min(radius, self.r_max)
        pts = ball_grid(radius, resolution, self.n)
        rho = np.linalg.norm(pts, axis=1)
        slopes = self.gradient(pts)
        icpt = rho * self.derivative(rho) - self.profile(rho)
        return PLConvexFunction(slopes, icpt)

    def write_table(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "phi", "dphi"])
            for row in zip(self.r, self.phi, self.dphi):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_table(cls, path, n: int) -> "RadialSolution":
        data = np.genfromtxt(Path(path), delimiter=",", names=True)
        return cls(n, np.asarray(data["r"]), np.asarray(data["phi"]), np.asarray(data["dphi"]))


def _mass_table(d: Density, r: np.ndarray) -> np.ndarray:
    out = np.zeros(len(r))
    for i, R in enumerate(r):
        if R > 0:
            out[i] = ball_mass(d, float(R))
    return out


def solve_radial(f: Density, g: Density, r_max: float, steps: int = 1000, rtol: float = 1e-8) -> RadialSolution:
    """phi'(R) = F^{-1}(G(R)) on a uniform grid; phi integrates the spline of phi'."""
    if not (f.is_radial and g.is_radial):
        raise ValueError("the radial oracle needs radial densities")
    if f.n != g.n:
        raise ValueError("f and g live in different dimensions")
    r = np.linspace(0.0, float(r_max), int(steps) + 1)
    G = _mass_table(g, r)
    if np.any(np.diff(G) < -1e-12 * max(G[-1], 1.0)):
        raise ValueError("g has negative mass somewhere")

    def F(rho):
        return ball_mass(f, rho) if rho > 0 else 0.0

    # F must be strictly increasing on the range we need
    probe_hi = 1.0
    while F(probe_hi) < G[-1]:
        probe_hi *= 2
        if probe_hi > 1e12:
            raise InversionFailure("f-mass never reaches the g-mass of B_r_max")
    probe = np.linspace(0.0, probe_hi, 4097)
    Fp = np.array([F(t) for t in probe])
    if np.any(np.diff(Fp) <= 1e-13 * Fp[1:]):
        raise InversionFailure("ball mass of f is not strictly increasing (f vanishes on a shell)")

    dphi = np.zeros(len(r))
    lo = 0.0
    for i in range(1, len(r)):
        target = G[i]
        if target <= 0:
            continue
        j = int(np.searchsorted(Fp, target))
        a, b = max(lo, probe[max(j - 1, 0)]), probe[min(j, len(probe) - 1)]
        if F(a) > target:
            a = lo
        rho = optimize.brentq(lambda t: F(t) - target, a, b, xtol=1e-14 * max(b, 1.0), rtol=4 * np.finfo(float).eps)
        if abs(F(rho) - target) > rtol * target:
            raise InversionFailure(f"mass inversion residual too large at r={r[i]:g}")
        dphi[i] = rho
        lo = rho
    phi = interpolate.CubicSpline(r, dphi).antiderivative()(r)
    return RadialSolution(f.n, r, phi, dphi)


def residual_check(sol: RadialSolution, f: Density, g: Density, radii) -> float:
    """max |f(phi') phi'' (phi'/r)^(n-1) - g| / max(g, 1e-12) at the given radii.

    phi'' is a central difference of the interpolated phi' with the grid step.
    """
    radii = np.asarray(radii, dtype=float)
    h = sol.step
    if np.any(radii - h < 0) or np.any(radii + h > sol.r_max):
        raise ValueError("sample radii need one grid step of room on both sides")
    d1 = sol.derivative(radii)
    d2 = (sol.derivative(radii + h) - sol.derivative(radii - h)) / (2 * h)
    lhs = f.profile(d1) * d2 * (d1 / radii) ** (sol.n - 1)
    rhs = g.profile(radii)
    return float((np.abs(lhs - rhs) / np.maximum(rhs, 1e-12)).max())
