"""Densities f, g, their 1/k perturbations, ball masses and the R_k balance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special


class QuadratureFailure(RuntimeError):
    pass


class DensityError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return float(np.pi ** (n / 2) / special.gamma(n / 2 + 1))


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


class Density:
    """A nonnegative, locally bounded, K-invariant density on R^n.

    Subclasses evaluate on arrays of points with shape ``(..., n)``.  Radial
    ones also expose ``profile(r)`` so ball masses reduce to a 1-D integral.
    """

    n: int
    is_radial = True

    def __call__(self, x):
        return self.profile(_norm(x))

    def profile(self, r):
        raise NotImplementedError

    def radial_mass(self, R: float) -> float | None:
        """Closed-form ball mass, or None when quadrature is needed."""
        return None

    def to_config(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "Density") -> "Density":
        return SumDensity(self, other)


@dataclass(frozen=True, eq=False)
class ConstantDensity(Density):
    n: int
    value: float

    def profile(self, r):
        return np.full(np.shape(r), float(self.value))

    def radial_mass(self, R):
        return self.value * unit_ball_volume(self.n) * R ** self.n

    def to_config(self):
        return {"form": "constant", "value": self.value}


@dataclass(frozen=True, eq=False)
class RadialPolynomial(Density):
    """Sum of ``coeff * r**power`` terms with nonnegative powers."""

    n: int
    terms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        terms = tuple((float(a), float(p)) for a, p in self.terms)
        if any(p < 0 for _, p in terms):
            raise DensityError("radial-poly powers must be >= 0")
        object.__setattr__(self, "terms", terms)

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        for a, p in self.terms:
            out = out + a * r ** p
        return out

    def radial_mass(self, R):
        s = sum(a * R ** (p + self.n) / (p + self.n) for a, p in self.terms)
        return self.n * unit_ball_volume(self.n) * s

    def to_config(self):
        return {"form": "radial-poly", "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True, eq=False)
class RadialExponential(Density):
    """``a * exp(b * r)``; b <= 0 gives finite total mass."""

    n: int
    a: float
    b: float

    def profile(self, r):
        return self.a * np.exp(self.b * np.asarray(r, dtype=float))

    def radial_mass(self, R):
        n, a, b = self.n, self.a, self.b
        shell = n * unit_ball_volume(n)
        if b == 0:
            return a * unit_ball_volume(n) * R ** n
        if b < 0:
            c = -b
            return shell * a * special.gamma(n) / c ** n * special.gammainc(n, c * R)
        return None

    def to_config(self):
        return {"form": "radial-exp", "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class TabulatedRadial(Density):
    """Piecewise-linear radial profile; held constant past the last node."""

    n: int
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise DensityError("table needs matching r and v arrays of length >= 2")
        if r[0] != 0 or np.any(np.diff(r) <= 0):
            raise DensityError("table radii must start at 0 and increase strictly")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)

    def profile(self, r):
        return np.interp(np.asarray(r, dtype=float), self.r, self.v)

    def radial_mass(self, R):
        n = self.n
        knots = np.concatenate([self.r[self.r < R], [R]])
        vals = self.profile(knots)
        r0, r1 = knots[:-1], knots[1:]
        v0, v1 = vals[:-1], vals[1:]
        slope = (v1 - v0) / (r1 - r0)
        icpt = v0 - slope * r0
        s = icpt * (r1 ** n - r0 ** n) / n + slope * (r1 ** (n + 1) - r0 ** (n + 1)) / (n + 1)
        return n * unit_ball_volume(n) * float(s.sum())

    def to_config(self):
        return {"form": "table", "r": self.r.tolist(), "v": self.v.tolist()}


@dataclass(frozen=True, eq=False)
class SumDensity(Density):
    first: Density
    second: Density

    def __post_init__(self):
        if self.first.n != self.second.n:
            raise DensityError("cannot add densities of different dimension")

    @property
    def n(self):
        return self.first.n

    @property
    def is_radial(self):
        return self.first.is_radial and self.second.is_radial

    def __call__(self, x):
        return self.first(x) + self.second(x)

    def profile(self, r):
        return self.first.profile(r) + self.second.profile(r)

    def radial_mass(self, R):
        a, b = self.first.radial_mass(R), self.second.radial_mass(R)
        return None if a is None or b is None else a + b


@dataclass(frozen=True, eq=False)
class SymmetrizedDensity(Density):
    """Group average of an analytic seed; invariant but not radial."""

    n: int
    seed: Callable[[np.ndarray], np.ndarray]
    group: object
    is_radial = False

    def __post_init__(self):
        from .groups import symmetrize_function

        object.__setattr__(self, "_sym", symmetrize_function(self.seed, self.group))

    def __call__(self, x):
        return self._sym(x)


@dataclass(frozen=True, eq=False)
class PerturbedDensity(Density):
    """``base + 1/k``, strictly positive."""

    base: Density
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise DensityError("perturbation index k must be positive")

    @property
    def n(self):
        return self.base.n

    @property
    def is_radial(self):
        return self.base.is_radial

    def __call__(self, x):
        return self.base(x) + 1.0 / self.k

    def profile(self, r):
        return self.base.profile(r) + 1.0 / self.k

    def radial_mass(self, R):
        m = self.base.radial_mass(R)
        return None if m is None else m + unit_ball_volume(self.n) * R ** self.n / self.k


def perturb(d: Density, k: float) -> PerturbedDensity:
    return PerturbedDensity(d, k)


def eval_density(d: Density, x) -> np.ndarray:
    return d(np.asarray(x, dtype=float))


def _nonradial_mass(d: Density, R: float, rtol: float) -> float:
    if d.n == 2:
        val, err = integrate.dblquad(
            lambda t, r: float(d(np.array([r * np.cos(t), r * np.sin(t)]))) * r,
            0, R, 0, 2 * np.pi, epsabs=0, epsrel=rtol,
        )
    elif d.n == 3:
        val, err = integrate.tplquad(
            lambda p, t, r: float(d(np.array([r * np.sin(t) * np.cos(p), r * np.sin(t) * np.sin(p), r * np.cos(t)])))
            * r * r * np.sin(t),
            0, R, 0, np.pi, 0, 2 * np.pi, epsabs=0, epsrel=max(rtol, 1e-8),
        )
    else:
        raise NotImplementedError("non-radial ball masses are supported for n = 2, 3")
    return val


def ball_mass(d: Density, R: float, rtol: float = 1e-10, limit: int = 200) -> float:
    """Integral of ``d`` over the ball of radius R about the origin."""
    if not R > 0:
        raise ValueError("radius must be positive")
    if not d.is_radial:
        return _nonradial_mass(d, R, rtol)
    closed = d.radial_mass(R)
    if closed is not None:
        return float(closed)
    n = d.n
    val, err = integrate.quad(lambda r: d.profile(r) * r ** (n - 1), 0, R,
                              epsabs=0, epsrel=rtol, limit=limit)
    if err > max(rtol * abs(val), 1e-300) * 10:
        raise QuadratureFailure(f"adaptive quadrature did not reach rtol={rtol} (err={err:g})")
    return float(n * unit_ball_volume(n) * val)


def solve_Rk(f_k: Density, g_k: Density, k: float, rtol: float = 1e-8) -> float:
    """Radius R_k with mass(f_k, B_{R_k}) = mass(g_k, B_k)."""
    target = ball_mass(g_k, k)
    if target <= 0:
        raise ValueError("source mass must be positive")
    F = lambda R: ball_mass(f_k, R) - target
    lo, hi = 0.0, max(float(k), 1.0)
    while F(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise QuadratureFailure("mass balance radius exceeds 1e12")
    R = optimize.brentq(lambda r: F(r) if r > 0 else -target, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps,
                        maxiter=500)
    if abs(F(R)) > rtol * target:
        raise QuadratureFailure(f"R_k balance residual {abs(F(R)) / target:g} above {rtol:g}")
    return float(R)


@dataclass
class MassDiagnosis:
    verdict: str
    radii: list[float]
    masses: list[float]
    extra: dict = field(default_factory=dict)


def check_infinite_mass(f: Density, radii: Sequence[float], ratio_threshold: float = 10.0,
                        plateau_rtol: float = 1e-6) -> MassDiagnosis:
    """Heuristic verdict on whether the total mass of ``f`` is infinite.

    DIVERGES when the mass grows by more than ``ratio_threshold`` across the
    radii and is still increasing; SUSPECT-FINITE when one further doubling of
    the last radius adds less than ``plateau_rtol`` relative mass.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("need at least three increasing radii")
    masses = [ball_mass(f, r) for r in radii]
    doubled = ball_mass(f, 2 * radii[-1])
    extra = {"doubled_radius": 2 * radii[-1], "doubled_mass": doubled}
    if doubled <= 0:
        return MassDiagnosis("SUSPECT-FINITE", radii, masses, extra)
    if (doubled - masses[-1]) / doubled < plateau_rtol:
        verdict = "SUSPECT-FINITE"
    elif masses[0] > 0 and masses[-1] / masses[0] > ratio_threshold and masses[-1] > masses[-2]:
        verdict = "DIVERGES"
    else:
        verdict = "INCONCLUSIVE"
    return MassDiagnosis(verdict, radii, masses, extra)


def validate_density(d: Density, radius: float, samples: int = 2000) -> list[str]:
    """Sample-based checks for nonnegativity and local boundedness.

    Returns a list of problems; empty means the checks passed.
    """
    problems = []
    if isinstance(d, RadialPolynomial) and all(a >= 0 for a, _ in d.terms):
        pass
    elif isinstance(d, RadialExponential) and d.a >= 0:
        pass
    elif isinstance(d, TabulatedRadial) and np.all(d.v >= 0):
        pass
    elif isinstance(d, ConstantDensity) and d.value >= 0:
        pass
    else:
        from .sampling import halton

        pts = (2 * halton(samples, d.n, start=1) - 1) * radius
        vals = d(pts)
        if np.any(vals < 0):
            problems.append("density takes negative values")
        if not np.all(np.isfinite(vals)):
            problems.append("density is not finite on the sampled ball")
        return problems
    r = np.linspace(0, radius, samples)
    vals = d.profile(r)
    if not np.all(np.isfinite(vals)):
        problems.append("density is not finite on the sampled ball")
    if np.any(vals < 0):
        problems.append("density takes negative values")
    return problems


def parse_density(desc: dict, n: int) -> Density:
    if not isinstance(desc, dict) or "form" not in desc:
        raise DensityError("density must be a mapping with a 'form' key")
    form = desc["form"]
    try:
        if form == "constant":
            return ConstantDensity(n, float(desc["value"]))
        if form == "radial-poly":
            return RadialPolynomial(n, tuple((float(a), float(p)) for a, p in desc["terms"]))
        if form == "radial-exp":
            return RadialExponential(n, float(desc["a"]), float(desc["b"]))
        if form == "table":
            return TabulatedRadial(n, np.asarray(desc["r"], float), np.asarray(desc["v"], float))
    except KeyError as exc:
        raise DensityError(f"density form {form!r} is missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise DensityError(f"bad density parameters: {exc}") from None
    raise DensityError(f"unknown density form {form!r}")
