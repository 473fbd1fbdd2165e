"""The exhaustion construction of an entire K-invariant solution.

For each k the data are perturbed to f + 1/k, g + 1/k, the target radius
R_k balances the masses, the transport problem from B_k to B_{R_k} is
solved, and the potential is normalised by phi_k(0) = 0.  The iterates are
compared on a fixed grid over B_R; their sup-norms and slopes on B_R are
monitored because the hypothesis int f = +inf is what keeps them bounded.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .densities import Density, ball_mass, perturb, solve_Rk
from .groups import OrthogonalGroupSpec, check_irreducible
from .pl import PLConvexFunction, ball_grid, normalize_at_origin, power_vertices
from .sd_ot import OTProblemInstance, SolverTrace, make_quadrature, sample_targets, solve_weights

log = logging.getLogger(__name__)


class HypothesisViolation(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BudgetExhausted(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class ExhaustionSchedule:
    k_values: tuple = (2, 4, 8, 16, 32)
    targets_per_k: int = 32
    lines_per_k: int = 16
    eval_radius: float = 1.0
    eval_resolution: int = 41
    focus: float | None = None
    solver_tol: float = 1e-4
    max_iter: int = 200
    # hypothesis-violation heuristic on the max slope over B_R
    growth_window: int = 3
    growth_factor: float = 1.5

    def __post_init__(self):
        ks = tuple(float(k) if not float(k).is_integer() else int(k) for k in self.k_values)
        if len(ks) < 1 or any(k <= 0 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k_values must be positive and strictly increasing")
        if not 0 < self.eval_radius <= min(ks):
            raise ValueError("eval_radius must lie in (0, min k]")
        if self.growth_window < 2:
            raise ValueError("growth_window must be at least 2")
        self.k_values = ks

    def targets(self, k) -> int:
        return int(round(self.targets_per_k * k))

    def lines(self, k) -> int:
        return max(16, int(round(self.lines_per_k * k)))

    def eval_grid(self, n: int) -> np.ndarray:
        return ball_grid(self.eval_radius, self.eval_resolution, n)

    def to_config(self) -> dict:
        return {"k_values": list(self.k_values), "targets_per_k": self.targets_per_k, "lines_per_k": self.lines_per_k,
                "eval_radius": self.eval_radius, "eval_resolution": self.eval_resolution, "focus": self.focus,
                "solver_tol": self.solver_tol, "max_iter": self.max_iter, "growth_window": self.growth_window,
                "growth_factor": self.growth_factor}


@dataclass
class KRecord:
    k: float
    R_k: float
    targets: int
    phi: PLConvexFunction
    trace: SolverTrace
    sup_norm: float
    max_slope: float
    sup_diff: float | None
    seconds: float

    def row(self) -> dict:
        return {"k": self.k, "R_k": self.R_k, "targets": self.targets, "iterations": self.trace.iterations,
                "mass_residual": self.trace.residual, "monotone": self.trace.is_monotone(),
                "sup_norm": self.sup_norm, "max_slope": self.max_slope,
                "sup_diff": self.sup_diff if self.sup_diff is not None else float("nan"), "seconds": self.seconds}


@dataclass
class ExhaustionResult:
    phi: PLConvexFunction | None
    records: list[KRecord] = field(default_factory=list)
    status: str = "budget-exhausted"
    message: str = ""
    schedule: ExhaustionSchedule | None = None

    @property
    def sup_diffs(self) -> list[float]:
        return [r.sup_diff for r in self.records if r.sup_diff is not None]

    @property
    def sup_norms(self) -> list[float]:
        return [r.sup_norm for r in self.records]

    @property
    def max_slopes(self) -> list[float]:
        return [r.max_slope for r in self.records]

    @property
    def phis(self) -> list[PLConvexFunction]:
        return [r.phi for r in self.records]

    def table(self) -> list[dict]:
        return [r.row() for r in self.records]


def slope_on_ball(phi: PLConvexFunction, radius: float, grid: np.ndarray | None = None) -> float:
    """Largest active slope norm over B_radius (grid points plus vertices)."""
    if grid is None:
        grid = ball_grid(radius, 41, phi.n)
    idx = phi.argmax(grid)
    _, _, simp = power_vertices(phi, radius, with_data=True)
    idx = np.union1d(idx, simp.ravel())
    return float(np.linalg.norm(phi.slopes[idx], axis=1).max())


@dataclass
class BoundReport:
    k_values: list
    sup_norms: list
    max_slopes: list
    epsilon: float
    radius: float
    doubling: bool
    stabilizing: bool
    narrative: str


def growth_flag(values: Sequence[float], window: int = 3, factor: float = 1.5) -> bool:
    """True when the last ``window`` values rise strictly, with non-shrinking
    increments and an overall growth of at least ``factor``.

    A bounded sequence that converges like 1/k has shrinking increments,
    so it does not trip this, whatever its early transient.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < window:
        return False
    w = v[-window:]
    inc = np.diff(w)
    if np.any(inc <= 0):
        return False
    if np.any(inc[1:] < inc[:-1] * (1 - 1e-9)):
        return False
    return bool(w[-1] >= factor * w[0])


def uniform_bound_monitor(records: Sequence[KRecord], radius: float, epsilon: float, window: int = 3,
                          factor: float = 1.5) -> BoundReport:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ks = [r.k for r in records]
    sups = [r.sup_norm for r in records]
    slopes = [r.max_slope for r in records]
    doubling = growth_flag(slopes, window, factor)
    stabilizing = False
    if len(slopes) >= 3:
        d = np.abs(np.diff(slopes))
        stabilizing = bool(d[-1] <= d[-2] + 1e-12 or d[-1] <= 1e-3 * max(abs(slopes[-1]), 1.0))
    lines = [f"sup|phi_k| and max slope on B_{radius:g} across k = {ks}"]
    if slopes:
        lines.append(f"last max slope {slopes[-1]:.6g}; sup norm {sups[-1]:.6g}")
    lines.append(f"orbit-hull epsilon = {epsilon:.6g}: under int f = inf the slopes stay trapped in a fixed ball "
                 f"(contradiction limit bounded by 4R/eps = {4 * radius / epsilon:.6g} on B_(R/2)); only "
                 f"stabilisation is asserted here")
    if doubling:
        lines.append("slopes grow without saturating over the last k values: the bound is failing")
    elif stabilizing:
        lines.append("slopes are stabilising")
    return BoundReport(ks, sups, slopes, float(epsilon), float(radius), doubling, stabilizing, "\n".join(lines))


def _values(phi, grid):
    if isinstance(phi, PLConvexFunction) or callable(phi):
        return np.asarray(phi(grid), dtype=float)
    return np.asarray(phi, dtype=float)


def cauchy_extract(phis: Sequence, grid: np.ndarray, tol: float):
    """First index from which all later pairwise sup differences are <= tol.

    ``phis`` holds callables (or precomputed value arrays on ``grid``).
    Returns (index or None, matrix of pairwise sup differences).
    """
    if len(phis) < 2:
        raise ValueError("need at least two iterates")
    vals = np.stack([_values(p, grid) for p in phis])
    m = len(vals)
    table = np.zeros((m, m))
    for i in range(m):
        table[i] = np.abs(vals - vals[i]).max(axis=1)
    for i in range(m):
        if np.all(table[i:, i:] <= tol):
            return i, table
    return None, table


def run_exhaustion(f: Density, g: Density, group: OrthogonalGroupSpec, sched: ExhaustionSchedule | None = None,
                   tol: float = 5e-2, out_dir=None, raise_on_failure: bool = False, check_group: bool = True,
                   ) -> ExhaustionResult:
    """Solve the perturbed ball problems for every k of the schedule.

    Status is 'converged' when the last sup difference on the eval grid is
    at most ``tol``, 'hypothesis-violation' when the max slope on B_R keeps
    growing (see ``growth_flag``), and 'budget-exhausted' otherwise.
    """
    sched = sched or ExhaustionSchedule()
    n = group.dimension
    if f.n != n or g.n != n:
        raise ValueError("densities and group live in different dimensions")
    if not group.is_finite:
        raise ValueError("the exhaustion solver needs a finite group; use the radial oracle for full rotations")
    if check_group:
        cert = check_irreducible(group)
        if not cert.verdict:
            raise ValueError(f"irreducibility check failed, eps={cert.epsilon:g}")
    grid = sched.eval_grid(n)
    focus = sched.focus or sched.eval_radius
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = ExhaustionResult(None, schedule=sched)
    prev_vals = None
    for k in sched.k_values:
        t0 = time.perf_counter()
        f_k, g_k = perturb(f, k), perturb(g, k)
        R_k = solve_Rk(f_k, g_k, k)
        lines = sched.lines(k)
        ts = sample_targets(f_k, R_k, sched.targets(k), group, g_mass=ball_mass(g_k, k), focus=focus, lines=lines)
        inst = OTProblemInstance.from_targets(k, g_k, ts, group)
        phi, trace = solve_weights(inst, tol=sched.solver_tol, max_iter=sched.max_iter,
                                   quad=make_quadrature(inst, lines=lines, focus=focus))
        phi = normalize_at_origin(phi)
        vals = phi(grid)
        rec = KRecord(k, R_k, len(ts.points), phi, trace, float(np.abs(vals).max()),
                      slope_on_ball(phi, sched.eval_radius, grid),
                      None if prev_vals is None else float(np.abs(vals - prev_vals).max()),
                      time.perf_counter() - t0)
        result.records.append(rec)
        log.info("k=%s R_k=%.6g targets=%d its=%d residual=%.3g max slope=%.6g sup diff=%s", k, R_k, rec.targets,
                 trace.iterations, trace.residual, rec.max_slope, rec.sup_diff)
        if out is not None:
            phi.save(out / f"phi_k{k}.json")
        prev_vals = vals
    result.phi = result.records[-1].phi
    last = result.records[-1].sup_diff
    if growth_flag(result.max_slopes, sched.growth_window, sched.growth_factor):
        result.status = "hypothesis-violation"
        result.message = ("max slope on B_R grows without saturating: " +
                          ", ".join(f"k={r.k}: {r.max_slope:.4g}" for r in result.records))
    elif last is not None and last <= tol:
        result.status = "converged"
        result.message = f"last sup difference {last:.3g} <= {tol:g}"
    else:
        result.status = "budget-exhausted"
        result.message = f"last sup difference {last if last is not None else float('nan'):.3g} > {tol:g}"
    if raise_on_failure and result.status == "hypothesis-violation":
        raise HypothesisViolation(result.message, result)
    if raise_on_failure and result.status == "budget-exhausted":
        raise BudgetExhausted(result.message, result)
    return result
