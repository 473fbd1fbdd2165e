# %% [markdown]
# # Identity data under C8
#
# f = g = 1 in the plane with the cyclic group of order 8.  The entire
# solution is |x|^2/2; this walk-through follows the exhaustion iterates
# towards it and runs the diagnostics on the last one.

# %%
import numpy as np

from invariant_ma.densities import ConstantDensity
from invariant_ma.diagnostics import run_diagnostics
from invariant_ma.exhaustion import ExhaustionSchedule, cauchy_extract, run_exhaustion, uniform_bound_monitor
from invariant_ma.groups import check_irreducible, cyclic
from invariant_ma.measure import concentric_balls, weak_residual_report
from invariant_ma.pl import ball_grid

one = ConstantDensity(2, 1.0)
group = cyclic(8)
cert = check_irreducible(group)
print(f"epsilon = {cert.epsilon:.12f}, cos(pi/8) = {np.cos(np.pi / 8):.12f}")

# %% [markdown]
# One transport problem per k; R_k balances the perturbed masses.

# %%
sched = ExhaustionSchedule(k_values=(2, 4, 8, 16))
result = run_exhaustion(one, one, group, sched)
print(result.status, "-", result.message)
for row in result.table():
    print(f"k={row['k']:>3}  R_k={row['R_k']:.4f}  targets={row['targets']:>4}  "
          f"its={row['iterations']:>3}  max slope={row['max_slope']:.4f}  sup diff={row['sup_diff']:.4g}")

# %% [markdown]
# Pairwise sup differences on B_1 and the distance to the exact solution.

# %%
grid = ball_grid(1.0, 81, 2)
idx, table = cauchy_extract(result.phis, grid, 5e-2)
print("Cauchy from index", idx)
print(np.array2string(table, precision=4))
print("sup |phi - |x|^2/2| on B_1:", np.abs(result.phi(grid) - 0.5 * (grid ** 2).sum(1)).max())

# %%
mon = uniform_bound_monitor(result.records, 1.0, cert.epsilon)
print(mon.narrative)

# %% [markdown]
# Weak residual on concentric balls.  The Monge-Ampere measure of a
# piecewise-linear function sits on the vertices of its power diagram, so on
# small balls the residual moves in steps of one vertex mass.

# %%
rep = weak_residual_report(result.phi, one, one, concentric_balls(2, 1.0))
for row in rep.table():
    print(f"{row['set']:<28} lhs={row['lhs']:.5f} omega={row['omega']:.5f} rel={row['relative_residual']:.4f}")

# %%
diag = run_diagnostics(result.phi, one, one, group, flat_tol=5e-2)
print("properness:", diag.properness.verdict, [round(m, 4) for m in diag.properness.minima])
print("eq4 band:", round(diag.eq4.lambda1, 3), round(diag.eq4.lambda2, 3))
print("strict convexity gap:", diag.strict_convexity.min_gap)
print("holder beta:", round(diag.holder.beta, 3))
print("equivariance:", diag.equivariance.value_violation)
