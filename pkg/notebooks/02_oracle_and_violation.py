# %% [markdown]
# # Radial reference and a failing hypothesis
#
# The radial solver gives an independent reference for rotation-invariant
# data.  With g = 4|x|^2 and f = 1 mass balance gives phi' = sqrt(2) r^2.

# %%
import numpy as np

from invariant_ma.densities import ConstantDensity, RadialExponential, RadialPolynomial, check_infinite_mass
from invariant_ma.exhaustion import ExhaustionSchedule, run_exhaustion
from invariant_ma.groups import cyclic
from invariant_ma.radial import residual_check, solve_radial

one = ConstantDensity(2, 1.0)
g = RadialPolynomial(2, ((4.0, 2.0),))
sol = solve_radial(one, g, 2.0)
r = np.linspace(0, 1, 6)
print(np.column_stack([r, sol.profile(r), np.sqrt(2) / 3 * r ** 3]))
print("equation residual:", residual_check(sol, one, g, np.linspace(0.1, 1.9, 19)))

# %% [markdown]
# The exhaustion solver with C8 symmetry on the same data.

# %%
res = run_exhaustion(one, g, cyclic(8), ExhaustionSchedule(k_values=(2, 4, 8, 16)))
x = np.random.default_rng(0).uniform(-0.7, 0.7, size=(2000, 2))
x = x[np.linalg.norm(x, axis=1) <= 1]
print(res.status, "max |phi - oracle|:", np.abs(res.phi(x) - sol(x)).max())

# %% [markdown]
# With f = exp(-r) the total mass of f is finite.  The target radii R_k
# blow up and the slopes on B_2 keep growing; the run reports a hypothesis
# violation instead of a solution.

# %%
f = RadialExponential(2, 1.0, -1.0)
print(check_infinite_mass(f, [1, 2, 4, 8, 16]).verdict)  # the tail beyond 16 is still visible
print(check_infinite_mass(f, [2, 4, 8, 16, 32]).verdict)
bad = run_exhaustion(f, one, cyclic(8), ExhaustionSchedule(k_values=(2, 4, 8, 16, 32), eval_radius=2.0))
print(bad.status)
for rec in bad.records:
    print(f"k={rec.k:>3}  R_k={rec.R_k:9.4g}  max slope={rec.max_slope:.4g}  sup={rec.sup_norm:.4g}")
