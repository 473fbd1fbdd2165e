"""Entire convex solutions of f(grad phi) det D^2 phi = g for data invariant
under a finite irreducible orthogonal group, built by exhausting R^n with
balls and solving a semi-discrete transport problem on each."""
from .densities import (ConstantDensity, Density, RadialExponential, RadialPolynomial, TabulatedRadial, ball_mass,
                        check_infinite_mass, parse_density, perturb, solve_Rk)
from .diagnostics import (eq4_bounds, equivariance_check, holder_gradient_fit, properness_check, run_diagnostics,
                          strict_convexity_probe)
from .exhaustion import (ExhaustionResult, ExhaustionSchedule, HypothesisViolation, BudgetExhausted, cauchy_extract,
                         run_exhaustion, uniform_bound_monitor)
from .groups import (OrthogonalGroupSpec, check_irreducible, cyclic, dihedral, hyperoctahedral, orbit_epsilon,
                     neg_identity, orbit, orbit_hull_inradius, parse_group)
from .measure import TestSet, concentric_balls, ma_measure, weak_residual, weak_residual_report
from .pl import MalformedSolution, PLConvexFunction, legendre_transform, normalize_at_origin
from .radial import InversionFailure, RadialSolution, residual_check, solve_radial
from .sd_ot import OTProblemInstance, solve_weights

__version__ = "0.1.0"
