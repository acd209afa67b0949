"""Anisotropic gamma-homogeneous elliptic operators.

Norm calculus with convex duality (:mod:`.norms`), simplicial P1 grids
(:mod:`.grid`), a convex-energy Dirichlet solver (:mod:`.solver`) and
constant-free numerical checks of interior regularity estimates
(:mod:`.verify`).
"""
from .errors import (ComputationError, ConfigurationError, ConvergenceError, DomainError,
                     InsufficientDataError)
from .grid import (DiscreteField, Grid, ball_stats, build_grid, cell_gradient, oscillation,
                   read_field_csv, write_field_csv)
from .norms import (DualMode, DualNorm, Family, NormModel, dual_eval, ellipticity_bounds,
                    eval_norm, flux, grad, hessian_ellp, parse_norm)
from .solver import (Classification, Problem, SolveOptions, SolveReport, classify, energy,
                     energy_gradient, residual_pairing, solve)
from .verify import (CheckRecord, SweepSpec, VerificationConfig, VerificationReport,
                     caccioppoli_ratio, fit_decay, harnack_ratio, liouville_experiment,
                     moser_schedule, oscillation_profile, sup_bound_ratio, sweep,
                     weak_harnack_ratio)

__version__ = "0.1.0"
