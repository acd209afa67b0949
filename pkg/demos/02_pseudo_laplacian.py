"""Solving the pseudo 4-Laplacian and checking the solution.

The function |x1|^(4/3) - |x2|^(4/3) solves div(|u_1|^2 u_1, |u_2|^2 u_2) = 0
exactly.  We hand its boundary values to the solver and watch the interior
error shrink under refinement.
"""
import numpy as np

from anisoharnack.norms import NormModel
from anisoharnack.solver import Problem, classify, solve


def exact(x):
    return np.abs(x[..., 0]) ** (4 / 3) - np.abs(x[..., 1]) ** (4 / 3)


rho = NormModel.ell_p(4.0, 2)
for N in (16, 32, 64):
    problem = Problem.on_box([(-1, 1), (-1, 1)], N, 4.0, rho, boundary=exact)
    u, report = solve(problem)
    inner = np.all(np.abs(problem.grid.vertices) <= 0.5, axis=1)
    err = np.max(np.abs(u.values[inner] - exact(problem.grid.vertices[inner])))
    print(f"N = {N:>3}: {report.iterations:>4} iterations, interior error {err:.2e}, "
          f"classified {classify(problem, u, report.target_residual).value}")

# The energy is degenerate along the coordinate axes (its Hessian has a
# zero block there), which is why a plain gradient method stalls and the
# solver uses a lagged-coefficient preconditioner.
