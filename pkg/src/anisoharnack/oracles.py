"""Known-solution regressions for the solver.

Each oracle solves a problem whose exact solution is known in closed form
and returns an :class:`OracleResult` with the measured errors and a
pass/fail verdict.
"""
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .norms import NormModel, conjugate_exponent
from .solver import Problem, SolveOptions, normalized_residuals, solve

__all__ = ["OracleResult", "linear_oracle", "harmonic_oracle", "pseudo_p_oracle",
           "radial_oracle", "run_oracles", "ORACLES", "sup_error", "observed_orders"]


@dataclass
class OracleResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "metrics": self.metrics}


def sup_error(u, exact, region=None):
    """Max of ``|u - exact|`` over sub-cell sample points (and vertices).

    ``region`` optionally restricts the comparison to points where it
    returns true.
    """
    g = u.grid
    pts, cid, bary = g.samples()
    pts = np.vstack([pts, g.vertices])
    vals = np.concatenate([u.at_cells(cid, bary), u.values])
    keep = np.ones(len(pts), bool) if region is None else region(pts)
    return float(np.max(np.abs(vals[keep] - exact(pts[keep]))))


def observed_orders(resolutions, errors):
    """``log2``-type rates between consecutive resolutions."""
    return [math.log(errors[i] / errors[i + 1]) / math.log(resolutions[i + 1] / resolutions[i])
            for i in range(len(errors) - 1)]


def _linear_norms(n):
    A = np.linalg.qr(np.arange(1.0, n * n + 1).reshape(n, n) + np.eye(n))[0]
    S = np.eye(n) + 0.3 * (np.ones((n, n)) - np.eye(n)) / n
    return {
        "euclidean": NormModel.euclidean(n),
        "weighted": NormModel.weighted_euclidean(S, n),
        "ellp4": NormModel.ell_p(4.0, n),
        "rotated_ellp3": NormModel.rotated_ell_p(A, 3.0),
    }


def linear_oracle(resolution=16, dim=2, gammas=(1.5, 2.0, 3.0), tolerance=1e-10):
    """Affine boundary data are reproduced exactly for x-independent norms.

    The solve starts from zero interior values, so the solver has to find
    the affine field itself.
    """
    b = np.array([0.7, -0.4, 0.25][:dim] + [0.1] * max(0, dim - 3))

    def exact(x):
        return 0.3 + np.asarray(x) @ b

    box = [(-1.0, 1.0)] * dim
    worst_res = worst_err = 0.0
    cases = {}
    for name, norm in _linear_norms(dim).items():
        for gam in gammas:
            P = Problem.on_box(box, resolution, gam, norm, boundary=exact)
            u, _ = solve(P, SolveOptions(tolerance=1e-14, initial="zero"))
            res = float(np.max(np.abs(normalized_residuals(P, u)), initial=0.0))
            err = float(np.max(np.abs(u.values - exact(P.grid.vertices))))
            cases[f"{name}/gamma={gam}"] = {"residual": res, "nodal_error": err}
            worst_res, worst_err = max(worst_res, res), max(worst_err, err)
    return OracleResult("linear", worst_res <= tolerance,
                        {"max_residual": worst_res, "max_nodal_error": worst_err,
                         "tolerance": tolerance, "cases": cases})


def harmonic_oracle(resolutions=(16, 32, 64), min_order=1.5):
    """``x1^2 - x2^2`` with ``gamma = 2`` and the Euclidean norm.

    The error of the piecewise-linear solution is measured over sub-cell
    sample points, so it includes the interpolation error and should decay
    like ``h^2``.
    """
    def exact(x):
        return x[..., 0] ** 2 - x[..., 1] ** 2

    errs = []
    for N in resolutions:
        P = Problem.on_box([(-1.0, 1.0)] * 2, N, 2.0, NormModel.euclidean(2), boundary=exact)
        u, _ = solve(P)
        errs.append(sup_error(u, exact))
    orders = observed_orders(resolutions, errs)
    return OracleResult("harmonic", min(orders) >= min_order,
                        {"resolutions": list(resolutions), "errors": errs, "orders": orders,
                         "min_order": min_order})


def pseudo_p_oracle(p=4.0, resolutions=(16, 32, 64), interior=0.5):
    """``|x1|^{p'} - |x2|^{p'}`` solves the pseudo p-Laplace equation.

    Uses the ``l^p`` norm with ``gamma = p``.  Errors are taken over
    ``|x|_inf <= interior`` and must decrease monotonically.
    """
    pc = conjugate_exponent(p)

    def exact(x):
        return np.abs(x[..., 0]) ** pc - np.abs(x[..., 1]) ** pc

    def region(x):
        return np.max(np.abs(x), axis=-1) <= interior

    errs = []
    for N in resolutions:
        P = Problem.on_box([(-1.0, 1.0)] * 2, N, p, NormModel.ell_p(p, 2), boundary=exact)
        u, _ = solve(P)
        errs.append(sup_error(u, exact, region))
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    return OracleResult("pseudo_p", ok, {"p": p, "resolutions": list(resolutions),
                                         "interior_errors": errs})


def radial_oracle(gamma=1.5, resolutions=(16, 32, 64), mask=0.2):
    """Fundamental solution ``|x|^{(gamma-n)/(gamma-1)}`` in the plane.

    Vertices inside ``B_mask`` are held at the exact values together with
    the box boundary, which turns the domain into an annulus-like region.
    Errors are compared on ``|x| >= 2 mask`` and must decrease.
    """
    n = 2
    s = (gamma - n) / (gamma - 1.0)

    def exact(x):
        return np.linalg.norm(x, axis=-1) ** s

    def region(x):
        return np.linalg.norm(x, axis=-1) >= 2 * mask

    def held_values(x):
        # values deep inside the hole never touch a free vertex; the cap only
        # keeps the origin finite
        return np.maximum(np.linalg.norm(x, axis=-1), 0.5 * mask) ** s

    errs = []
    for N in resolutions:
        base = Problem.on_box([(-1.0, 1.0)] * n, N, gamma, NormModel.euclidean(n),
                              boundary=held_values)
        g = base.grid
        held = g.boundary_mask | (np.linalg.norm(g.vertices, axis=1) < mask)
        grid = dataclasses.replace(g, boundary_mask=held, _cache={})
        u, _ = solve(base.with_grid(grid))
        errs.append(sup_error(u, exact, region))
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    return OracleResult("radial", ok, {"gamma": gamma, "exponent": s, "mask": mask,
                                       "resolutions": list(resolutions), "errors": errs})


ORACLES = {
    "linear": linear_oracle,
    "harmonic": harmonic_oracle,
    "pseudo_p": pseudo_p_oracle,
    "radial": radial_oracle,
}


def run_oracles(names=None, resolutions=None):
    """Run the named oracles (all by default).  ``resolutions`` overrides
    the refinement sequence of the convergence oracles."""
    out = []
    for name in names or list(ORACLES):
        fn = ORACLES[name]
        if name == "linear":
            out.append(fn(resolution=resolutions[0]) if resolutions else fn())
        else:
            out.append(fn(resolutions=tuple(resolutions)) if resolutions else fn())
    return out
