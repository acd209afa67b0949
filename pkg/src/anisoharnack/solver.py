"""Dirichlet solver for the weak equation

    int < rho(x, Du)^(gamma-1) D_xi rho(x, Du), D phi > = int < F, D phi > + f phi

over piecewise-linear fields.  The equation is the Euler-Lagrange equation
of the convex energy

    J(u) = int (1/gamma) rho(x, Du)^gamma - F . Du - f u,

which is minimised by preconditioned descent with an Armijo line search.
All integrals use one-point (centroid) quadrature per simplex.
"""
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConfigurationError, ConvergenceError, DomainError
from .grid import DiscreteField, Grid, build_grid, cell_gradients
from .norms import NormModel, conjugate_exponent

# relative size of rounding noise in an assembled energy value
ENERGY_NOISE = 1e-13

__all__ = [
    "Problem",
    "SolveOptions",
    "SolveReport",
    "Classification",
    "energy",
    "energy_gradient",
    "solve",
    "residual_pairing",
    "normalized_residuals",
    "classify",
]


def _as_map(value, shape_tail=()):
    """Turn ``None``, a constant or a callable into a callable of points."""
    if value is None:
        return None
    if callable(value):
        return value
    const = np.asarray(value, dtype=float)

    def f(x):
        return np.broadcast_to(const, np.shape(x)[:-1] + shape_tail)

    return f


@dataclass(frozen=True, eq=False)
class Problem:
    """Dirichlet problem on a box.

    Parameters
    ----------
    grid : Grid
    gamma : float
        Homogeneity exponent, ``gamma > 1``.
    norm : NormModel
    boundary : callable or float
        Dirichlet data, evaluated at boundary vertices.
    F : callable, array or None
        Vector source ``F(x)`` with shape ``(..., n)``; ``None`` means zero.
    f : callable, float or None
        Scalar source; ``None`` means zero.
    q : float
        Integrability exponent of the data (``inf`` for bounded data); must
        exceed ``n / (gamma - 1)``.
    """

    grid: Grid
    gamma: float
    norm: NormModel
    boundary: object = 0.0
    F: object = None
    f: object = None
    q: float = math.inf
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        gamma = float(self.gamma)
        if not gamma > 1.0 or not math.isfinite(gamma):
            raise ConfigurationError(f"gamma must exceed 1, got {gamma}")
        object.__setattr__(self, "gamma", gamma)
        if self.norm.dim != self.grid.dim:
            raise ConfigurationError("norm and grid dimensions differ")
        n = self.grid.dim
        q = float(self.q)
        if not q > n / (gamma - 1.0):
            raise ConfigurationError(
                f"q = {q} violates q > n/(gamma-1) = {n / (gamma - 1.0)}")
        object.__setattr__(self, "q", q)

    @classmethod
    def on_box(cls, box, resolution, gamma, norm, **kw):
        return cls(build_grid(box, resolution), gamma, norm, **kw)

    def with_grid(self, grid):
        return replace(self, grid=grid, _cache={})

    def with_resolution(self, resolution):
        box = np.column_stack([self.grid.lo, self.grid.hi])
        return self.with_grid(build_grid(box, resolution))

    # -- derived exponents -------------------------------------------------

    @property
    def dim(self):
        return self.grid.dim

    @property
    def gamma_conjugate(self):
        return conjugate_exponent(self.gamma)

    @property
    def delta(self):
        """``1 - n / (q (gamma - 1))``."""
        return 1.0 - self.dim / (self.q * (self.gamma - 1.0))

    @property
    def chi(self):
        """``n / (n - gamma)``; ``inf`` when ``gamma >= n``."""
        n = self.dim
        return n / (n - self.gamma) if self.gamma < n else math.inf

    @property
    def within_theorem_range(self):
        """Whether ``1 < gamma < n`` (the local-boundedness setting)."""
        return self.gamma < self.dim

    # -- data maps ----------------------------------------------------------

    def F_map(self):
        return _as_map(self.F, (self.dim,))

    def f_map(self):
        return _as_map(self.f)

    def boundary_values(self):
        g = self.grid
        xb = g.vertices[g.boundary_mask]
        vals = _as_map(self.boundary)(xb)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (len(xb),))
        if not np.all(np.isfinite(vals)):
            raise DomainError("boundary data is not finite on the boundary")
        return vals

    def initial_field(self, initial="harmonic"):
        """Boundary data with interior values from ``initial``.

        ``"harmonic"`` uses the discrete harmonic extension, ``"zero"`` zeros,
        an array supplies the interior (or all) values directly.
        """
        g = self.grid
        u = np.zeros(g.n_vertices)
        u[g.boundary_mask] = self.boundary_values()
        if isinstance(initial, str):
            if initial == "harmonic":
                d = self.disc
                K = d.stiffness(np.broadcast_to(np.eye(self.dim), (g.n_cells, self.dim, self.dim)))
                rhs = -d.coupling(np.eye(self.dim), u)
                u[g.free] = spla.spsolve(K.tocsc(), rhs)
            elif initial != "zero":
                raise ConfigurationError(f"unknown initial guess {initial!r}")
        else:
            vals = np.asarray(initial, dtype=float)
            if vals.shape == (g.n_vertices,):
                u[g.free] = vals[g.free]
            elif vals.shape == (int(g.free.sum()),):
                u[g.free] = vals
            else:
                raise ConfigurationError("initial values have the wrong shape")
        return DiscreteField(g, u)

    @property
    def disc(self):
        if "disc" not in self._cache:
            self._cache["disc"] = _Discretization(self)
        return self._cache["disc"]


class _Discretization:
    """Per-cell data frozen at centroids plus sparse assembly helpers."""

    def __init__(self, problem):
        g = problem.grid
        self.grid = g
        self.gamma = problem.gamma
        n = g.dim
        xc = g.centroids
        self.local = problem.norm.at(xc)
        Fm, fm = problem.F_map(), problem.f_map()
        self.Fc = None if Fm is None else np.broadcast_to(
            np.asarray(Fm(xc), dtype=float), (g.n_cells, n)).copy()
        self.fc = None if fm is None else np.broadcast_to(
            np.asarray(fm(xc), dtype=float), (g.n_cells,)).copy()
        gp = problem.gamma_conjugate
        contrib = g.volumes[:, None] * np.linalg.norm(g.basis_grads, axis=-1) ** gp
        self.hat_scale = np.bincount(g.cells.ravel(), contrib.ravel(),
                                     minlength=g.n_vertices) ** (1.0 / gp)
        # free-free sparsity pattern
        free = g.free
        self.free_index = np.full(g.n_vertices, -1)
        self.free_index[free] = np.arange(int(free.sum()))
        k1 = n + 1
        rows = np.repeat(g.cells, k1, axis=1).ravel()
        cols = np.tile(g.cells, (1, k1)).ravel()
        keep = free[rows] & free[cols]
        self.pat_keep = keep
        self.pat_rows = self.free_index[rows[keep]]
        self.pat_cols = self.free_index[cols[keep]]
        self.n_free = int(free.sum())

    # energy density (1/gamma) rho_eps^gamma and its xi-gradient
    def density(self, Du, eps):
        r, gr = self.local.eval_and_grad(Du)
        if eps:
            s2 = np.sum(Du * Du, axis=-1)
            re = np.sqrt(r * r + eps * eps * s2)
            safe = np.where(re > 0, re, 1.0)
            gr = np.where((re > 0)[:, None], (r[:, None] * gr + eps * eps * Du) / safe[:, None], 0.0)
            r = re
        return r, gr

    def energy(self, u, eps=0.0):
        g = self.grid
        Du = cell_gradients(g, u)
        r = self.local.eval(Du)
        if eps:
            r = np.sqrt(r * r + eps * eps * np.sum(Du * Du, axis=-1))
        dens = r ** self.gamma / self.gamma
        if self.Fc is not None:
            dens = dens - np.sum(self.Fc * Du, axis=-1)
        if self.fc is not None:
            dens = dens - self.fc * u[g.cells].mean(axis=1)
        return float(np.sum(g.volumes * dens))

    def energy_magnitude(self, u, eps=0.0):
        """``sum_c vol_c |each term|``: the scale of rounding errors in J."""
        g = self.grid
        Du = cell_gradients(g, u)
        r = self.local.eval(Du)
        if eps:
            r = np.sqrt(r * r + eps * eps * np.sum(Du * Du, axis=-1))
        mag = r ** self.gamma / self.gamma
        if self.Fc is not None:
            mag = mag + np.abs(np.sum(self.Fc * Du, axis=-1))
        if self.fc is not None:
            mag = mag + np.abs(self.fc * u[g.cells].mean(axis=1))
        return float(np.sum(g.volumes * mag)) + 1e-300

    def gradient(self, u, eps=0.0):
        """Assembled weak residual for every vertex (boundary rows kept)."""
        g = self.grid
        Du = cell_gradients(g, u)
        r, gr = self.density(Du, eps)
        w = (r ** (self.gamma - 1.0))[:, None] * gr
        w = np.where((r > 0)[:, None], w, 0.0)
        if self.Fc is not None:
            w = w - self.Fc
        loc = g.volumes[:, None] * np.einsum("ckj,cj->ck", g.basis_grads, w)
        if self.fc is not None:
            loc = loc - (g.volumes * self.fc)[:, None] / (g.dim + 1)
        return np.bincount(g.cells.ravel(), loc.ravel(), minlength=g.n_vertices)

    def roundoff_floor(self, u, eps=0.0):
        """Residual size attributable to cancellation in the assembly."""
        g = self.grid
        Du = cell_gradients(g, u)
        r, gr = self.density(Du, eps)
        w = np.linalg.norm((r ** (self.gamma - 1.0))[:, None] * gr, axis=1)
        if self.Fc is not None:
            w = w + np.linalg.norm(self.Fc, axis=1)
        loc = g.volumes[:, None] * w[:, None] * np.linalg.norm(g.basis_grads, axis=-1)
        if self.fc is not None:
            loc = loc + (g.volumes * np.abs(self.fc))[:, None] / (g.dim + 1)
        mag = np.bincount(g.cells.ravel(), loc.ravel(), minlength=g.n_vertices)
        free = g.free
        if not np.any(free):
            return 0.0
        return float(1e-13 * np.max(mag[free] / self.hat_scale[free]))

    def stiffness(self, A):
        """Free-free matrix of ``sum_c vol_c G_c A_c G_c^T``."""
        g = self.grid
        GA = np.einsum("cki,cij->ckj", g.basis_grads, A)
        loc = g.volumes[:, None, None] * np.einsum("ckj,clj->ckl", GA, g.basis_grads)
        data = loc.reshape(-1)[self.pat_keep]
        K = sparse.coo_matrix((data, (self.pat_rows, self.pat_cols)),
                              shape=(self.n_free, self.n_free))
        return K.tocsr()

    def coupling(self, A, u):
        """Free rows of ``K u`` for a constant matrix ``A`` (boundary lifting)."""
        g = self.grid
        Du = cell_gradients(g, u)
        loc = g.volumes[:, None] * np.einsum("ckj,cj->ck", g.basis_grads, Du @ A.T)
        full = np.bincount(g.cells.ravel(), loc.ravel(), minlength=g.n_vertices)
        return full[g.free]

    def linearization(self, u, floor=1e-3):
        """SPD matrices ``A_c`` with ``A_c Du_c`` equal to the flux.

        For ``rho = ||M xi||_p`` the flux is ``rho^(gamma-p) M^T diag(|y|^(p-2)) y``
        with ``y = M xi``; freezing the coefficients at the current gradient
        gives the lagged (Kacanov) operator.  Small ``rho`` and ``|y_i|`` are
        floored relative to the field's typical gradient so the matrix stays
        positive definite.
        """
        g = self.grid
        Du = cell_gradients(g, u)
        loc = self.local
        n = g.dim
        M = loc.M
        y = Du if M is None else np.matmul(M, Du[..., None])[..., 0]
        p = np.broadcast_to(np.asarray(loc.p, dtype=float), (g.n_cells,))
        rho = loc.eval(Du)
        ref = float(np.sqrt(np.sum(g.volumes * rho ** 2) / np.sum(g.volumes)))
        if ref == 0:
            ref = 1.0
        rho_f = np.maximum(rho, floor * ref)
        y_f = np.maximum(np.abs(y), floor * rho_f[:, None])
        d = rho_f[:, None] ** (self.gamma - p[:, None]) * y_f ** (p[:, None] - 2.0)
        if M is None:
            A = np.zeros((g.n_cells, n, n))
            A[:, np.arange(n), np.arange(n)] = d
        else:
            Mb = np.broadcast_to(M, (g.n_cells, n, n))
            A = np.einsum("cki,ck,ckj->cij", Mb, d, Mb)
        return A


def energy(problem, field, epsilon=0.0):
    """Discrete energy ``sum_c vol_c [(1/gamma) rho^gamma - F.Du - f u(x_c)]``.

    The ``1/gamma`` factor makes the first variation equal the left side of
    the weak equation with no extra constant.
    """
    _check_field(problem, field)
    return problem.disc.energy(field.values, epsilon)


def energy_gradient(problem, field, epsilon=0.0):
    """Derivative of :func:`energy` with respect to each vertex value.

    Entries at boundary vertices are set to zero.
    """
    _check_field(problem, field)
    gvec = problem.disc.gradient(field.values, epsilon)
    gvec[problem.grid.boundary_mask] = 0.0
    return gvec


def _check_field(problem, field):
    if field.grid is not problem.grid and field.values.shape != (problem.grid.n_vertices,):
        raise DomainError("field does not live on the problem grid")


def residual_pairing(problem, u, phi):
    """Weak residual ``int <flux(Du) - F, D phi> - f phi`` for ``phi`` that
    vanishes on the boundary.  Negative pairings against nonnegative
    ``phi`` indicate a subsolution, positive ones a supersolution."""
    g = problem.grid
    phi_vals = phi.values if isinstance(phi, DiscreteField) else np.asarray(phi, float)
    if np.any(phi_vals[g.boundary_mask] != 0):
        raise DomainError("test function must vanish on the boundary")
    _check_field(problem, u)
    return float(problem.disc.gradient(u.values) @ phi_vals)


def normalized_residuals(problem, u):
    """Pairings with every interior hat function, each divided by the
    hat's ``W^{1,gamma'}`` seminorm."""
    d = problem.disc
    gvec = d.gradient(u.values)
    free = problem.grid.free
    return gvec[free] / d.hat_scale[free]


class Classification(enum.Enum):
    SOLUTION = "Solution"
    SUBSOLUTION = "Subsolution"
    SUPERSOLUTION = "Supersolution"
    NEITHER = "Neither"


def classify(problem, u, tol):
    """Sign test of the normalised residual against every interior hat."""
    r = normalized_residuals(problem, u)
    sub = bool(np.all(r <= tol))
    sup = bool(np.all(r >= -tol))
    if sub and sup:
        return Classification.SOLUTION
    if sub:
        return Classification.SUBSOLUTION
    if sup:
        return Classification.SUPERSOLUTION
    return Classification.NEITHER


# --------------------------------------------------------------------------
# descent


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings.

    ``tolerance`` is relative to the initial normalised residual; the
    iteration also stops once the residual reaches the floating-point floor
    of the assembly.  ``preconditioner`` is one of ``"kacanov"`` (lagged
    flux linearisation, rebuilt every ``refresh`` iterations),
    ``"diagonal"`` (its diagonal) or ``"none"``.
    """

    tolerance: float = 1e-8
    max_iterations: int = 50_000
    epsilon_regularization: float = 0.0
    acceleration: bool = False
    preconditioner: str = "kacanov"
    refresh: int = 1
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step_bounds: tuple = (1e-12, 1e3)
    max_backtracks: int = 60
    initial: object = "harmonic"

    def __post_init__(self):
        if self.preconditioner not in ("kacanov", "diagonal", "none"):
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.epsilon_regularization < 0:
            raise ConfigurationError("epsilon_regularization must be nonnegative")


@dataclass
class SolveReport:
    iterations: int = 0
    energy_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    initial_residual: float = 0.0
    final_residual: float = 0.0
    target_residual: float = 0.0
    line_search_failures: int = 0
    restarts: int = 0
    converged: bool = False

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "energy_trace": [float(e) for e in self.energy_trace],
            "initial_residual": float(self.initial_residual),
            "final_residual": float(self.final_residual),
            "target_residual": float(self.target_residual),
            "line_search_failures": self.line_search_failures,
            "restarts": self.restarts,
            "converged": self.converged,
        }


class _Preconditioner:
    def __init__(self, disc, kind, eps):
        self.disc, self.kind, self.eps = disc, kind, eps
        self.solve_fn = None
        self.matrix = None

    def update(self, u):
        if self.kind == "none":
            return
        A = self.disc.linearization(u)
        K = self.disc.stiffness(A)
        if self.kind == "diagonal":
            diag = K.diagonal()
            self.matrix = sparse.diags(diag)
            self.solve_fn = lambda r: r / diag
        else:
            self.matrix = K
            self.solve_fn = spla.factorized(K.tocsc())

    def apply(self, r):
        return r if self.kind == "none" else self.solve_fn(r)

    def metric(self, s):
        return float(s @ s) if self.kind == "none" else float(s @ (self.matrix @ s))


def solve(problem, options=None, **overrides):
    """Minimise the discrete energy with the problem's boundary data.

    Returns ``(field, report)``.  Each iteration takes the preconditioned
    negative gradient (optionally with restarted momentum), starts the line
    search from a Barzilai-Borwein step and backtracks until the Armijo
    condition holds.  Near convergence, when energy differences drop below
    floating-point resolution, the sufficient-decrease test switches to the
    equivalent directional-derivative form.  Raises
    :class:`ConvergenceError` (carrying the best field) if the residual does
    not reach the target within ``max_iterations``.
    """
    opts = options or SolveOptions()
    if overrides:
        opts = replace(opts, **overrides)
    g = problem.grid
    d = problem.disc
    eps = opts.epsilon_regularization
    free = g.free
    u = problem.initial_field(opts.initial).values.copy()
    report = SolveReport()

    def resid(gvec):
        if not np.any(free):
            return 0.0
        return float(np.max(np.abs(gvec[free]) / d.hat_scale[free]))

    E = d.energy(u, eps)
    gvec = d.gradient(u, eps)
    r = resid(gvec)
    report.initial_residual = r
    target = max(opts.tolerance * r, d.roundoff_floor(u, eps))
    report.target_residual = target
    report.energy_trace.append(E)
    report.residual_trace.append(r)
    e_noise = ENERGY_NOISE * d.energy_magnitude(u, eps)
    pre = _Preconditioner(d, opts.preconditioner, eps)
    lo_step, hi_step = opts.step_bounds
    u_prev, g_prev = None, None
    velocity = np.zeros(int(free.sum()))
    momentum_k = 0
    step = 1.0 if opts.preconditioner == "kacanov" else None
    stalled = 0

    it = 0
    while r > target and it < opts.max_iterations:
        it += 1
        if (it - 1) % max(1, opts.refresh) == 0:
            pre.update(u)
        gf = gvec[free]
        direction = -pre.apply(gf)
        slope = float(gf @ direction)
        if not slope < 0:
            # numerically flat or broken direction: fall back to steepest descent
            direction = -gf
            slope = -float(gf @ gf)
        # Barzilai-Borwein initial step in the preconditioner metric
        if u_prev is not None:
            s = u[free] - u_prev
            yv = gf - g_prev
            sy = float(s @ yv)
            if sy > 0:
                step = pre.metric(s) / sy
        if step is None:
            step = 1.0 / max(1.0, float(np.max(np.abs(gf))))
        step = min(max(step, lo_step), hi_step)

        if opts.acceleration and momentum_k > 0:
            beta = (momentum_k - 1.0) / (momentum_k + 2.0)
            trial_dir = direction + beta * velocity / step
            tslope = float(gf @ trial_dir)
            if tslope < 0:
                direction, slope = trial_dir, tslope

        accepted = False
        alpha = step
        for _ in range(opts.max_backtracks):
            cand = u.copy()
            cand[free] += alpha * direction
            Ec = d.energy(cand, eps)
            dE = Ec - E
            if dE < 0 and dE <= opts.armijo_c * alpha * slope:
                gc = d.gradient(cand, eps)
                accepted = True
                break
            if abs(dE) <= e_noise:
                # energy change below resolution: derivative form of the test
                gc = d.gradient(cand, eps)
                if float(gc[free] @ direction) <= (2 * opts.armijo_c - 1) * slope:
                    accepted = True
                    break
            alpha *= opts.backtrack
            if alpha < lo_step:
                break

        if not accepted:
            report.line_search_failures += 1
            if momentum_k > 0:
                momentum_k = 0
                velocity[:] = 0.0
                report.restarts += 1
                continue
            stalled += 1
            if stalled >= 3:
                break
            step = None
            continue
        stalled = 0
        u_prev, g_prev = u[free].copy(), gf.copy()
        velocity = cand[free] - u[free]
        u, E, gvec = cand, Ec, gc
        momentum_k += 1
        r = resid(gvec)
        report.energy_trace.append(E)
        report.residual_trace.append(r)

    report.iterations = it
    report.final_residual = r
    report.converged = r <= target
    out = DiscreteField(g, u)
    if not report.converged:
        raise ConvergenceError(
            f"residual {r:.3e} above target {target:.3e} after {it} iterations",
            field=out, report=report)
    return out, report
