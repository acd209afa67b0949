"""Anisotropic norms rho(x, xi) and their convex duals.

Every supported family is written as ``rho(x, xi) = || M(x) xi ||_{p(x)}``:

=====================  ===============  ============
family                 M(x)             p(x)
=====================  ===============  ============
WeightedEuclidean      S(x) (SPD)       2
EllP                   I                p
RotatedEllP            A (orthogonal)   p
VariableExponent       A(x)             p(x)
=====================  ===============  ============

so evaluation, gradient and flux share one vectorised l^p kernel, and the
convex dual is again of this form with ``M(x)^{-T}`` and the conjugate
exponent ``p' = p / (p - 1)``.

Arrays follow the numpy convention that the last axis holds vector
components; leading axes broadcast between points ``x`` and vectors ``xi``.
"""
import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import optimize

from .errors import ComputationError, ConfigurationError, DomainError

__all__ = [
    "Family",
    "NormModel",
    "LocalNorm",
    "DualNorm",
    "DualMode",
    "EllipticityBounds",
    "eval_norm",
    "grad",
    "flux",
    "dual_eval",
    "ellipticity_bounds",
    "hessian_ellp",
    "parse_norm",
    "conjugate_exponent",
    "sphere_directions",
    "VAREXP_PROFILES",
]

_ORTHO_TOL = 1e-10


def conjugate_exponent(p):
    """Hoelder conjugate ``p / (p - 1)``; ``inf`` maps to 1 and 1 to ``inf``."""
    p = float(p)
    if p == math.inf:
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


# --------------------------------------------------------------------------
# l^p kernel


def _lp_norm(y, p):
    """``||y||_p`` along the last axis, scaled to avoid overflow for large p."""
    a = np.abs(y)
    m = a.max(axis=-1)
    safe = np.where(m > 0, m, 1.0)
    p = np.asarray(p, dtype=float)
    s = np.sum((a / safe[..., None]) ** p[..., None], axis=-1)
    return m * s ** (1.0 / p)


def _lp_grad(y, p, norm=None):
    """Gradient of ``||.||_p`` at nonzero ``y``: ``sign(y_i) (|y_i|/||y||)^(p-1)``."""
    if norm is None:
        norm = _lp_norm(y, p)
    p = np.asarray(p, dtype=float)
    safe = np.where(norm > 0, norm, 1.0)
    return np.sign(y) * (np.abs(y) / safe[..., None]) ** (p[..., None] - 1.0)


def _apply(M, xi):
    if M is None:
        return xi
    return np.matmul(M, xi[..., None])[..., 0]


def _apply_t(M, g):
    if M is None:
        return g
    return np.matmul(np.swapaxes(M, -1, -2), g[..., None])[..., 0]


@dataclass(frozen=True)
class LocalNorm:
    """A norm frozen at a set of points: ``rho(xi) = ||M xi||_p``.

    ``M`` has shape ``(..., n, n)`` (or is ``None`` for the identity) and
    ``p`` has shape ``(...)`` or is a scalar.  Instances are what the solver
    holds per cell, so that x-dependent parameters are computed once.
    """

    M: Optional[np.ndarray]
    p: np.ndarray
    dim: int

    def eval(self, xi):
        xi = np.asarray(xi, dtype=float)
        return _lp_norm(_apply(self.M, xi), self.p)

    def grad(self, xi):
        xi = np.asarray(xi, dtype=float)
        y = _apply(self.M, xi)
        r = _lp_norm(y, self.p)
        if np.any(r == 0):
            raise DomainError("gradient of rho is undefined at xi = 0")
        return _apply_t(self.M, _lp_grad(y, self.p, r))

    def eval_and_grad(self, xi):
        """Value and gradient with the gradient set to 0 where ``xi = 0``."""
        xi = np.asarray(xi, dtype=float)
        y = _apply(self.M, xi)
        r = _lp_norm(y, self.p)
        g = _apply_t(self.M, _lp_grad(y, self.p, r))
        g = np.where((r > 0)[..., None], g, 0.0)
        return r, g

    def flux(self, gamma, xi):
        r, g = self.eval_and_grad(xi)
        return (r ** (gamma - 1.0))[..., None] * g

    def dual(self):
        """The analytic convex dual ``||M^{-T} zeta||_{p'}``."""
        p = np.asarray(self.p, dtype=float)
        pd = p / (p - 1.0)
        if self.M is None:
            return LocalNorm(None, pd, self.dim)
        Minv_t = np.swapaxes(np.linalg.inv(self.M), -1, -2)
        return LocalNorm(Minv_t, pd, self.dim)


# --------------------------------------------------------------------------
# norm models


class Family(enum.Enum):
    WEIGHTED_EUCLIDEAN = "WeightedEuclidean"
    ELL_P = "EllP"
    ROTATED_ELL_P = "RotatedEllP"
    VARIABLE_EXPONENT = "VariableExponent"


def _check_p(p, what="p"):
    p = float(p)
    if not (p > 1.0) or not math.isfinite(p):
        raise ConfigurationError(f"{what} must lie in (1, inf), got {p}")
    return p


def _check_orthogonal(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError("A must be a square matrix")
    if np.max(np.abs(A.T @ A - np.eye(A.shape[0]))) > _ORTHO_TOL:
        raise ConfigurationError("A must be orthogonal")
    return A


def rotation_2d(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class NormModel:
    """An anisotropic norm ``rho(x, xi)`` from one of four families.

    Use the ``weighted_euclidean``, ``ell_p``, ``rotated_ell_p`` and
    ``variable_exponent`` constructors (or :func:`parse_norm`) rather than
    calling the class directly.  Matrix- and scalar-valued maps over the
    domain take points of shape ``(..., n)`` and return ``(..., n, n)`` or
    ``(...)`` arrays; constant parameters may be given as plain arrays.
    """

    family: Family
    dim: int
    S: object = None
    p: Optional[float] = None
    A: object = None
    p_of_x: Optional[Callable] = None
    p_range: Optional[tuple] = None
    s_range: Optional[tuple] = None
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def weighted_euclidean(cls, S, dim=None, s_range=None, label=None):
        """``rho(x, xi) = |S(x) xi|`` with ``S(x)`` symmetric positive definite.

        ``s_range = (s_min, s_max)`` bounds the eigenvalues of ``S(x)``; for
        a constant matrix it defaults to its extreme eigenvalues.
        """
        if callable(S):
            if dim is None:
                raise ConfigurationError("dim is required when S is a map")
            if s_range is None:
                raise ConfigurationError("s_range is required when S is a map")
        else:
            S = np.array(S, dtype=float)
            if S.ndim == 0:
                if dim is None:
                    raise ConfigurationError("dim is required for a scalar S")
                S = float(S) * np.eye(dim)
            dim = S.shape[0]
            _check_spd(S[None], None)
            ev = np.linalg.eigvalsh(S)
            if s_range is None:
                s_range = (float(ev[0]), float(ev[-1]))
            else:
                _check_spd(S[None], s_range)
            S.setflags(write=False)
        s_range = (float(s_range[0]), float(s_range[1]))
        if not 0 < s_range[0] <= s_range[1]:
            raise ConfigurationError("s_range must satisfy 0 < s_min <= s_max")
        _check_dim(dim)
        if label is None:
            label = _weighted_label(S) if not callable(S) else "weighted(<map>)"
        return cls(Family.WEIGHTED_EUCLIDEAN, dim, S=S, p=2.0,
                   s_range=s_range, label=label)

    @classmethod
    def euclidean(cls, dim, scale=1.0):
        scale = float(scale)
        if not scale > 0:
            raise ConfigurationError("euclidean scale must be positive")
        return cls.weighted_euclidean(scale * np.eye(dim),
                                      label=f"euclidean({_fmt(scale)})")

    @classmethod
    def ell_p(cls, p, dim):
        p = _check_p(p)
        _check_dim(dim)
        return cls(Family.ELL_P, dim, p=p, label=f"ellp({_fmt(p)})")

    @classmethod
    def rotated_ell_p(cls, A, p, label=None):
        p = _check_p(p)
        A = _check_orthogonal(A)
        _check_dim(A.shape[0])
        A.setflags(write=False)
        if label is None:
            entries = ",".join(_fmt(a) for a in A.ravel())
            label = f"rotated_ellp({_fmt(p)},{entries})"
        return cls(Family.ROTATED_ELL_P, A.shape[0], p=p, A=A, label=label)

    @classmethod
    def rotated_ell_p_2d(cls, p, theta):
        return cls.rotated_ell_p(rotation_2d(theta), p,
                                 label=f"rotated_ellp({_fmt(p)},{_fmt(theta)})")

    @classmethod
    def variable_exponent(cls, p_of_x, p_min, p_max, dim, A=None, label=None):
        """``rho(x, xi) = ||A(x) xi||_{p(x)}`` with ``p(x)`` clamped to
        ``[p_min, p_max]``.  ``A`` defaults to the identity and must be
        invertible wherever it is evaluated."""
        p_min = _check_p(p_min, "p_min")
        p_max = _check_p(p_max, "p_max")
        if p_min > p_max:
            raise ConfigurationError("p_min must not exceed p_max")
        _check_dim(dim)
        if A is not None and not callable(A):
            A = np.array(A, dtype=float)
            if A.shape != (dim, dim):
                raise ConfigurationError("A must be an n x n matrix")
            _check_invertible(A[None])
            A.setflags(write=False)
        if label is None:
            label = f"varexp({_fmt(p_min)},{_fmt(p_max)},<map>)"
        return cls(Family.VARIABLE_EXPONENT, dim, A=A, p_of_x=p_of_x,
                   p_range=(p_min, p_max), label=label)

    # -- evaluation ----------------------------------------------------------

    @property
    def x_dependent(self):
        if self.family is Family.WEIGHTED_EUCLIDEAN:
            return callable(self.S)
        return self.family is Family.VARIABLE_EXPONENT

    def at(self, x):
        """Freeze the norm at points ``x`` (shape ``(..., n)``)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"points must have {self.dim} components")
        fam = self.family
        if fam is Family.ELL_P:
            return LocalNorm(None, np.asarray(self.p), self.dim)
        if fam is Family.ROTATED_ELL_P:
            return LocalNorm(self.A, np.asarray(self.p), self.dim)
        if fam is Family.WEIGHTED_EUCLIDEAN:
            if not callable(self.S):
                return LocalNorm(self.S, np.asarray(2.0), self.dim)
            S = np.asarray(self.S(x), dtype=float)
            S = np.broadcast_to(S, x.shape[:-1] + (self.dim, self.dim))
            _check_spd(S.reshape(-1, self.dim, self.dim), self.s_range)
            return LocalNorm(S, np.asarray(2.0), self.dim)
        # variable exponent
        p = np.asarray(self.p_of_x(x), dtype=float)
        p = np.clip(np.broadcast_to(p, x.shape[:-1]), *self.p_range)
        A = self.A
        if callable(A):
            A = np.asarray(A(x), dtype=float)
            A = np.broadcast_to(A, x.shape[:-1] + (self.dim, self.dim))
            _check_invertible(A.reshape(-1, self.dim, self.dim))
        return LocalNorm(A, p, self.dim)

    def eval(self, x, xi):
        return self.at(x).eval(xi)

    def grad(self, x, xi):
        return self.at(x).grad(xi)

    def flux(self, gamma, x, xi):
        return self.at(x).flux(_check_gamma(gamma), xi)

    # -- duality -------------------------------------------------------------

    def dual_model(self):
        """The analytic convex dual as a :class:`NormModel` of the same family."""
        key = "dual"
        if key in self._cache:
            return self._cache[key]
        fam = self.family
        if fam is Family.ELL_P:
            out = NormModel.ell_p(conjugate_exponent(self.p), self.dim)
        elif fam is Family.ROTATED_ELL_P:
            # A orthogonal => A^{-T} = A
            out = NormModel.rotated_ell_p(self.A, conjugate_exponent(self.p),
                                          label=f"dual[{self.label}]")
        elif fam is Family.WEIGHTED_EUCLIDEAN:
            lo, hi = self.s_range
            if callable(self.S):
                S = self.S

                def Sinv(x):
                    return np.linalg.inv(np.asarray(S(x), dtype=float))

                out = NormModel.weighted_euclidean(
                    Sinv, dim=self.dim, s_range=(1.0 / hi, 1.0 / lo),
                    label=f"dual[{self.label}]")
            else:
                out = NormModel.weighted_euclidean(
                    np.linalg.inv(self.S), s_range=(1.0 / hi, 1.0 / lo),
                    label=f"dual[{self.label}]")
        else:
            lo, hi = self.p_range
            p_of_x = self.p_of_x

            def p_dual(x):
                p = np.clip(np.asarray(p_of_x(x), dtype=float), lo, hi)
                return p / (p - 1.0)

            A = self.A
            if A is None:
                A_dual = None
            elif callable(A):
                def A_dual(x):
                    return np.swapaxes(np.linalg.inv(np.asarray(A(x), float)),
                                       -1, -2)
            else:
                A_dual = np.linalg.inv(A).T
            out = NormModel.variable_exponent(
                p_dual, conjugate_exponent(hi), conjugate_exponent(lo),
                self.dim, A=A_dual, label=f"dual[{self.label}]")
        self._cache[key] = out
        return out

    def __repr__(self):
        return f"NormModel({self.label or self.family.value}, dim={self.dim})"


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise ConfigurationError(f"dimension must be an integer >= 2, got {dim}")


def _check_gamma(gamma):
    gamma = float(gamma)
    if not gamma > 1.0 or not math.isfinite(gamma):
        raise ConfigurationError(f"gamma must exceed 1, got {gamma}")
    return gamma


def _check_spd(S, s_range):
    if np.max(np.abs(S - np.swapaxes(S, -1, -2))) > 1e-12 * max(1.0, np.max(np.abs(S))):
        raise ConfigurationError("S(x) must be symmetric")
    ev = np.linalg.eigvalsh(S)
    if np.min(ev) <= 0:
        raise ConfigurationError("S(x) must be positive definite")
    if s_range is not None:
        lo, hi = s_range
        slack = 1e-12 * hi
        if np.min(ev) < lo - slack or np.max(ev) > hi + slack:
            raise ConfigurationError(
                f"eigenvalues of S(x) leave the configured range [{lo}, {hi}]")


def _check_invertible(A):
    if np.any(np.linalg.cond(A) > 1e12):
        raise ConfigurationError("A(x) must be invertible")


def _fmt(v):
    return repr(float(v))


def _weighted_label(S):
    n = S.shape[0]
    return "weighted(" + ",".join(_fmt(S[i, j]) for i in range(n)
                                  for j in range(i, n)) + ")"


# --------------------------------------------------------------------------
# module-level operations


def eval_norm(norm, x, xi):
    """``rho(x, xi)``; zero exactly at ``xi = 0``."""
    return norm.eval(x, xi)


def grad(norm, x, xi):
    """``D_xi rho(x, xi)``; raises :class:`DomainError` at ``xi = 0``."""
    return norm.grad(x, xi)


def flux(norm, gamma, x, xi):
    """``rho^(gamma-1) D_xi rho``, extended by zero at ``xi = 0``."""
    return norm.flux(gamma, x, xi)


def sphere_directions(dim, count, seed=0):
    """Roughly uniform unit vectors: an angular grid in 2D, a Fibonacci
    lattice in 3D and seeded Gaussian samples above that."""
    count = int(count)
    if dim == 2:
        t = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = np.pi * (1.0 + 5.0 ** 0.5) * i
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    g = np.random.default_rng(seed).standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _tangent_basis(d):
    """Orthonormal basis of the complement of unit vector ``d`` (columns)."""
    q, _ = np.linalg.qr(np.column_stack([d, np.eye(d.size)]))
    return q[:, 1:d.size]


def _sphere_optimize(fun, d0, spacing, maximize):
    """Local optimisation of a 0-homogeneous ``fun`` near direction ``d0``.

    Returns ``(value, direction, ok)``.  In 2D the angle is bracketed by
    the neighbouring grid directions and Brent's method is used; in higher
    dimension BFGS runs in tangent coordinates.
    """
    sign = -1.0 if maximize else 1.0
    if d0.size == 2:
        t0 = math.atan2(d0[1], d0[0])

        def f(t):
            return sign * fun(np.array([math.cos(t), math.sin(t)]))

        res = optimize.minimize_scalar(f, bounds=(t0 - spacing, t0 + spacing),
                                       method="bounded",
                                       options={"xatol": 1e-12, "maxiter": 500})
        t = res.x
        d = np.array([math.cos(t), math.sin(t)])
        return sign * res.fun, d, bool(res.success)
    E = _tangent_basis(d0)

    def f(s):
        return sign * fun(d0 + E @ s)

    res = optimize.minimize(f, np.zeros(d0.size - 1), method="Nelder-Mead",
                            options={"xatol": 1e-11, "fatol": 1e-15,
                                     "maxiter": 4000,
                                     "initial_simplex": _simplex(d0.size - 1, spacing)})
    d = d0 + E @ res.x
    d /= np.linalg.norm(d)
    return sign * res.fun, d, bool(res.success)


def _simplex(k, h):
    s = np.zeros((k + 1, k))
    s[1:] = h * np.eye(k)
    return s


class DualMode(enum.Enum):
    ANALYTIC = "Analytic"
    NUMERIC = "Numeric"


@dataclass(frozen=True)
class DualNorm:
    """The convex dual ``rho_*(x, zeta) = sup_{rho(x, xi) < 1} xi . zeta``.

    ``mode=DualMode.NUMERIC`` maximises over ``directions`` sampled unit
    vectors mapped onto the unit rho-sphere, then refines the best sample by
    local ascent; it only needs ``base.eval`` and so works for any family.
    """

    base: NormModel
    mode: DualMode = DualMode.ANALYTIC
    numeric_tolerance: float = 1e-10
    directions: int = 4096

    def __post_init__(self):
        if not isinstance(self.mode, DualMode):
            object.__setattr__(self, "mode", DualMode(self.mode))

    def at(self, x):
        """Analytic local dual at points ``x``."""
        return self.base.at(x).dual()

    def eval(self, x, zeta):
        if self.mode is DualMode.ANALYTIC:
            return self.base.dual_model().eval(x, zeta)
        return self._numeric(x, zeta)

    def _numeric(self, x, zeta):
        zeta = np.asarray(zeta, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], zeta.shape[:-1])
        n = self.base.dim
        xs = np.broadcast_to(x, shape + (n,)).reshape(-1, n)
        zs = np.broadcast_to(zeta, shape + (n,)).reshape(-1, n)
        out = np.empty(len(zs))
        dirs = sphere_directions(n, self.directions)
        spacing = 2.0 * np.pi / self.directions if n == 2 else \
            4.0 * (4.0 * np.pi / self.directions) ** 0.5
        for i, (xi_pt, z) in enumerate(zip(xs, zs)):
            if not np.any(z):
                out[i] = 0.0
                continue
            local = self.base.at(xi_pt)
            boundary = dirs / local.eval(dirs)[:, None]
            vals = boundary @ z
            k = int(np.argmax(vals))
            best = float(vals[k])

            def support(d, local=local, z=z):
                return float(d @ z) / float(local.eval(d))

            val, _, ok = _sphere_optimize(support, dirs[k], spacing, True)
            if not ok or val < best - self.numeric_tolerance * max(1.0, abs(best)):
                raise ComputationError(
                    "numeric dual: local ascent failed to converge", best=best)
            out[i] = max(val, best)
        return out.reshape(shape)


def dual_eval(dual, x, zeta):
    """Evaluate ``rho_*(x, zeta)`` in the dual's configured mode."""
    return dual.eval(x, zeta)


class EllipticityBounds(NamedTuple):
    nu: float
    Lambda: float
    samples: int


def ellipticity_bounds(norm, domain, sphere_samples=512, points_per_axis=5):
    """Sample extrema ``(nu, Lambda)`` of ``rho(x, xi)`` over ``|xi| = 1``.

    ``domain`` is ``(lo, hi)`` with per-axis bounds.  Points ``x`` form a
    ``points_per_axis`` lattice (a single point for x-independent norms);
    the extreme samples are refined by local search on the sphere.  The
    result is an inner estimate: it is not certified to enclose the true
    bounds.
    """
    n = norm.dim
    if sphere_samples < 2 * n:
        raise ConfigurationError("sphere_samples must be at least 2n")
    lo, hi = (np.asarray(b, dtype=float) for b in domain)
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi < lo):
        raise ConfigurationError("domain must be a nonempty box in R^n")
    if norm.x_dependent:
        axes = [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    else:
        pts = ((lo + hi) / 2.0)[None]
    dirs = sphere_directions(n, sphere_samples)
    spacing = 2.0 * np.pi / sphere_samples if n == 2 else \
        4.0 * (4.0 * np.pi / sphere_samples) ** 0.5
    nu, lam = math.inf, -math.inf
    for x in pts:
        local = norm.at(x)
        vals = local.eval(dirs)

        def unit_rho(d, local=local):
            return float(local.eval(d / np.linalg.norm(d)))

        kmin, kmax = int(np.argmin(vals)), int(np.argmax(vals))
        vmin, _, _ = _sphere_optimize(unit_rho, dirs[kmin], spacing, False)
        vmax, _, _ = _sphere_optimize(unit_rho, dirs[kmax], spacing, True)
        nu = min(nu, vmin, float(vals[kmin]))
        lam = max(lam, vmax, float(vals[kmax]))
    return EllipticityBounds(float(nu), float(lam), len(pts) * sphere_samples)


def hessian_ellp(p, x):
    """Hessian of ``||.||_p^2`` at ``x != 0`` (``p >= 2``).

    ``H_ij = 2(p-1) [ delta_ij (|x_i|/||x||)^(p-2)
    - (p-2)/(p-1) s_i s_j / ||x||^(2(p-1)) ]`` with
    ``s_i = x_i |x_i|^(p-2)``.  At a standard basis vector ``e_k`` only
    ``H_kk = 2`` survives: the form vanishes on the complement of ``e_k``,
    which is the degeneracy exploited by the pseudo p-Laplacian.
    """
    p = float(p)
    if p < 2.0:
        raise ConfigurationError("hessian_ellp needs p >= 2")
    x = np.asarray(x, dtype=float)
    r = _lp_norm(x, p)
    if r == 0:
        raise DomainError("Hessian of ||.||_p^2 is undefined at 0")
    a = np.abs(x)
    s = x * a ** (p - 2.0)
    diag = (a / r) ** (p - 2.0)
    return 2.0 * (p - 1.0) * (np.diag(diag)
                              - (p - 2.0) / (p - 1.0) * np.outer(s, s) / r ** (2.0 * (p - 1.0)))


# --------------------------------------------------------------------------
# variable-exponent profiles and the text grammar


def _p_wave(x):
    return 0.5 + 0.5 * np.sin(2.0 * np.pi * x[..., 0])


def _p_radial(x):
    return 0.5 + 0.5 * np.cos(np.pi * np.linalg.norm(x, axis=-1))


def _p_tilt(x):
    return 0.5 + 0.5 * np.sin(np.pi * x[..., -1])


def _a_tilt(x):
    """Rotation in the (x1, x2) plane by an angle that follows ``x1``."""
    n = x.shape[-1]
    t = (np.pi / 4.0) * np.sin(np.pi * x[..., 0])
    c, s = np.cos(t), np.sin(t)
    A = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
    A[..., 0, 0], A[..., 0, 1] = c, -s
    A[..., 1, 0], A[..., 1, 1] = s, c
    return A


# name -> (unit profile in [0, 1], optional matrix map)
VAREXP_PROFILES = {
    "wave": (_p_wave, None),
    "radial": (_p_radial, None),
    "tilt": (_p_tilt, _a_tilt),
}
_PROFILE_IDS = {0: "wave", 1: "radial", 2: "tilt"}

_GRAMMAR = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def parse_norm(text, dim):
    """Build a :class:`NormModel` from its text form.

    Grammar::

        euclidean(scale)
        weighted(s11, s12, ..., s1n, s22, ..., snn)   # upper triangle, row-wise
        ellp(p)
        rotated_ellp(p, theta)                         # 2D rotation angle
        rotated_ellp(p, a11, a12, ..., ann)            # any dimension
        varexp(p_min, p_max, profile)                  # profile: wave|radial|tilt or 0|1|2
    """
    m = _GRAMMAR.match(text)
    if not m:
        raise ConfigurationError(f"cannot parse norm specification {text!r}")
    name, argstr = m.group(1), m.group(2)
    args = [a.strip() for a in argstr.split(",")] if argstr.strip() else []

    def nums(k=None):
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise ConfigurationError(f"non-numeric argument in {text!r}") from None
        if k is not None and len(vals) != k:
            raise ConfigurationError(f"{name} expects {k} arguments, got {len(vals)}")
        return vals

    if name == "euclidean":
        (scale,) = nums(1)
        return NormModel.euclidean(dim, scale)
    if name == "weighted":
        vals = nums(dim * (dim + 1) // 2)
        S = np.zeros((dim, dim))
        S[np.triu_indices(dim)] = vals
        S = S + np.triu(S, 1).T
        return NormModel.weighted_euclidean(S, label=f"weighted({','.join(_fmt(v) for v in vals)})")
    if name == "ellp":
        (p,) = nums(1)
        return NormModel.ell_p(p, dim)
    if name == "rotated_ellp":
        vals = nums()
        if dim == 2 and len(vals) == 2:
            return NormModel.rotated_ell_p_2d(vals[0], vals[1])
        if len(vals) != 1 + dim * dim:
            raise ConfigurationError(
                f"rotated_ellp expects p and {'an angle or ' if dim == 2 else ''}"
                f"{dim * dim} matrix entries")
        return NormModel.rotated_ell_p(np.array(vals[1:]).reshape(dim, dim), vals[0])
    if name == "varexp":
        if len(args) != 3:
            raise ConfigurationError("varexp expects (p_min, p_max, profile)")
        try:
            p_min, p_max = float(args[0]), float(args[1])
        except ValueError:
            raise ConfigurationError(f"non-numeric exponent in {text!r}") from None
        prof = args[2]
        if prof.isdigit():
            prof = _PROFILE_IDS.get(int(prof), prof)
        if prof not in VAREXP_PROFILES:
            raise ConfigurationError(f"unknown varexp profile {args[2]!r}")
        unit, A = VAREXP_PROFILES[prof]

        def p_of_x(x, unit=unit, lo=p_min, hi=p_max):
            return lo + (hi - lo) * unit(np.asarray(x, dtype=float))

        return NormModel.variable_exponent(
            p_of_x, p_min, p_max, dim, A=A,
            label=f"varexp({_fmt(p_min)},{_fmt(p_max)},{prof})")
    raise ConfigurationError(f"unknown norm family {name!r}")
