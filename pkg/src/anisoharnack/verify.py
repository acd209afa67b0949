"""Constant-free checks of local boundedness, Harnack and oscillation decay.

Each inequality has the shape ``LHS <= C * RHS`` (or ``>=`` for the weak
Harnack bound) with an unknown constant.  The functions here return the
ratio ``LHS / RHS`` and the sweep asserts that it stays bounded (away from
zero) across instances and under mesh refinement.

Data terms are shared by every check:

    R^delta ||rho_*(x, F)||_{L^q(B)}^{1/(gamma-1)}
        + R^{gamma' delta} ||f||_{L^{q/gamma'}(B)}^{1/(gamma-1)}

with ``delta = 1 - n / (q (gamma - 1))``.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (ComputationError, ConfigurationError, ConvergenceError,
                     DomainError, InsufficientDataError)
from .grid import ball_stats, oscillation
from .norms import conjugate_exponent, parse_norm
from .solver import Classification, Problem, SolveOptions, classify, solve

__all__ = [
    "CheckRecord",
    "VerificationConfig",
    "caccioppoli_ratio",
    "sup_bound_ratio",
    "weak_harnack_ratio",
    "harnack_ratio",
    "oscillation_profile",
    "fit_decay",
    "default_tail_floor",
    "DecayFit",
    "MoserStep",
    "moser_schedule",
    "moser_geometric_sum",
    "exponents",
    "SweepSpec",
    "VerificationReport",
    "sweep",
    "liouville_experiment",
    "REPORT_SCHEMA",
]

REPORT_SCHEMA = 1


def exponents(n, gamma, q):
    """``(gamma', delta, chi)`` for dimension ``n``.  ``chi`` is ``inf`` when
    ``gamma >= n``."""
    gamma = float(gamma)
    gp = conjugate_exponent(gamma)
    delta = 1.0 - n / (float(q) * (gamma - 1.0))
    chi = n / (n - gamma) if gamma < n else math.inf
    return gp, delta, chi


def weak_harnack_p_limit(n, gamma):
    """Upper limit ``n (gamma-1) / (n - gamma)`` on the weak-Harnack exponent."""
    return n * (gamma - 1.0) / (n - gamma) if gamma < n else math.inf


@dataclass(frozen=True)
class VerificationConfig:
    """Exponents and radii shared by the checks.

    ``theta``/``tau`` are the weak-Harnack radius fractions, ``p`` the
    Lebesgue exponent used for ``u`` (``None`` picks the natural default of
    each check) and ``radii`` a sequence of ``(r, R)`` pairs.
    """

    n: int = 2
    gamma: float = 2.0
    q: float = math.inf
    p: float = None
    theta: float = 0.4
    tau: float = 0.8
    radii: tuple = ((0.1, 0.2), (0.1, 0.4), (0.2, 0.4))
    centers: tuple = ((0.0, 0.0),)
    sweep_seeds: tuple = (0,)

    def __post_init__(self):
        gp, delta, chi = exponents(self.n, self.gamma, self.q)
        if not delta > 0:
            raise ConfigurationError(
                f"q must exceed n/(gamma-1) = {self.n / (self.gamma - 1)} so that delta > 0")
        if not 0 < self.theta < self.tau < 1:
            raise ConfigurationError("need 0 < theta < tau < 1")
        if self.p is not None:
            lim = weak_harnack_p_limit(self.n, self.gamma)
            if not 0 < self.p < lim:
                raise ConfigurationError(f"weak-Harnack p must lie in (0, {lim})")
        for r, R in self.radii:
            if not 0 < r < R:
                raise ConfigurationError("radii pairs need 0 < r < R")

    @property
    def delta(self):
        return exponents(self.n, self.gamma, self.q)[1]

    @property
    def chi(self):
        return exponents(self.n, self.gamma, self.q)[2]

    @property
    def gamma_conjugate(self):
        return exponents(self.n, self.gamma, self.q)[0]


@dataclass
class CheckRecord:
    """One evaluated inequality: ``ratio = lhs / rhs`` with ``C`` removed."""

    check: str
    lhs: float
    rhs: float
    ratio: float
    radii: dict
    center: tuple = ()
    instance_id: str = ""
    flags: list = field(default_factory=list)

    def __float__(self):
        return float(self.ratio)

    def to_dict(self):
        d = asdict(self)
        d["center"] = [float(c) for c in self.center]
        for k in ("lhs", "rhs", "ratio"):
            d[k] = _json_float(d[k])
        d["radii"] = {k: float(v) for k, v in sorted(self.radii.items())}
        return d


def _json_float(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


def _require_ball(u, center, r, what):
    g = u.grid
    if not g.contains_ball(center, r, margin=g.h):
        raise DomainError(
            f"{what}: B_{r}({list(center)}) must sit inside the box with a one-cell margin")


def _ratio(lhs, rhs, zero_zero=0.0):
    if rhs > 0:
        return lhs / rhs
    if lhs == 0:
        return zero_zero
    return math.inf


def _function_norm(values, weights, p):
    values = np.abs(values)
    if len(values) == 0:
        return 0.0
    if p == math.inf:
        return float(np.max(values))
    return float(np.sum(weights * values ** p) ** (1.0 / p))


def _field_norm(u, center, r, p, positive_part=False):
    pts, w, cid, bary = u.grid.ball_quadrature(center, r)
    vals = u.at_cells(cid, bary)
    if positive_part:
        vals = np.maximum(vals, 0.0)
    return _function_norm(vals, w, p)


def data_norms(problem, center, r):
    """``(||rho_*(x, F)||_{L^q(B_r)}, ||f||_{L^{q/gamma'}(B_r)})``."""
    g = problem.grid
    pts, w, _, _ = g.ball_quadrature(center, r)
    q = problem.q
    Fm, fm = problem.F_map(), problem.f_map()
    nF = nf = 0.0
    if Fm is not None and len(pts):
        Fv = np.broadcast_to(np.asarray(Fm(pts), dtype=float), pts.shape)
        nF = _function_norm(problem.norm.dual_model().eval(pts, Fv), w, q)
    if fm is not None and len(pts):
        fv = np.broadcast_to(np.asarray(fm(pts), dtype=float), (len(pts),))
        nf = _function_norm(fv, w, q / problem.gamma_conjugate)
    return nF, nf


def data_term(problem, center, r_ball, R):
    """``R^delta ||rho_*(F)||^{1/(gamma-1)} + R^{gamma' delta} ||f||^{1/(gamma-1)}``
    with norms over ``B_{r_ball}``."""
    nF, nf = data_norms(problem, center, r_ball)
    e = 1.0 / (problem.gamma - 1.0)
    delta = problem.delta
    return R ** delta * nF ** e + R ** (problem.gamma_conjugate * delta) * nf ** e


def caccioppoli_ratio(problem, u, center, R):
    """``||rho(x, Du)||_{L^gamma(B_R)}`` over
    ``R^-1 ||u||_{L^gamma(B_2R)} + ||rho_*(x,F)||_{L^gamma'(B_2R)}^{1/(gamma-1)}
    + R^{1/(gamma-1)} ||f||_{L^gamma'(B_2R)}^{1/(gamma-1)}``.
    """
    if not 0 < R <= 10:
        raise DomainError("Caccioppoli radius must satisfy 0 < R <= 10")
    center = tuple(float(c) for c in center)
    _require_ball(u, center, 2 * R, "caccioppoli")
    gam = problem.gamma
    gp = problem.gamma_conjugate
    g = u.grid
    pts, w, cid, _ = g.ball_quadrature(center, R)
    Du = u.gradients()[cid]
    lhs = _function_norm(problem.norm.at(pts).eval(Du), w, gam)

    pts2, w2, _, _ = g.ball_quadrature(center, 2 * R)
    e = 1.0 / (gam - 1.0)
    rhs = _field_norm(u, center, 2 * R, gam) / R
    Fm, fm = problem.F_map(), problem.f_map()
    if Fm is not None:
        Fv = np.broadcast_to(np.asarray(Fm(pts2), dtype=float), pts2.shape)
        rhs += _function_norm(problem.norm.dual_model().eval(pts2, Fv), w2, gp) ** e
    if fm is not None:
        fv = np.broadcast_to(np.asarray(fm(pts2), dtype=float), (len(pts2),))
        rhs += R ** e * _function_norm(fv, w2, gp) ** e
    return CheckRecord("caccioppoli", lhs, rhs, _ratio(lhs, rhs), {"R": R}, center)


def sup_bound_ratio(problem, u, center, r, R, p):
    """``sup_{B_r} u+`` over
    ``(R-r)^{-n/p} ||u+||_{L^p(B_R)} + data terms on B_R``."""
    if not 0 < r < R < 1:
        raise DomainError("sup bound needs 0 < r < R < 1")
    if not p > 0:
        raise DomainError("p must be positive")
    center = tuple(float(c) for c in center)
    _require_ball(u, center, R, "sup_bound")
    n = problem.dim
    lhs = max(ball_stats(u, center, r, math.inf), 0.0)
    rhs = (R - r) ** (-n / p) * _field_norm(u, center, R, p, positive_part=True)
    rhs += data_term(problem, center, R, R)
    return CheckRecord("sup_bound", lhs, rhs, _ratio(lhs, rhs),
                       {"r": r, "R": R, "p": p}, center)


def weak_harnack_ratio(problem, u, center, R, theta, tau, p):
    """``inf_{B_theta R} u+ + data terms on B_R`` over
    ``R^{-n/p} ||u+||_{L^p(B_tau R)}``; bounded below by a positive constant
    for nonnegative supersolutions.  A vanishing denominator gives ``inf``.
    """
    if not 0 < theta < tau < 1:
        raise DomainError("need 0 < theta < tau < 1")
    lim = weak_harnack_p_limit(problem.dim, problem.gamma)
    if not 0 < p < lim:
        raise DomainError(f"weak-Harnack p must lie in (0, {lim})")
    center = tuple(float(c) for c in center)
    _require_ball(u, center, 2 * R, "weak_harnack")
    n = problem.dim
    lhs = max(ball_stats(u, center, theta * R, -math.inf), 0.0)
    lhs += data_term(problem, center, R, R)
    rhs = R ** (-n / p) * _field_norm(u, center, tau * R, p, positive_part=True)
    flags = [] if rhs > 0 else ["vanishing_denominator"]
    ratio = lhs / rhs if rhs > 0 else math.inf
    return CheckRecord("weak_harnack", lhs, rhs, ratio,
                       {"R": R, "theta": theta, "tau": tau, "p": p}, center, flags=flags)


def harnack_ratio(problem, u, center, R):
    """``sup_{B_R} u`` over ``inf_{B_2R} u + data terms on B_3R``.

    When both sides vanish the ratio is reported as 1 and flagged.
    """
    center = tuple(float(c) for c in center)
    _require_ball(u, center, 3 * R, "harnack")
    lhs = ball_stats(u, center, R, math.inf)
    rhs = ball_stats(u, center, 2 * R, -math.inf) + data_term(problem, center, 3 * R, R)
    flags = []
    if rhs == 0 and lhs == 0:
        flags.append("zero_over_zero")
        ratio = 1.0
    else:
        ratio = _ratio(lhs, rhs)
    return CheckRecord("harnack", lhs, rhs, ratio, {"R": R}, center, flags=flags)


def oscillation_profile(u, center, R0, levels):
    """``[(R0 2^-k, osc_{B_{R0 2^-k}} u) for k < levels]``.

    Sup and inf of the interpolant are exact in 2D, so the sequence is
    monotone there; in 3D the running minimum is taken, which is what set
    inclusion guarantees for the exact oscillation.
    """
    if levels < 3:
        raise ConfigurationError("need at least 3 levels")
    center = tuple(float(c) for c in center)
    radii = [R0 * 2.0 ** -k for k in range(levels)]
    osc = np.array([oscillation(u, center, r) for r in radii])
    osc = np.minimum.accumulate(np.maximum(osc, 0.0))
    return [(float(r), float(o)) for r, o in zip(radii, osc)]


class DecayFit(NamedTuple):
    alpha: float
    residual: float
    points: int


def default_tail_floor(u, tolerance=1e-8):
    """``10 * tolerance * sup |u|``: below this the data term dominates."""
    return 10.0 * tolerance * float(np.max(np.abs(u.values)))


def fit_decay(profile, tail_floor=0.0):
    """Least-squares slope of ``log osc`` against ``log radius``.

    Points with ``osc <= tail_floor`` are dropped; at least three must
    remain.  Returns the slope with the RMS residual of the fit.
    """
    pts = [(r, o) for r, o in profile if o > tail_floor and r > 0]
    if len(pts) < 3:
        raise InsufficientDataError(
            f"only {len(pts)} profile points above the tail floor {tail_floor}")
    lr = np.log([r for r, _ in pts])
    lo = np.log([o for _, o in pts])
    coef = np.polyfit(lr, lo, 1)
    res = lo - np.polyval(coef, lr)
    return DecayFit(float(coef[0]), float(np.sqrt(np.mean(res ** 2))), len(pts))


class MoserStep(NamedTuple):
    k: int
    beta: float
    exponent: float
    radius: float


def moser_schedule(n, gamma, k_max, r=0.5, R=1.0):
    """Exponents of the Moser iteration for local boundedness.

    ``beta_0 = 0`` and ``beta_k = gamma (chi^(k-1) - 1)`` for ``k >= 1``
    with ``chi = n/(n-gamma)``; the integrability exponent at step ``k`` is
    ``beta_k + gamma`` on the ball of radius ``r + (R-r)/2^(k+1)``.
    """
    gamma = float(gamma)
    if not 1 < gamma < n:
        raise ConfigurationError("the Moser schedule needs 1 < gamma < n")
    if not 0 < r < R:
        raise ConfigurationError("need 0 < r < R")
    chi = n / (n - gamma)
    rows = []
    for k in range(int(k_max) + 1):
        beta = 0.0 if k == 0 else gamma * (chi ** (k - 1) - 1.0)
        rows.append(MoserStep(k, beta, beta + gamma, r + (R - r) / 2.0 ** (k + 1)))
    return rows


def moser_geometric_sum(n, gamma, tol=1e-17):
    """``sum_{i>=0} chi^-i`` summed term by term (equals ``n/gamma``)."""
    chi = n / (n - float(gamma))
    total, term = 0.0, 1.0
    while term > tol * total or total == 0.0:
        total += term
        term /= chi
    return total


# --------------------------------------------------------------------------
# sweeps


def _positive_trig(rng, n, terms=3, amplitude=1.0):
    a = rng.uniform(-1.0, 1.0, terms)
    w = rng.uniform(-3.0, 3.0, (terms, n))
    ph = rng.uniform(0.0, 2.0 * np.pi, terms)
    offset = 1.0 + np.sum(np.abs(a))

    def g(x):
        x = np.asarray(x, dtype=float)
        return amplitude * (offset + np.sum(a * np.sin(x @ w.T + ph), axis=-1))

    return g


def _positive_poly(rng, n, degree=3, amplitude=1.0, box=None):
    exps = [e for e in np.ndindex(*(degree + 1,) * n) if 0 < sum(e) <= degree]
    c = rng.uniform(-1.0, 1.0, len(exps))
    ext = np.max(np.abs(box)) if box is not None else 1.0
    offset = 1.0 + float(np.sum(np.abs(c) * np.array([ext ** sum(e) for e in exps])))
    E = np.array(exps, dtype=float)

    def g(x):
        x = np.asarray(x, dtype=float)
        mon = np.prod(x[..., None, :] ** E, axis=-1)
        return amplitude * (offset + mon @ c)

    return g


def _smooth_F(rng, n, scale):
    a = rng.uniform(-1.0, 1.0, (n, n))
    b = rng.uniform(-1.0, 1.0, n)

    def F(x):
        return scale * np.sin(np.asarray(x, dtype=float) @ a.T + b)

    return F


def _singular_F(rng, n, scale, q, x0):
    # |x - x0|^{-s} with s q < n keeps F in L^q while unbounded at x0
    s = 0.5 * n / q
    d = rng.standard_normal(n)
    d /= np.linalg.norm(d)

    def F(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - x0, axis=-1)
        return scale * (np.maximum(r, 1e-300) ** -s)[..., None] * d

    return F


def _smooth_f(rng, n, scale):
    w = rng.uniform(-2.0, 2.0, n)
    ph = rng.uniform(0.0, 2.0 * np.pi)

    def f(x):
        return scale * np.cos(np.asarray(x, dtype=float) @ w + ph)

    return f


@dataclass(frozen=True)
class SweepSpec:
    """Instance generator and check settings for :func:`sweep`.

    ``boundary_family`` is ``"trig"``, ``"poly"`` (random positive data) or
    ``"constant"``; ``F_family`` is ``"zero"``, ``"smooth"`` or
    ``"singular"``; ``f_family`` is ``"zero"`` or ``"smooth"``.
    ``amplitude`` multiplies the boundary data and ``data_scale`` the
    sources.  Radii lists configure the checks; empty lists disable them.
    """

    norm: str = "euclidean(1)"
    gamma: float = 2.0
    q: float = math.inf
    dim: int = 2
    box: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    boundary_family: str = "trig"
    F_family: str = "zero"
    f_family: str = "zero"
    amplitude: float = 1.0
    data_scale: float = 0.1
    seeds: tuple = (0,)
    resolutions: tuple = (32,)
    centers: tuple = ((0.0, 0.0),)
    harnack_R: tuple = (0.25,)
    caccioppoli_R: tuple = (0.25,)
    sup_radii: tuple = ((0.1, 0.2), (0.1, 0.4), (0.2, 0.4))
    sup_p: float = None
    weak_harnack: tuple = ((0.4, 0.4, 0.8),)     # (R, theta, tau)
    weak_harnack_p: float = None
    oscillation: tuple = ((0.4, 4),)             # (R0, levels)
    drift_tolerance: float = 0.10
    solver_tolerance: float = 1e-8
    max_iterations: int = 50_000
    threads: int = 1

    def __post_init__(self):
        if self.boundary_family not in ("trig", "poly", "constant"):
            raise ConfigurationError(f"unknown boundary family {self.boundary_family!r}")
        if self.F_family not in ("zero", "smooth", "singular"):
            raise ConfigurationError(f"unknown F family {self.F_family!r}")
        if self.f_family not in ("zero", "smooth"):
            raise ConfigurationError(f"unknown f family {self.f_family!r}")
        if self.F_family == "singular" and math.isinf(self.q):
            raise ConfigurationError("singular F needs a finite q")
        exponents(self.dim, self.gamma, self.q)
        if not exponents(self.dim, self.gamma, self.q)[1] > 0:
            raise ConfigurationError("q must exceed n/(gamma-1)")

    @property
    def sup_exponent(self):
        return self.sup_p if self.sup_p is not None else self.gamma

    @property
    def weak_harnack_exponent(self):
        if self.weak_harnack_p is not None:
            return self.weak_harnack_p
        lim = weak_harnack_p_limit(self.dim, self.gamma)
        return 0.5 * lim if math.isfinite(lim) else 1.0

    def problem(self, seed, resolution):
        rng = np.random.default_rng(seed)
        n = self.dim
        box = np.asarray(self.box, dtype=float)
        if self.boundary_family == "trig":
            bd = _positive_trig(rng, n, amplitude=self.amplitude)
        elif self.boundary_family == "poly":
            bd = _positive_poly(rng, n, amplitude=self.amplitude, box=box)
        else:
            bd = self.amplitude
        F = f = None
        if self.F_family == "smooth":
            F = _smooth_F(rng, n, self.data_scale)
        elif self.F_family == "singular":
            # off-centre and off-node so no sample sits on the singularity
            x0 = box.mean(axis=1) + 0.1 * np.sqrt(2.0) * (box[:, 1] - box[:, 0]) / 4.0 \
                + 1e-3 * np.pi
            F = _singular_F(rng, n, self.data_scale, self.q, x0)
        if self.f_family == "smooth":
            f = _smooth_f(rng, n, self.data_scale)
        return Problem.on_box(box, resolution, self.gamma, parse_norm(self.norm, n),
                              boundary=bd, F=F, f=f, q=self.q)

    def to_dict(self):
        d = asdict(self)
        d.pop("threads")          # execution detail, not part of the result
        d["q"] = _json_float(self.q)
        return _listify(d)


def _listify(v):
    if isinstance(v, dict):
        return {k: _listify(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_listify(x) for x in v]
    return v


@dataclass
class VerificationReport:
    spec: dict
    records: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)
    fitted: dict = field(default_factory=dict)
    alarms: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    instances: list = field(default_factory=list)

    @property
    def alarm(self):
        return bool(self.alarms)

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "spec": self.spec,
            "instances": self.instances,
            "records": [r.to_dict() for r in self.records],
            "summaries": self.summaries,
            "fitted": self.fitted,
            "alarms": self.alarms,
            "failed": self.failed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def summary(self, check, resolution):
        return self.summaries[check][str(resolution)]


def _instance_checks(spec, problem, u, instance_id):
    recs = []
    for c in spec.centers:
        for R in spec.harnack_R:
            recs.append(harnack_ratio(problem, u, c, R))
        for R in spec.caccioppoli_R:
            recs.append(caccioppoli_ratio(problem, u, c, R))
        for r, R in spec.sup_radii:
            recs.append(sup_bound_ratio(problem, u, c, r, R, spec.sup_exponent))
        for R, th, ta in spec.weak_harnack:
            recs.append(weak_harnack_ratio(problem, u, c, R, th, ta, spec.weak_harnack_exponent))
    for rec in recs:
        rec.instance_id = instance_id
    return recs


def _run_instance(spec, seed, resolution):
    iid = f"seed={seed}/N={resolution}"
    info = {"instance_id": iid, "seed": int(seed), "resolution": int(resolution)}
    try:
        problem = spec.problem(seed, resolution)
        u, rep = solve(problem, SolveOptions(tolerance=spec.solver_tolerance,
                                             max_iterations=spec.max_iterations))
    except (ConvergenceError, ComputationError, DomainError, ConfigurationError) as exc:
        info["error"] = f"{type(exc).__name__}: {exc}"
        return info, [], []
    cls = classify(problem, u, rep.target_residual)
    info.update(iterations=rep.iterations, final_residual=float(rep.final_residual),
                classification=cls.value)
    if cls is not Classification.SOLUTION:
        info["error"] = f"classified as {cls.value}"
        return info, [], []
    try:
        recs = _instance_checks(spec, problem, u, iid)
        fits = []
        for c in spec.centers:
            for R0, levels in spec.oscillation:
                prof = oscillation_profile(u, c, R0, levels)
                fit = fit_decay(prof, default_tail_floor(u, spec.solver_tolerance))
                fits.append({"center": [float(v) for v in c], "R0": float(R0),
                             "levels": int(levels), "alpha": fit.alpha,
                             "residual": fit.residual,
                             "profile": [[r, o] for r, o in prof]})
    except (DomainError, InsufficientDataError) as exc:
        info["error"] = f"{type(exc).__name__}: {exc}"
        return info, [], []
    info["oscillation"] = fits
    return info, recs, fits


def _drift_alarm(values, tol):
    """Monotone change across refinements exceeding ``tol`` in total."""
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if len(vals) < 2 or len(vals) != len(values):
        return len(vals) != len(values)
    diffs = np.diff(vals)
    monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
    base = max(abs(vals[0]), 1e-300)
    return monotone and abs(vals[-1] - vals[0]) / base > tol


def sweep(spec, threads=None):
    """Solve every (seed, resolution) instance, evaluate every enabled check
    and aggregate.

    Failed solves or instances that do not classify as solutions are
    recorded in ``report.failed``.  For each check the extreme ratio
    (maximum, or minimum for the weak Harnack bound) is tracked per
    resolution and an alarm is raised when it drifts monotonically by more
    than ``spec.drift_tolerance`` under refinement.
    """
    threads = spec.threads if threads is None else threads
    jobs = [(s, N) for s in spec.seeds for N in spec.resolutions]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda j: _run_instance(spec, *j), jobs))
    else:
        results = [_run_instance(spec, *j) for j in jobs]

    report = VerificationReport(spec=spec.to_dict())
    alpha_by_res = {}
    for (seed, N), (info, recs, fits) in zip(jobs, results):
        report.instances.append(info)
        if "error" in info:
            report.failed.append({"instance_id": info["instance_id"], "error": info["error"]})
            continue
        report.records.extend(recs)
        alpha_by_res.setdefault(N, []).extend(f["alpha"] for f in fits)

    checks = sorted({r.check for r in report.records})
    for check in checks:
        per_res = {}
        extremes = []
        for N in spec.resolutions:
            rs = [r for r in report.records
                  if r.check == check and r.instance_id.endswith(f"/N={N}")]
            if not rs:
                extremes.append(None)
                continue
            ratios = np.array([r.ratio for r in rs])
            imax, imin = int(np.argmax(ratios)), int(np.argmin(ratios))
            per_res[str(N)] = {
                "max_ratio": _json_float(ratios[imax]),
                "max_witness": rs[imax].instance_id,
                "min_ratio": _json_float(ratios[imin]),
                "min_witness": rs[imin].instance_id,
                "median_ratio": _json_float(np.median(ratios)),
                "instance_count": len({r.instance_id for r in rs}),
                "record_count": len(rs),
            }
            extremes.append(float(ratios[imin] if check == "weak_harnack" else ratios[imax]))
        report.summaries[check] = per_res
        if _drift_alarm(extremes, spec.drift_tolerance):
            report.alarms.append({"check": check, "extremes": [_json_float(v) if v is not None
                                                               else None for v in extremes]})

    fitted = {}
    for N in spec.resolutions:
        al = alpha_by_res.get(N, [])
        if al:
            fitted[str(N)] = {"alpha_oscillation": float(np.median(al)),
                              "alpha_holder": float(np.min(al))}
    report.fitted = fitted
    if len(fitted) >= 2:
        vals = [fitted[str(N)]["alpha_holder"] for N in spec.resolutions if str(N) in fitted]
        if _drift_alarm(vals, 0.15):
            report.alarms.append({"check": "alpha_holder", "extremes": vals})
    return report


def liouville_experiment(norm, gamma, box_sizes, boundary_amplitude=1.0, cells_per_unit=8,
                         pattern=None, options=None):
    """Oscillation over the unit ball for solutions on growing boxes.

    For each ``L`` the problem with zero sources and boundary data
    ``boundary_amplitude * pattern(x / L)`` is solved on ``[-L, L]^n`` with
    ``cells_per_unit`` cells per unit length, and ``osc_{B_1(0)} u`` is
    recorded.  Bounded entire solutions being constant, the oscillation
    should decrease as ``L`` grows.  ``pattern`` defaults to
    ``sin(pi x_1)``.
    """
    if pattern is None:
        def pattern(y):
            return np.sin(np.pi * y[..., 0])
    out = []
    n = norm.dim
    for L in box_sizes:
        L = float(L)
        res = max(2, int(round(2 * L * cells_per_unit)))
        box = [(-L, L)] * n
        problem = Problem.on_box(
            box, res, gamma, norm,
            boundary=lambda x, L=L: boundary_amplitude * pattern(np.asarray(x) / L))
        u, _ = solve(problem, options)
        out.append((L, oscillation(u, np.zeros(n), 1.0)))
    return out
