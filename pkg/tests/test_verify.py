import json
import math

import numpy as np
import pytest

from anisoharnack.errors import ConfigurationError, DomainError, InsufficientDataError
from anisoharnack.norms import NormModel
from anisoharnack.solver import Problem, solve
from anisoharnack.verify import (SweepSpec, VerificationConfig, caccioppoli_ratio, data_term,
                                 exponents, fit_decay, harnack_ratio, liouville_experiment,
                                 moser_geometric_sum, moser_schedule, oscillation_profile,
                                 sup_bound_ratio, sweep, weak_harnack_ratio,
                                 weak_harnack_p_limit)

EUCLID = NormModel.euclidean(2)


def linear_setup(box=((-1.0, 1.0), (-1.0, 1.0)), N=64, norm=EUCLID, gamma=2.0):
    P = Problem.on_box(box, N, gamma, norm, boundary=lambda x: 2 + x[..., 0])
    return P, P.grid.interpolate(lambda x: 2 + x[..., 0])


@pytest.mark.parametrize("n,gamma,q,delta,gp,chi", [
    (3, 2.0, 6.0, 0.5, 2.0, 3.0),
    (2, 1.5, 8.0, 0.5, 3.0, 4.0),
    (4, 2.0, math.inf, 1.0, 2.0, 2.0),
    (2, 3.0, 4.0, 0.75, 1.5, math.inf),
])
def test_exponents(n, gamma, q, delta, gp, chi):
    g, d, c = exponents(n, gamma, q)
    assert g == pytest.approx(gp, abs=1e-14)
    assert d == pytest.approx(delta, abs=1e-14)
    assert c == chi or c == pytest.approx(chi, abs=1e-14)


def test_weak_harnack_exponent_limit():
    assert weak_harnack_p_limit(3, 2.0) == pytest.approx(3.0)
    assert math.isinf(weak_harnack_p_limit(2, 2.0))


def test_verification_config_validation():
    VerificationConfig(n=3, gamma=2.0, q=6.0)
    with pytest.raises(ConfigurationError):
        VerificationConfig(n=3, gamma=2.0, q=3.0)
    with pytest.raises(ConfigurationError):
        VerificationConfig(theta=0.8, tau=0.8)
    with pytest.raises(ConfigurationError):
        VerificationConfig(n=3, gamma=2.0, p=3.0)
    with pytest.raises(ConfigurationError):
        VerificationConfig(radii=((0.3, 0.2),))


def test_harnack_linear_witness():
    P, u = linear_setup()
    rec = harnack_ratio(P, u, (0, 0), 0.25)
    # sup_{B_1/4}(2+x1) / inf_{B_1/2}(2+x1) = 2.25 / 1.5
    assert rec.ratio == pytest.approx(1.5, rel=1e-10)
    assert rec.flags == []


def test_harnack_zero_over_zero():
    P = Problem.on_box([(-1, 1), (-1, 1)], 16, 2.0, EUCLID)
    rec = harnack_ratio(P, P.initial_field(), (0, 0), 0.25)
    assert rec.ratio == 1.0 and rec.flags == ["zero_over_zero"]


def test_weak_harnack_linear_witness():
    P, u = linear_setup(box=((-1.25, 1.25), (-1.25, 1.25)), N=128)
    R, th, ta, p = 0.5, 0.4, 0.8, 1.0
    rec = weak_harnack_ratio(P, u, (0, 0), R, th, ta, p)
    # inf over B_0.2 is 1.8, the L^1 norm over B_0.4 is 2 pi 0.16
    exact = 1.8 / (R ** -2 * 2 * math.pi * 0.16)
    assert rec.ratio == pytest.approx(exact, rel=0.02)
    assert rec.ratio == pytest.approx(exact, rel=1e-3)


def test_weak_harnack_vanishing_denominator():
    P = Problem.on_box([(-1, 1), (-1, 1)], 16, 2.0, EUCLID)
    rec = weak_harnack_ratio(P, P.initial_field(), (0, 0), 0.4, 0.4, 0.8, 1.0)
    assert math.isinf(rec.ratio) and "vanishing_denominator" in rec.flags
    assert rec.to_dict()["ratio"] == "inf"


def test_caccioppoli_linear_closed_form():
    P, u = linear_setup(N=128)
    R = 0.25
    rec = caccioppoli_ratio(P, u, (0, 0), R)
    lhs = math.sqrt(math.pi * R * R)
    r2 = 2 * R
    rhs = math.sqrt(4 * math.pi * r2 ** 2 + math.pi * r2 ** 4 / 4) / R
    assert rec.ratio == pytest.approx(lhs / rhs, rel=1e-2)


def test_caccioppoli_constant_is_zero():
    P = Problem.on_box([(-1, 1), (-1, 1)], 32, 2.0, EUCLID, boundary=3.0)
    u = P.grid.field(np.full(P.grid.n_vertices, 3.0))
    assert caccioppoli_ratio(P, u, (0, 0), 0.25).ratio == 0.0
    zero = P.grid.field(np.zeros(P.grid.n_vertices))
    assert caccioppoli_ratio(P, zero, (0, 0), 0.25).ratio == 0.0


def test_caccioppoli_radius_domain():
    P, u = linear_setup()
    with pytest.raises(DomainError):
        caccioppoli_ratio(P, u, (0, 0), 0.0)
    with pytest.raises(DomainError):
        caccioppoli_ratio(P, u, (0, 0), 0.5)   # B_1 touches the boundary


def test_sup_bound_domain_and_value():
    P, u = linear_setup()
    with pytest.raises(DomainError):
        sup_bound_ratio(P, u, (0, 0), 0.4, 0.2, 2.0)
    rec = sup_bound_ratio(P, u, (0, 0), 0.1, 0.4, 2.0)
    assert 0 < rec.ratio < 1


def test_ratios_invariant_under_norm_scaling():
    """With zero data every check is invariant under rho -> lambda rho."""
    base = NormModel.ell_p(4.0, 2)
    scaled = NormModel.variable_exponent(lambda x: np.full(x.shape[:-1], 4.0), 4.0, 4.0, 2,
                                         A=3.0 * np.eye(2))
    P = Problem.on_box([(-1, 1), (-1, 1)], 16, 2.5, base,
                       boundary=lambda x: 2 + np.sin(2 * x[..., 0]) * x[..., 1])
    u, _ = solve(P)
    Ps = Problem(grid=P.grid, gamma=P.gamma, norm=scaled, boundary=P.boundary)
    us, _ = solve(Ps)
    np.testing.assert_allclose(us.values, u.values, atol=1e-6)
    # evaluating the checks on the same field gives identical ratios
    for fn, args in [(harnack_ratio, (0.25,)), (weak_harnack_ratio, (0.4, 0.4, 0.8, 1.0)),
                     (sup_bound_ratio, (0.1, 0.4, 2.0))]:
        a = fn(P, u, (0, 0), *args).ratio
        b = fn(Ps, u, (0, 0), *args).ratio
        assert b == pytest.approx(a, rel=1e-9)
    a = caccioppoli_ratio(P, u, (0, 0), 0.25).ratio
    b = caccioppoli_ratio(Ps, u, (0, 0), 0.25).ratio
    assert b == pytest.approx(3.0 * a, rel=1e-9)


def test_data_term_radius_powers():
    P = Problem.on_box([(-1, 1), (-1, 1)], 32, 2.0, EUCLID, q=8.0,
                       F=lambda x: np.ones(x.shape))
    Pf = Problem.on_box([(-1, 1), (-1, 1)], 32, 2.0, EUCLID, q=8.0, f=0.5)
    d, gp = P.delta, P.gamma_conjugate
    assert data_term(P, (0, 0), 0.5, 0.25) / data_term(P, (0, 0), 0.5, 0.5) == \
        pytest.approx(0.5 ** d, rel=1e-12)
    assert data_term(Pf, (0, 0), 0.5, 0.25) / data_term(Pf, (0, 0), 0.5, 0.5) == \
        pytest.approx(0.5 ** (gp * d), rel=1e-12)
    # constant |F| = sqrt 2: the L^q norm over the ball is sqrt 2 |B|^{1/q}
    _, w, _, _ = P.grid.ball_quadrature((0, 0), 0.5)
    assert data_term(P, (0, 0), 0.5, 1.0) == pytest.approx(math.sqrt(2) * w.sum() ** (1 / 8))


def test_fit_decay_synthetic_power_law():
    prof = [(0.5 * 2.0 ** -k, 3.0 * (0.5 * 2.0 ** -k) ** 0.7) for k in range(6)]
    fit = fit_decay(prof)
    assert fit.alpha == pytest.approx(0.7, abs=1e-12) and fit.residual < 1e-12


def test_fit_decay_tail_floor_and_insufficient_data():
    prof = [(1.0, 1.0), (0.5, 0.5), (0.25, 1e-12), (0.125, 1e-13)]
    with pytest.raises(InsufficientDataError):
        fit_decay(prof, tail_floor=1e-9)
    with pytest.raises(InsufficientDataError):
        fit_decay(prof[:2])


def test_linear_profile_alpha_one():
    P, u = linear_setup()
    fit = fit_decay(oscillation_profile(u, (0, 0), 0.4, 4))
    assert fit.alpha == pytest.approx(1.0, abs=1e-10)


def test_pseudo_p_profile_alpha():
    P = Problem.on_box([(-1, 1), (-1, 1)], 256, 4.0, NormModel.ell_p(4.0, 2))
    u = P.grid.interpolate(lambda x: np.abs(x[..., 0]) ** (4 / 3) - np.abs(x[..., 1]) ** (4 / 3))
    fit = fit_decay(oscillation_profile(u, (0, 0), 0.5, 4))
    assert fit.alpha == pytest.approx(4 / 3, rel=0.02)


def test_profile_monotone_and_levels():
    P, u = linear_setup()
    with pytest.raises(ConfigurationError):
        oscillation_profile(u, (0, 0), 0.4, 2)
    w = P.grid.interpolate(lambda x: np.sin(5 * x[..., 0] * x[..., 1]))
    osc = [o for _, o in oscillation_profile(w, (0.1, 0.1), 0.5, 6)]
    assert all(b <= a for a, b in zip(osc, osc[1:]))


@pytest.mark.parametrize("n,gamma", [(3, 1.5), (3, 2), (4, 2), (5, 3)])
def test_moser_identities(n, gamma):
    rows = moser_schedule(n, gamma, 8)
    chi = n / (n - gamma)
    for a, b in zip(rows[1:], rows[2:]):
        assert (a.beta + gamma) * chi == pytest.approx(b.beta + gamma, rel=1e-12)
    assert moser_geometric_sum(n, gamma) == pytest.approx(n / gamma, rel=1e-12)
    radii = [r.radius for r in rows]
    assert all(b < a for a, b in zip(radii, radii[1:])) and radii[-1] > 0.5


def test_moser_identity_fails_at_first_step():
    # beta_0 = 0 is not on the geometric sequence; the recursion starts at k = 1
    rows = moser_schedule(4, 2, 2)
    assert (rows[0].beta + 2) * 2 != rows[1].beta + 2


def test_moser_schedule_table():
    rows = moser_schedule(4, 2, 3)
    assert [(r.k, r.beta, r.exponent) for r in rows] == [(0, 0, 2), (1, 0, 2), (2, 2, 4),
                                                         (3, 6, 8)]
    with pytest.raises(ConfigurationError):
        moser_schedule(2, 2, 3)


def test_small_sweep_report():
    spec = SweepSpec(seeds=(0, 1, 2), resolutions=(16, 32))
    rep = sweep(spec)
    assert rep.failed == [] and not rep.alarm
    for check in ("harnack", "caccioppoli", "sup_bound", "weak_harnack"):
        s = rep.summary(check, 16)
        assert s["instance_count"] == 3
        assert math.isfinite(s["max_ratio"])
    assert rep.fitted["32"]["alpha_holder"] > 0
    d = json.loads(rep.to_json())
    assert d["schema"] == 1 and "threads" not in d["spec"]
    # thread count does not change the result
    assert sweep(spec, threads=3).to_json() == rep.to_json()


def test_sweep_records_failures():
    spec = SweepSpec(norm="ellp(4)", gamma=4.0, seeds=(0,), resolutions=(16,),
                     max_iterations=1)
    rep = sweep(spec)
    assert len(rep.failed) == 1 and "ConvergenceError" in rep.failed[0]["error"]
    assert rep.records == []


def test_sweep_with_data_families():
    spec = SweepSpec(seeds=(0, 1), resolutions=(16,), q=8.0, F_family="singular",
                     f_family="smooth", data_scale=0.05)
    rep = sweep(spec)
    assert rep.failed == []
    assert all(math.isfinite(r.ratio) for r in rep.records)
    with pytest.raises(ConfigurationError):
        SweepSpec(F_family="singular")


def test_liouville_trend_euclidean():
    rows = liouville_experiment(EUCLID, 2.0, [1, 2, 4])
    osc = [o for _, o in rows]
    assert osc[0] > osc[1] > osc[2] > 0


def test_cross_check_alpha_against_holder():
    """Oscillation-fitted and Hölder-fitted exponents agree within 25%."""
    rep = sweep(SweepSpec(seeds=(0, 1, 2, 3), resolutions=(32,)))
    f = rep.fitted["32"]
    assert abs(f["alpha_oscillation"] - f["alpha_holder"]) <= 0.25 * f["alpha_oscillation"]
