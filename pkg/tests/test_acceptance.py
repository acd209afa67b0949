"""Acceptance suite: one test per numbered criterion.

Each test carries an ``acceptance`` marker; ``conftest.py`` prints a
pass/fail line per criterion at the end of the run.  Runtime budgets are
asserted alongside the numerical tolerances.
"""
import math
import time

import numpy as np
import pytest

from anisoharnack.cli import main
from anisoharnack.grid import build_grid
from anisoharnack.norms import NormModel, eval_norm, flux, grad, hessian_ellp
from anisoharnack.oracles import harmonic_oracle, linear_oracle, pseudo_p_oracle
from anisoharnack.solver import Classification, Problem, classify, energy, energy_gradient, solve
from anisoharnack.verify import (SweepSpec, caccioppoli_ratio, fit_decay, harnack_ratio,
                                 liouville_experiment, moser_geometric_sum, moser_schedule,
                                 oscillation_profile, sweep, weak_harnack_ratio)

from .helpers import all_families, fd_hessian

acceptance = pytest.mark.acceptance

SWEEP_FAMILIES = {
    "gamma=2 euclidean": ("euclidean(1)", 2.0),
    "gamma=2 ellp(4)": ("ellp(4)", 2.0),
    "gamma=3 rotated ellp(4, pi/6)": (f"rotated_ellp(4,{math.pi / 6!r})", 3.0),
}
SWEEP_RESOLUTIONS = (64, 128)


def rel_change(a, b):
    return abs(b - a) / abs(a)


@pytest.fixture(scope="module")
def family_sweeps():
    """50 positive solved instances per family at resolutions 64 and 128."""
    t0 = time.perf_counter()
    out = {}
    for name, (norm, gamma) in SWEEP_FAMILIES.items():
        spec = SweepSpec(norm=norm, gamma=gamma, seeds=tuple(range(50)),
                         resolutions=SWEEP_RESOLUTIONS, threads=4)
        out[name] = sweep(spec)
    out["_elapsed"] = time.perf_counter() - t0
    return out


def sweep_reports(family_sweeps):
    return [(k, v) for k, v in family_sweeps.items() if not k.startswith("_")]


def linear_witness(box=((-1.0, 1.0), (-1.0, 1.0)), N=64):
    P = Problem.on_box(box, N, 2.0, NormModel.euclidean(2), boundary=lambda x: 2 + x[..., 0])
    return P, P.grid.interpolate(lambda x: 2 + x[..., 0])


# --------------------------------------------------------------------------


@acceptance(1, "norm calculus: Fenchel, rho_*(D rho) = 1, homogeneity")
def test_criterion_01_norm_calculus():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    for dim in (2, 3):
        for name, norm in all_families(dim).items():
            dual = norm.dual_model()
            x = rng.uniform(-0.5, 0.5, (1000, dim))
            xi = rng.standard_normal((1000, dim))
            zeta = rng.standard_normal((1000, dim))
            bound = norm.eval(x, xi) * dual.eval(x, zeta)
            violation = np.sum(xi * zeta, axis=-1) - bound
            assert violation.max() <= 1e-9, (dim, name, violation.max())

            xs, v = x[:200], xi[:200]
            d = dual.eval(xs, norm.grad(xs, v))
            assert np.max(np.abs(d - 1.0)) <= 1e-7, (dim, name)

            for lam in (0.5, 2.0, 10.0):
                for gamma in (1.5, 2.0, 3.0):
                    for k in range(20):
                        a, b = xs[k], v[k]
                        assert eval_norm(norm, a, lam * b) == pytest.approx(
                            lam * eval_norm(norm, a, b), rel=1e-10)
                        np.testing.assert_allclose(grad(norm, a, lam * b), grad(norm, a, b),
                                                   rtol=1e-10, atol=1e-12)
                        ref = lam ** (gamma - 1) * flux(norm, gamma, a, b)
                        np.testing.assert_allclose(flux(norm, gamma, a, lam * b), ref,
                                                   rtol=1e-10, atol=1e-12 * np.abs(ref).max())
    assert time.perf_counter() - t0 < 5.0


@acceptance(2, "l^p Hessian: finite differences and zero at basis vectors")
def test_criterion_02_hessian():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    for n in (2, 3):
        for _ in range(50):
            x = rng.uniform(-2, 2, n)
            H = hessian_ellp(4.0, x)
            ref = fd_hessian(lambda v: float(np.sum(v ** 4) ** 0.5), x)
            np.testing.assert_allclose(H, H.T, atol=0)
            np.testing.assert_allclose(H, ref, atol=1e-5)
    assert time.perf_counter() - t0 < 1.0
    # Literal second half of the criterion.  The second derivative of
    # ||.||_4^2 along e_k at e_k is 2 (the function is t^2 on that axis), so
    # the full Hessian at a basis vector is 2 e_k e_k^T, not zero.  Only the
    # block orthogonal to e_k vanishes; that part is covered in test_norms.
    # A formula that returned zero here could not also match the finite
    # differences above, so this check is expected to fail.
    for n in (2, 3):
        for k in range(n):
            H = hessian_ellp(4.0, np.eye(n)[k])
            assert np.all(H == 0.0), (
                f"Hessian at e_{k + 1} (n={n}) is {H.tolist()}, not the zero matrix; "
                "the nonzero entry H_kk = 2 is the curvature of t -> t^2 along the axis")


@acceptance(3, "energy gradient matches finite differences (16x16, four families)")
def test_criterion_03_gradient_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    worst = 0.0
    for gamma in (1.5, 2.0, 3.0):
        for name, norm in all_families(2).items():
            P = Problem.on_box([(-1, 1), (-1, 1)], 16, gamma, norm,
                               boundary=lambda x: np.sin(2 * x[..., 0]) + x[..., 1] ** 2,
                               F=lambda x: 0.2 * np.stack([x[..., 1], -x[..., 0]], -1),
                               f=lambda x: 0.1 * np.cos(x[..., 0]))
            u = P.grid.field(rng.uniform(-1, 1, P.grid.n_vertices))
            u.values[P.grid.boundary_mask] = P.boundary_values()
            g = energy_gradient(P, u)
            scale = np.max(np.abs(g))
            h = 1e-6
            for v in np.nonzero(P.grid.free)[0]:
                old = u.values[v]
                u.values[v] = old + h
                ep = energy(P, u)
                u.values[v] = old - h
                em = energy(P, u)
                u.values[v] = old
                fd = (ep - em) / (2 * h)
                err = abs(g[v] - fd) / max(abs(fd), 1e-3 * scale)
                worst = max(worst, err)
                assert err <= 1e-5, (gamma, name, v, g[v], fd)
    print(f"worst relative gradient error {worst:.2e}")
    assert time.perf_counter() - t0 < 30.0


@acceptance(4, "oracle regressions: linear, harmonic order, pseudo-4-Laplacian")
def test_criterion_04_oracles():
    t0 = time.perf_counter()
    for N in (1, 3, 8, 16, 31, 64):
        r = linear_oracle(resolution=N)
        assert r.passed and r.metrics["max_residual"] <= 1e-10, (N, r.metrics)
    h = harmonic_oracle(resolutions=(16, 32, 64))
    assert h.passed and min(h.metrics["orders"]) >= 1.5, h.metrics
    p = pseudo_p_oracle(p=4.0, resolutions=(16, 32, 64))
    e = p.metrics["interior_errors"]
    assert e[0] > e[1] > e[2], e
    assert time.perf_counter() - t0 < 300.0


@acceptance(5, "classification signs of x1^2 and -x1^2")
def test_criterion_05_classification():
    t0 = time.perf_counter()
    P = Problem.on_box([(-1, 1), (-1, 1)], 32, 2.0, NormModel.euclidean(2))
    u = P.grid.interpolate(lambda x: x[..., 0] ** 2)
    assert classify(P, u, 1e-8) is Classification.SUBSOLUTION
    assert classify(P, P.grid.field(-u.values), 1e-8) is Classification.SUPERSOLUTION
    assert time.perf_counter() - t0 < 5.0


@acceptance(6, "maximum principle on 20 random solved instances")
def test_criterion_06_maximum_principle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    families = list(all_families(2).values())
    for i in range(20):
        norm = families[i % 4]
        gamma = float(rng.uniform(1.5, 3.5))
        a = rng.standard_normal(4)
        w = rng.uniform(-3, 3, (2, 2))

        def bd(x, a=a, w=w):
            return (a[0] + a[1] * np.sin(x @ w[0]) + a[2] * np.cos(x @ w[1])
                    + a[3] * x[..., 0] * x[..., 1])

        P = Problem.on_box([(-1, 1), (-1, 1)], 24, gamma, norm, boundary=bd)
        u, rep = solve(P)
        b = P.boundary_values()
        assert u.values.min() >= b.min() - 1e-9, (i, u.values.min(), b.min())
        assert u.values.max() <= b.max() + 1e-9, (i, u.values.max(), b.max())
    assert time.perf_counter() - t0 < 120.0


@acceptance(7, "Harnack ratio bounded and mesh-stable; linear witness 1.5")
def test_criterion_07_harnack(family_sweeps):
    for name, rep in sweep_reports(family_sweeps):
        assert rep.failed == [], (name, rep.failed[:3])
        m64 = rep.summary("harnack", 64)["max_ratio"]
        m128 = rep.summary("harnack", 128)["max_ratio"]
        assert rep.summary("harnack", 64)["instance_count"] == 50
        print(f"{name}: max harnack ratio {m64:.6f} -> {m128:.6f}")
        assert math.isfinite(m64) and math.isfinite(m128)
        assert rel_change(m64, m128) < 0.10
    P, u = linear_witness()
    assert harnack_ratio(P, u, (0, 0), 0.25).ratio == pytest.approx(1.5, rel=0.02)
    assert family_sweeps["_elapsed"] < 20 * 60


@acceptance(8, "weak Harnack ratio positive and mesh-stable; linear witness")
def test_criterion_08_weak_harnack(family_sweeps):
    for name, rep in sweep_reports(family_sweeps):
        m64 = rep.summary("weak_harnack", 64)["min_ratio"]
        m128 = rep.summary("weak_harnack", 128)["min_ratio"]
        print(f"{name}: min weak Harnack ratio {m64:.6f} -> {m128:.6f}")
        assert m64 > 0 and m128 > 0
        assert rel_change(m64, m128) < 0.10
    P, u = linear_witness(box=((-1.25, 1.25), (-1.25, 1.25)), N=128)
    R, theta, tau, p = 0.5, 0.4, 0.8, 1.0
    exact = (2 - theta * R) / (R ** -2 * 2 * math.pi * (tau * R) ** 2)
    rec = weak_harnack_ratio(P, u, (0, 0), R, theta, tau, p)
    assert rec.ratio == pytest.approx(exact, rel=0.02)


@acceptance(9, "Caccioppoli ratio mesh-stable; zero for constants")
def test_criterion_09_caccioppoli(family_sweeps):
    t0 = time.perf_counter()
    for name, rep in sweep_reports(family_sweeps):
        m64 = rep.summary("caccioppoli", 64)["max_ratio"]
        m128 = rep.summary("caccioppoli", 128)["max_ratio"]
        print(f"{name}: max Caccioppoli ratio {m64:.6f} -> {m128:.6f}")
        assert rel_change(m64, m128) < 0.10
    for norm in all_families(2).values():
        P = Problem.on_box([(-1, 1), (-1, 1)], 32, 2.0, norm, boundary=1.7)
        u, _ = solve(P)
        assert caccioppoli_ratio(P, u, (0, 0), 0.25).ratio == 0.0
    assert time.perf_counter() - t0 < 300.0


@acceptance(10, "oscillation decay exponent positive and mesh-stable")
def test_criterion_10_oscillation_decay(family_sweeps):
    t0 = time.perf_counter()
    for name, rep in sweep_reports(family_sweeps):
        for key in ("alpha_oscillation", "alpha_holder"):
            a64, a128 = rep.fitted["64"][key], rep.fitted["128"][key]
            print(f"{name}: {key} {a64:.4f} -> {a128:.4f}")
            assert a64 > 0 and a128 > 0
            assert rel_change(a64, a128) < 0.15
    # linear solution: the oscillation over B_r is exactly proportional to r
    P = Problem.on_box([(-1, 1), (-1, 1)], 64, 3.0, NormModel.ell_p(4.0, 2),
                       boundary=lambda x: 0.3 * x[..., 0] - x[..., 1])
    u, _ = solve(P)
    assert fit_decay(oscillation_profile(u, (0, 0), 0.4, 4)).alpha == pytest.approx(1.0,
                                                                                    abs=1e-6)
    prof = [(0.4 * 2.0 ** -k, 2.5 * (0.4 * 2.0 ** -k) ** 0.7) for k in range(5)]
    assert fit_decay(prof).alpha == pytest.approx(0.7, abs=1e-12)
    assert time.perf_counter() - t0 < 300.0


@acceptance(11, "Moser schedule identities")
def test_criterion_11_moser():
    t0 = time.perf_counter()
    for n, gamma in ((3, 1.5), (3, 2.0), (4, 2.0), (5, 3.0)):
        chi = n / (n - gamma)
        rows = moser_schedule(n, gamma, 10)
        # the recursion links consecutive steps from k = 1 on (beta_0 = 0)
        for a, b in zip(rows[1:], rows[2:]):
            assert abs((a.beta + gamma) * chi - (b.beta + gamma)) <= 1e-12 * (b.beta + gamma)
        assert abs(moser_geometric_sum(n, gamma) - n / gamma) <= 1e-12 * n / gamma
    assert time.perf_counter() - t0 < 1.0


@acceptance(12, "Liouville trend: unit-ball oscillation falls as the box grows")
def test_criterion_12_liouville():
    t0 = time.perf_counter()
    for norm, gamma in ((NormModel.euclidean(2), 2.0), (NormModel.ell_p(4.0, 2), 3.0)):
        rows = liouville_experiment(norm, gamma, [1, 2, 4, 8])
        osc = [o for _, o in rows]
        print(f"{norm!r} gamma={gamma}: " + ", ".join(f"L={L:g}: {o:.4g}" for L, o in rows))
        assert all(b < a for a, b in zip(osc, osc[1:])), osc
    assert time.perf_counter() - t0 < 600.0


@acceptance(13, "determinism: byte-identical JSON for identical config and seed")
def test_criterion_13_determinism(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('command = "sweep"\nseed = 3\n[problem]\nbox = [[-1.0, 1.0], [-1.0, 1.0]]\n'
                   'resolution = 24\nnorm = "ellp(4)"\ngamma = 3.0\n[sweep]\nseeds = 4\n'
                   'resolutions = [16, 24]\n')
    blobs = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{i}"
        assert main(["--config", str(cfg), "--out", str(out), "--threads", threads]) == 0
        blobs.append(((out / "report.json").read_bytes(), (out / "profile.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    assert blobs[0] == blobs[2]
    for i in range(2):
        out = tmp_path / f"verify{i}"
        assert main(["verify", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
        blobs.append((out / "report.json").read_bytes())
    assert blobs[3] == blobs[4]


def test_grid_used_by_criteria_is_kuhn():
    # sanity check on the shared mesh assumptions of the witnesses above
    g = build_grid([(-1.25, 1.25), (-1.25, 1.25)], 128)
    assert g.n_cells == 2 * 128 * 128
