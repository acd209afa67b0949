import math

import numpy as np
import pytest

from anisoharnack.config import canonical, compile_expression, parse_config
from anisoharnack.errors import ConfigurationError

MINIMAL = """
command = "solve"
[problem]
gamma = 2.0
norm = "euclidean(1)"
box = [[0.0, 1.0], [0.0, 1.0]]
resolution = 32
"""


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.derived["gamma_conjugate"] == 2.0
    assert cfg.command == "solve" and cfg.box == [(0.0, 1.0), (0.0, 1.0)]
    assert cfg.problem().grid.n_cells == 2 * 32 * 32


def test_empty_config_uses_defaults():
    cfg = parse_config("")
    assert cfg["problem"]["resolution"] == 32 and math.isinf(cfg["problem"]["q"])


def test_delta_echo_in_three_dimensions():
    cfg = parse_config("[problem]\ndim = 3\ngamma = 2.0\nq = 6.0\n")
    assert cfg.derived["delta"] == pytest.approx(0.5, abs=1e-14)
    assert cfg.derived["chi"] == pytest.approx(3.0)
    assert cfg.derived["within_theorem_range"] is True
    assert "delta = 0.5" in canonical(cfg)


def test_critical_q_rejected():
    with pytest.raises(ConfigurationError, match=r"problem\.q.*q > n/\(gamma-1\)"):
        parse_config("[problem]\ngamma = 2.0\nq = 2.0\n")


@pytest.mark.parametrize("section,body,key", [
    ("verification", "theta = 0.8\ntau = 0.8", "verification.theta"),
    ("verification", "theta = 0.5\ntau = 1.0", "verification.tau"),
    ("problem", "gamma = 1.0", "problem.gamma"),
    ("problem", "dim = 1", "problem.dim"),
    ("problem", "box = [[0.0, 1.0]]", "problem.box"),
    ("problem", 'norm = "mystery(2)"', "problem.norm"),
    ("problem", 'boundary = "__import__(1)"', "problem.boundary"),
    ("problem", 'F = ["x1"]', "problem.F"),
    ("solver", "tolerance = 0.0", "solver.tolerance"),
    ("solver", 'preconditioner = "amg"', "solver.preconditioner"),
    ("oracle", 'names = ["nope"]', "oracle.names"),
    ("sweep", 'F_family = "singular"', "sweep.F_family"),
    ("verification", "radii = [[0.4, 0.2]]", "verification.radii"),
])
def test_constraint_violations_name_the_key(section, body, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(f"[{section}]\n{body}\n")


def test_unknown_keys_and_sections():
    with pytest.raises(ConfigurationError, match="problem.colour: unknown key"):
        parse_config("[problem]\ncolour = 1\n")
    with pytest.raises(ConfigurationError, match="unknown section"):
        parse_config("[plot]\nx = 1\n")
    with pytest.raises(ConfigurationError, match="unknown key"):
        parse_config("verbose = true\n")


def test_type_errors():
    with pytest.raises(ConfigurationError, match="problem.resolution"):
        parse_config('[problem]\nresolution = "big"\n')
    with pytest.raises(ConfigurationError, match="invalid TOML"):
        parse_config("[problem\n")


def test_schedule_requires_gamma_below_n():
    parse_config('command = "solve"\n[problem]\ngamma = 3.0\n')
    with pytest.raises(ConfigurationError, match="problem.gamma"):
        parse_config('command = "schedule"\n[problem]\ngamma = 3.0\n')


@pytest.mark.parametrize("text", [
    "",
    MINIMAL,
    '[problem]\ndim = 3\ngamma = 1.5\nq = 12.0\nnorm = "ellp(3)"\n'
    'F = ["0.1*x1", "0", "sin(x3)"]\nf = "x1^2"\n',
    '[sweep]\nresolutions = [16, 32]\nseeds = 3\n[verification]\ncenters = [[0.5, 0.5]]\np = 1.5\n',
])
def test_canonical_is_a_fixed_point(text):
    cfg = parse_config(text)
    once = canonical(cfg)
    again = parse_config(once)
    assert again == cfg
    assert canonical(again) == once


def test_overrides_revalidate():
    cfg = parse_config('[sweep]\nresolutions = [16, 32]\n')
    o = cfg.with_overrides(seed=7, resolution=8, command="sweep")
    assert o.seed == 7 and o["sweep"]["resolutions"] == [8] and o.command == "sweep"
    assert o.seeds == list(range(7, 12))
    with pytest.raises(ConfigurationError):
        parse_config('[problem]\ngamma = 3.0\n').with_overrides(command="schedule")


def test_sweep_spec_from_config():
    cfg = parse_config('[problem]\ngamma = 3.0\nnorm = "ellp(4)"\nbox = [[-1.0, 1.0], '
                       '[-1.0, 1.0]]\n[verification]\np = 2.0\n')
    spec = cfg.sweep_spec(resolution=16)
    assert spec.resolutions == (16,) and spec.centers == ((0.0, 0.0),)
    assert spec.sup_exponent == 2.0 and spec.weak_harnack_exponent == 2.0


def test_expression_arithmetic():
    f = compile_expression("x1^2 - 3*x2 + sqrt(abs(x1)) / 2 + max(x1, x2, 0) + pi", 2)
    x = np.array([[4.0, -1.0], [0.0, 2.0]])
    expected = [16 + 3 + 1 + 4 + math.pi, 0 - 6 + 0 + 2 + math.pi]
    np.testing.assert_allclose(f(x), expected)
    c = compile_expression(2.5, 3)
    assert c(np.zeros((4, 3))).shape == (4,)
    assert float(compile_expression("-x3 ** 2", 3)(np.array([0, 0, 2.0]))) == -4.0


@pytest.mark.parametrize("text", [
    "x3", "y", "__import__('os')", "x1.real", "[x1]", "x1 if x2 else 0", "lambda: 1",
    "sin(x=1)", "x1 < x2", "'a'", "True", "x1 // 2", "open('f')", "max(x1)", "(",
])
def test_expression_rejections(text):
    with pytest.raises(ConfigurationError):
        f = compile_expression(text, 2)
        f(np.zeros((1, 2)))
