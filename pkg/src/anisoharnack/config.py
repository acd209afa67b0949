"""Run configuration: TOML parsing, validation and a canonical printer.

A configuration is a TOML document with a top-level ``command`` and
``seed`` plus the sections ``[problem]``, ``[solver]``, ``[verification]``,
``[sweep]``, ``[oracle]``, ``[schedule]`` and ``[output]``.  Every key is
checked against a schema; unknown keys and constraint violations raise
:class:`ConfigurationError` naming the offending key.

``canonical(config)`` prints every key (defaults filled in) in schema
order, so ``parse_config(canonical(cfg)) == cfg`` and printing is a fixed
point.
"""
import ast
import json
import math
import operator
from dataclasses import dataclass, field

import numpy as np
import tomli

from .errors import ConfigurationError
from .norms import conjugate_exponent, parse_norm
from .oracles import ORACLES
from .solver import Problem, SolveOptions
from .verify import SweepSpec, VerificationConfig, weak_harnack_p_limit

__all__ = ["COMMANDS", "RunConfig", "parse_config", "canonical", "compile_expression",
           "SCHEMA"]

COMMANDS = ("solve", "classify", "verify", "sweep", "oracle", "schedule")

# --------------------------------------------------------------------------
# expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: np.power}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _reduce(fn):
    def inner(*args):
        if len(args) < 2:
            raise ConfigurationError("min/max need at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    return inner


_FUNCS = {"abs": np.abs, "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
          "log": np.log, "min": _reduce(np.minimum), "max": _reduce(np.maximum)}
_CONSTS = {"pi": math.pi}


def compile_expression(text, dim):
    """Compile an arithmetic expression over ``x1 .. x{dim}`` into a
    vectorised function of points ``(..., dim)``.

    Supported: numbers, ``+ - * / ^`` (``**`` also accepted), parentheses,
    ``pi`` and the functions abs, sin, cos, exp, sqrt, log, min, max.
    Anything else is rejected before evaluation.

    >>> f = compile_expression("x1^2 - x2^2", 2)
    >>> float(f(np.array([3.0, 1.0])))
    8.0
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value = float(text)
        return lambda x: np.full(np.shape(x)[:-1], value)
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc.msg}") from None
    names = {f"x{i + 1}": i for i in range(dim)}

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda x: v
        if isinstance(node, ast.Name):
            if node.id in names:
                i = names[node.id]
                return lambda x: x[..., i]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda x: v
            raise ConfigurationError(f"unknown variable {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda x: op(a(x), b(x))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, a = _UNARY[type(node.op)], build(node.operand)
            return lambda x: op(a(x))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            fn = _FUNCS[node.func.id]
            args = [build(a) for a in node.args]
            return lambda x: fn(*(a(x) for a in args))
        raise ConfigurationError(
            f"unsupported syntax {type(node).__name__} in expression {text!r}")

    body = build(tree)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(body(x), dtype=float), x.shape[:-1]).copy()

    return evaluate


# --------------------------------------------------------------------------
# schema


class _Key:
    def __init__(self, kind, default=None, optional=False, choices=None):
        self.kind, self.default, self.optional, self.choices = kind, default, optional, choices


SCHEMA = {
    "": {
        "command": _Key("str", "solve", choices=COMMANDS),
        "seed": _Key("int", 0),
    },
    "problem": {
        "dim": _Key("int", 2),
        "box": _Key("pairs", None, optional=True),
        "resolution": _Key("int", 32),
        "gamma": _Key("float", 2.0),
        "q": _Key("float", math.inf),
        "norm": _Key("str", "euclidean(1)"),
        "boundary": _Key("expr", "0"),
        "F": _Key("exprs", None, optional=True),
        "f": _Key("expr", None, optional=True),
        "field": _Key("expr", None, optional=True),
    },
    "solver": {
        "tolerance": _Key("float", 1e-8),
        "max_iterations": _Key("int", 50_000),
        "epsilon_regularization": _Key("float", 0.0),
        "acceleration": _Key("str", "off", choices=("on", "off")),
        "preconditioner": _Key("str", "kacanov", choices=("kacanov", "diagonal", "none")),
    },
    "verification": {
        "p": _Key("float", None, optional=True),
        "theta": _Key("float", 0.4),
        "tau": _Key("float", 0.8),
        "radii": _Key("pairs", [[0.1, 0.2], [0.1, 0.4], [0.2, 0.4]]),
        "centers": _Key("pairs", None, optional=True),
        "harnack_R": _Key("floats", [0.25]),
        "caccioppoli_R": _Key("floats", [0.25]),
        "weak_harnack_R": _Key("floats", [0.4]),
        "oscillation_R0": _Key("float", 0.4),
        "oscillation_levels": _Key("int", 4),
        "classify_tolerance": _Key("float", 1e-8),
    },
    "sweep": {
        "seeds": _Key("int", 5),
        "resolutions": _Key("ints", None, optional=True),
        "boundary_family": _Key("str", "trig", choices=("trig", "poly", "constant")),
        "F_family": _Key("str", "zero", choices=("zero", "smooth", "singular")),
        "f_family": _Key("str", "zero", choices=("zero", "smooth")),
        "amplitude": _Key("float", 1.0),
        "data_scale": _Key("float", 0.1),
        "drift_tolerance": _Key("float", 0.10),
        "threads": _Key("int", 1),
    },
    "oracle": {
        "names": _Key("strs", ["linear", "harmonic", "pseudo_p", "radial"]),
        "resolutions": _Key("ints", [16, 32, 64]),
    },
    "schedule": {
        "k_max": _Key("int", 5),
        "r": _Key("float", 0.5),
        "R": _Key("float", 1.0),
    },
    "output": {
        "report": _Key("str", "report.json"),
        "profile_csv": _Key("str", "profile.csv"),
        "field_csv": _Key("str", "solution.csv"),
    },
}


def _err(section, key, msg):
    name = f"{section}.{key}" if section else key
    return ConfigurationError(f"{name}: {msg}")


def _coerce(section, key, spec, v):
    kind = spec.kind

    def num(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise _err(section, key, f"expected a number, got {x!r}")
        return float(x)

    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise _err(section, key, f"expected an integer, got {v!r}")
        out = int(v)
    elif kind == "float":
        out = num(v)
        if math.isnan(out):
            raise _err(section, key, "must not be nan")
    elif kind == "bool":
        if not isinstance(v, bool):
            raise _err(section, key, f"expected true/false, got {v!r}")
        out = v
    elif kind == "str":
        if not isinstance(v, str):
            raise _err(section, key, f"expected a string, got {v!r}")
        out = v
    elif kind == "expr":
        if isinstance(v, str):
            out = v
        else:
            out = repr(num(v))
    elif kind in ("floats", "ints", "strs", "exprs", "pairs"):
        if not isinstance(v, list):
            raise _err(section, key, f"expected a list, got {v!r}")
        if kind == "floats":
            out = [num(x) for x in v]
        elif kind == "ints":
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
                raise _err(section, key, "expected a list of integers")
            out = [int(x) for x in v]
        elif kind == "strs":
            if not all(isinstance(x, str) for x in v):
                raise _err(section, key, "expected a list of strings")
            out = list(v)
        elif kind == "exprs":
            out = [x if isinstance(x, str) else repr(num(x)) for x in v]
        else:
            if not all(isinstance(x, list) for x in v):
                raise _err(section, key, "expected a list of lists")
            out = [[num(y) for y in x] for x in v]
    else:  # pragma: no cover
        raise AssertionError(kind)
    if spec.choices is not None and out not in spec.choices:
        raise _err(section, key, f"must be one of {', '.join(spec.choices)}; got {out!r}")
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration.  ``values`` maps section -> key -> value
    with every default filled in (``None`` for unset optional keys)."""

    values: dict
    derived: dict = field(compare=False, default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def command(self):
        return self.values[""]["command"]

    @property
    def seed(self):
        return self.values[""]["seed"]

    @property
    def dim(self):
        return self.values["problem"]["dim"]

    @property
    def box(self):
        b = self.values["problem"]["box"]
        return [tuple(x) for x in b] if b is not None else [(0.0, 1.0)] * self.dim

    def norm(self):
        return parse_norm(self.values["problem"]["norm"], self.dim)

    def problem(self, resolution=None):
        p = self.values["problem"]
        n = self.dim
        bd = compile_expression(p["boundary"], n)
        F = None
        if p["F"] is not None:
            comps = [compile_expression(e, n) for e in p["F"]]

            def F(x):
                return np.stack([c(x) for c in comps], axis=-1)
        f = compile_expression(p["f"], n) if p["f"] is not None else None
        return Problem.on_box(self.box, resolution or p["resolution"], p["gamma"], self.norm(),
                              boundary=bd, F=F, f=f, q=p["q"])

    def field_expression(self):
        e = self.values["problem"]["field"]
        return compile_expression(e, self.dim) if e is not None else None

    def solve_options(self):
        s = self.values["solver"]
        return SolveOptions(tolerance=s["tolerance"], max_iterations=s["max_iterations"],
                            epsilon_regularization=s["epsilon_regularization"],
                            acceleration=s["acceleration"] == "on",
                            preconditioner=s["preconditioner"])

    def verification(self):
        v, p = self.values["verification"], self.values["problem"]
        return VerificationConfig(
            n=self.dim, gamma=p["gamma"], q=p["q"], p=v["p"], theta=v["theta"], tau=v["tau"],
            radii=tuple(tuple(r) for r in v["radii"]), centers=tuple(map(tuple, self.centers)),
            sweep_seeds=tuple(self.seeds))

    @property
    def centers(self):
        c = self.values["verification"]["centers"]
        if c is not None:
            return [tuple(x) for x in c]
        return [tuple((lo + hi) / 2 for lo, hi in self.box)]

    @property
    def seeds(self):
        return list(range(self.seed, self.seed + self.values["sweep"]["seeds"]))

    def sweep_spec(self, resolution=None, threads=None):
        v, p, s = self.values["verification"], self.values["problem"], self.values["sweep"]
        res = [resolution] if resolution else (s["resolutions"] or [p["resolution"]])
        return SweepSpec(
            norm=p["norm"], gamma=p["gamma"], q=p["q"], dim=self.dim,
            box=tuple(self.box), boundary_family=s["boundary_family"],
            F_family=s["F_family"], f_family=s["f_family"], amplitude=s["amplitude"],
            data_scale=s["data_scale"], seeds=tuple(self.seeds), resolutions=tuple(res),
            centers=tuple(self.centers), harnack_R=tuple(v["harnack_R"]),
            caccioppoli_R=tuple(v["caccioppoli_R"]),
            sup_radii=tuple(tuple(r) for r in v["radii"]), sup_p=v["p"],
            weak_harnack=tuple((R, v["theta"], v["tau"]) for R in v["weak_harnack_R"]),
            weak_harnack_p=self.weak_harnack_p,
            oscillation=((v["oscillation_R0"], v["oscillation_levels"]),),
            drift_tolerance=s["drift_tolerance"],
            solver_tolerance=self.values["solver"]["tolerance"],
            max_iterations=self.values["solver"]["max_iterations"],
            threads=threads if threads is not None else s["threads"])

    @property
    def weak_harnack_p(self):
        """Configured ``p`` when it fits the weak-Harnack range, else ``None``
        (the sweep then picks half the upper limit)."""
        p = self.values["verification"]["p"]
        lim = weak_harnack_p_limit(self.dim, self.values["problem"]["gamma"])
        return p if p is not None and p < lim else None

    def with_overrides(self, seed=None, resolution=None, threads=None, command=None):
        """Copy with command-line overrides applied and revalidated."""
        vals = {s: dict(d) for s, d in self.values.items()}
        if command is not None:
            vals[""]["command"] = _coerce("", "command", SCHEMA[""]["command"], command)
        if seed is not None:
            vals[""]["seed"] = int(seed)
        if resolution is not None:
            vals["problem"]["resolution"] = int(resolution)
            if vals["sweep"]["resolutions"] is not None:
                vals["sweep"]["resolutions"] = [int(resolution)]
        if threads is not None:
            vals["sweep"]["threads"] = int(threads)
        return _validate(vals)


def _derive(vals):
    p = vals["problem"]
    n, gamma, q = p["dim"], p["gamma"], p["q"]
    delta = 1.0 - n / (q * (gamma - 1.0))
    return {"gamma_conjugate": conjugate_exponent(gamma), "delta": delta,
            "chi": n / (n - gamma) if gamma < n else math.inf,
            "within_theorem_range": bool(gamma < n)}


def _validate(vals):
    p = vals["problem"]
    n = p["dim"]
    if n < 2:
        raise _err("problem", "dim", "must be at least 2")
    if p["resolution"] < 1:
        raise _err("problem", "resolution", "must be positive")
    if p["box"] is not None:
        if len(p["box"]) != n or any(len(b) != 2 or not b[0] < b[1] for b in p["box"]):
            raise _err("problem", "box", f"need {n} pairs [lo, hi] with lo < hi")
    gamma = p["gamma"]
    if not gamma > 1:
        raise _err("problem", "gamma", "constraint 1 < gamma violated")
    if not p["q"] > n / (gamma - 1.0):
        raise _err("problem", "q", f"constraint q > n/(gamma-1) = {n / (gamma - 1.0)} violated")
    try:
        parse_norm(p["norm"], n)
    except ConfigurationError as exc:
        raise _err("problem", "norm", str(exc)) from None
    for key in ("boundary", "f", "field"):
        if p[key] is not None:
            try:
                compile_expression(p[key], n)
            except ConfigurationError as exc:
                raise _err("problem", key, str(exc)) from None
    if p["F"] is not None:
        if len(p["F"]) != n:
            raise _err("problem", "F", f"need {n} component expressions")
        for e in p["F"]:
            try:
                compile_expression(e, n)
            except ConfigurationError as exc:
                raise _err("problem", "F", str(exc)) from None

    s = vals["solver"]
    if not s["tolerance"] > 0:
        raise _err("solver", "tolerance", "must be positive")
    if s["max_iterations"] < 0:
        raise _err("solver", "max_iterations", "must be nonnegative")
    if s["epsilon_regularization"] < 0:
        raise _err("solver", "epsilon_regularization", "must be nonnegative")

    v = vals["verification"]
    if not 0 < v["theta"] < v["tau"] < 1:
        key = "theta" if not 0 < v["theta"] < 1 or v["theta"] >= v["tau"] else "tau"
        raise _err("verification", key, "constraint 0 < theta < tau < 1 violated")
    if v["p"] is not None and not v["p"] > 0:
        raise _err("verification", "p", "must be positive")
    for r, R in (x if len(x) == 2 else (None, None) for x in v["radii"]):
        if r is None or not 0 < r < R:
            raise _err("verification", "radii", "each entry must be [r, R] with 0 < r < R")
    if v["centers"] is not None and any(len(c) != n for c in v["centers"]):
        raise _err("verification", "centers", f"each center needs {n} coordinates")
    if v["oscillation_levels"] < 3:
        raise _err("verification", "oscillation_levels", "must be at least 3")

    w = vals["sweep"]
    if w["seeds"] < 1:
        raise _err("sweep", "seeds", "must be positive")
    if w["threads"] < 1:
        raise _err("sweep", "threads", "must be positive")
    if w["F_family"] == "singular" and math.isinf(p["q"]):
        raise _err("sweep", "F_family", "singular F needs a finite problem.q")

    o = vals["oracle"]
    for name in o["names"]:
        if name not in ORACLES:
            raise _err("oracle", "names", f"unknown oracle {name!r}")
    if len(o["resolutions"]) < 2:
        raise _err("oracle", "resolutions", "need at least two resolutions")

    sc = vals["schedule"]
    if sc["k_max"] < 0:
        raise _err("schedule", "k_max", "must be nonnegative")
    if not 0 < sc["r"] < sc["R"]:
        raise _err("schedule", "r", "constraint 0 < r < R violated")
    if vals[""]["command"] == "schedule" and gamma >= n:
        raise _err("problem", "gamma", f"constraint gamma < n = {n} violated "
                   "(the Moser schedule needs chi = n/(n-gamma) > 0)")
    return RunConfig(vals, _derive(vals))


def parse_config(text):
    """Parse and validate a TOML configuration."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML: {exc}") from None
    vals = {}
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in raw.items() if isinstance(v, dict)}
    for name in sections:
        if name not in SCHEMA or name == "":
            raise ConfigurationError(f"{name}: unknown section")
    for section, keys in SCHEMA.items():
        given = top if section == "" else sections.get(section, {})
        for k in given:
            if k not in keys:
                raise _err(section, k, "unknown key")
        out = {}
        for k, spec in keys.items():
            if k in given:
                out[k] = _coerce(section, k, spec, given[k])
            else:
                out[k] = None if spec.default is None else _coerce(section, k, spec,
                                                                   spec.default)
        vals[section] = out
    return _validate(vals)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(type(v))


def canonical(config):
    """Canonical TOML text: every key in schema order, defaults filled in,
    derived exponents echoed as comments."""
    lines = []
    for section, keys in SCHEMA.items():
        if section:
            lines.append("")
            lines.append(f"[{section}]")
        for k in keys:
            v = config.values[section][k]
            if v is not None:
                lines.append(f"{k} = {_fmt(v)}")
        if section == "problem":
            d = config.derived
            lines.append(f"# derived: gamma_conjugate = {_fmt(d['gamma_conjugate'])}, "
                         f"delta = {_fmt(d['delta'])}, chi = {_fmt(d['chi'])}, "
                         f"within_theorem_range = {_fmt(d['within_theorem_range'])}")
    return "\n".join(lines) + "\n"
