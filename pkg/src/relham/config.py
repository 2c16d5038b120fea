"""Run configuration: INI text with fixed sections, validated in one pass.

Every key has a documented default; unknown sections or keys are errors.
Values may be overridden from the environment with
``RELHAM_<SECTION>__<KEY>=value`` (e.g. ``RELHAM_INTEGRATOR__DT=5e-4``).
Profile keys (``position``, ``velocity``, ``density``) are arithmetic
expressions in the label ``x`` using sin, cos, tan, exp, log, sqrt, abs,
tanh, sign and the constants pi and e.
"""
import ast
import configparser
import math
import operator
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SCHEMES, IntegratorConfig
from .energy import ModelSpec, model_errors
from .experiments import PARAMETER_CELLS
from .measure import build_reference

ENV_PREFIX = "RELHAM_"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _floats(text):
    return tuple(float(s) for s in text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _words(text):
    return tuple(s for s in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "formulation": (str, "B"),
        "p": (_opt_float, None),
        "q": (_opt_float, None),
        "kappa_r": (_opt_float, None),
        "kappa_a": (_opt_float, None),
        "gamma": (_opt_float, None),
    },
    "discretization": {
        "n": (int, 64),
        "density": (str, ""),
        "domain_min": (float, 0.0),
        "domain_max": (float, 1.0),
        "total_mass": (_opt_float, None),
    },
    "integrator": {
        "scheme": (str, "leapfrog"),
        "dt": (float, 1e-3),
        "t_end": (float, 1.0),
        "stride": (int, 100),
        "epsilon": (_opt_float, None),
    },
    "initial": {
        "position": (str, "x"),
        "velocity": (str, "0"),
    },
    "reference": {
        "position": (str, ""),
        "velocity": (str, ""),
    },
    "experiment": {
        "eps_list": (_floats, (0.2, 0.1, 0.05, 0.025)),
        "s_end": (float, 2.0),
        "dt_factor": (float, 0.0125),
        "n_pairs": (int, 1000),
        "pair_particles": (int, 10),
        "cells": (_words, tuple(PARAMETER_CELLS)),
        "n_states": (int, 100),
        "oracle_particles": (int, 8),
        "h": (float, 1e-5),
        "perturbation": (float, 0.02),
    },
    "tolerances": {
        "energy": (float, 1e-3),
        "monitor": (_opt_float, None),
        "rarefaction": (float, 1e-6),
    },
    "output": {
        "dir": (str, "relham_out"),
        "trajectory": (_bool, True),
    },
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
    },
}


@dataclass
class RunConfig:
    model: ModelSpec
    n: int
    density: str
    domain: tuple
    total_mass: float | None
    integrator: IntegratorConfig
    initial: dict
    reference: dict
    experiment: dict
    tolerances: dict
    output: dict
    seed: int = 0
    threads: int = 1
    values: dict = field(default_factory=dict)

    def build_reference(self):
        density = compile_profile(self.density) if self.density else None
        return build_reference(self.n, density, self.domain, self.total_mass)

    def echo(self):
        """Resolved values of every section, defaults included."""
        return {sec: dict(vals) for sec, vals in self.values.items()}


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh, "sign": np.sign}
_CONSTS = {"pi": math.pi, "e": math.e}


def compile_profile(text):
    """Turn an expression in ``x`` into a vectorized function of x."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords \
                    or len(node.args) != 1:
                raise ValueError(f"unsupported call in {text!r}")
            check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id != "x" and node.id not in _CONSTS:
                raise ValueError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ValueError(f"unsupported constant in {text!r}")
        else:
            raise ValueError(f"unsupported syntax {type(node).__name__} in {text!r}")

    check(tree)

    def ev(node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand, x))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](ev(node.args[0], x))
        if isinstance(node, ast.Name):
            return x if node.id == "x" else _CONSTS[node.id]
        return float(node.value)

    def profile(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="raise"):
            return np.broadcast_to(np.asarray(ev(tree.body, x), dtype=float), x.shape).copy()

    return profile


def _read(text, env):
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str.lower
    errors = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    for name, value in sorted((env or {}).items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        if len(parts) != 2 or not all(parts):
            errors.append(f"environment override {name} must look like {ENV_PREFIX}<SECTION>__<KEY>")
            continue
        raw.setdefault(parts[0], {})[parts[1]] = value
    return raw, errors


def parse_config(text, env=None):
    """Parse and validate; raises ConfigError listing all problems."""
    raw, errors = _read(text, env)
    values = {}
    for sec, keys in raw.items():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
            continue
        for key in keys:
            if key not in SCHEMA[sec]:
                errors.append(f"unknown key '{key}' in [{sec}]")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parse, default) in keys.items():
            if key in raw.get(sec, {}):
                try:
                    values[sec][key] = parse(raw[sec][key])
                except ValueError as exc:
                    errors.append(f"[{sec}] {key}: {exc}")
                    values[sec][key] = default
            else:
                values[sec][key] = default

    model = _build_model(values["model"], errors)
    d = values["discretization"]
    if d["n"] < 2:
        errors.append(f"[discretization] n={d['n']} must be >= 2")
    if not d["domain_max"] > d["domain_min"]:
        errors.append("[discretization] domain_max must exceed domain_min")
    if d["total_mass"] is not None and not d["total_mass"] > 0:
        errors.append(f"[discretization] total_mass={d['total_mass']} must be > 0")
    for sec, key in (("discretization", "density"), ("initial", "position"), ("initial", "velocity"),
                     ("reference", "position"), ("reference", "velocity")):
        if values[sec][key]:
            try:
                compile_profile(values[sec][key])
            except ValueError as exc:
                errors.append(f"[{sec}] {key}: {exc}")

    g = values["integrator"]
    integ = None
    if g["scheme"] not in SCHEMES:
        errors.append(f"[integrator] scheme {g['scheme']!r} not in {SCHEMES}")
    else:
        try:
            integ = IntegratorConfig(g["dt"], g["scheme"], g["epsilon"], g["t_end"], g["stride"])
        except ValueError as exc:
            errors.append(f"[integrator] {exc}")

    e = values["experiment"]
    if any(x <= 0 for x in e["eps_list"]) or len(e["eps_list"]) < 2:
        errors.append("[experiment] eps_list needs at least two positive values")
    for key in ("s_end", "dt_factor", "h"):
        if not e[key] > 0:
            errors.append(f"[experiment] {key}={e[key]} must be > 0")
    for key in ("n_pairs", "n_states"):
        if e[key] < 1:
            errors.append(f"[experiment] {key}={e[key]} must be >= 1")
    for key in ("pair_particles", "oracle_particles"):
        if e[key] < 2:
            errors.append(f"[experiment] {key}={e[key]} must be >= 2")
    bad = [c for c in e["cells"] if c not in PARAMETER_CELLS]
    if bad:
        errors.append(f"[experiment] unknown cells {bad}; choose from {sorted(PARAMETER_CELLS)}")
    for key, val in values["tolerances"].items():
        if val is not None and not val > 0:
            errors.append(f"[tolerances] {key}={val} must be > 0")
    if not 0 <= values["run"]["seed"] < 2 ** 64:
        errors.append("[run] seed must be an unsigned 64-bit integer")
    if values["run"]["threads"] < 1:
        errors.append("[run] threads must be >= 1")
    if errors:
        raise ConfigError(errors)

    ref_block = {k: v or values["initial"][k] for k, v in values["reference"].items()}
    return RunConfig(model, d["n"], d["density"], (d["domain_min"], d["domain_max"]), d["total_mass"],
                     integ, values["initial"], ref_block, e, values["tolerances"], values["output"],
                     values["run"]["seed"], values["run"]["threads"], values)


def _build_model(m, errors):
    form = m["formulation"].strip().upper()
    if form == "B":
        extra = [k for k in ("p", "q", "kappa_r", "kappa_a", "gamma") if m[k] is not None]
        if extra:
            errors.append(f"[model] formulation B fixes its kernel and has no pressure; remove {extra}")
            return None
        return ModelSpec.pressureless()
    if form != "A":
        errors.append(f"[model] formulation must be A or B, got {m['formulation']!r}")
        return None
    missing = [k for k in ("p", "q") if m[k] is None]
    if missing:
        errors.append(f"[model] formulation A requires {missing}")
        return None
    kr = 1.0 if m["kappa_r"] is None else m["kappa_r"]
    ka = 1.0 if m["kappa_a"] is None else m["kappa_a"]
    found = model_errors("A", m["p"], m["q"], kr, ka, m["gamma"])
    if found:
        errors.extend(f"[model] {msg}" for msg in found)
        return None
    return ModelSpec.power_law(m["p"], m["q"], m["gamma"], kr, ka)
