"""Flat ``key = value`` experiment configuration with dotted namespaces.

Lines starting with ``#`` are comments.  Values are parsed according to the
key's declared type; lists are comma separated and matrices use ``;`` between
rows.  Validation collects every problem before raising.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _float(s):
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _int(s):
    return int(s.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


def _floats(s):
    s = s.strip()
    return [] if not s else [_float(t) for t in s.split(",")]


def _ints(s):
    s = s.strip()
    return [] if not s else [_int(t) for t in s.split(",")]


def _matrix(s):
    s = s.strip()
    if not s:
        return None
    return [_floats(row) for row in s.split(";")]


def _choice(*options):
    def parse(s):
        v = s.strip()
        if v not in options:
            raise ValueError(f"{v!r} not in {options}")
        return v
    return parse


# key -> (parser, default)
SCHEMA = {
    "potential.family": (_choice("quartic", "cosine", "custom"), "quartic"),
    "potential.coefficients": (_floats, []),
    "integrand.family": (_choice("isotropic", "quadratic", "quartic"), "isotropic"),
    "integrand.matrix": (_matrix, None),
    "integrand.beta": (_float, 0.0),
    "integrand.delta": (_float, 0.1),
    "integrand.quad_order": (_int, 12),
    "integrand.modulation.amplitude": (_float, 0.0),
    "integrand.modulation.wavevector": (_ints, []),
    "integrand.modulation.phase": (_float, 0.0),
    "grid.cells": (_ints, [128, 128]),
    "grid.lengths": (_floats, []),
    "epsilon": (_float, 1 / 32),
    "heteroclinic.t_max": (_float, 40.0),
    "heteroclinic.samples": (_int, 801),
    "audit.samples": (_int, 2000),
    "minimize.init": (_str, "stripe"),
    "minimize.steps": (_int, 2000),
    "minimize.tol": (_float, 1e-9),
    "minmax.nodes": (_int, 33),
    "minmax.rounds": (_int, 300),
    "minmax.relax_tol": (_float, 1e-4),
    "minmax.direction": (_int, 1),
    "minmax.center": (_float, 0.0),
    "minmax.climb": (_bool, True),
    "minmax.anchored": (_bool, False),
    "minmax.deltas": (_floats, []),
    "critical.tol": (_float, 1e-9),
    "critical.max_iter": (_int, 60),
    "critical.k_eig": (_int, 3),
    "diagnose.input": (_str, ""),
    "diagnose.radii": (_floats, []),
    "spectrum.input": (_str, ""),
    "gamma.shape": (_choice("stripe", "circle", "ellipse"), "circle"),
    "gamma.radius": (_float, 0.25),
    "gamma.center": (_floats, []),
    "gamma.axis": (_int, 1),
    "gamma.offsets": (_floats, [0.25, 0.75]),
    "gamma.axes": (_floats, []),
    "gamma.epsilons": (_floats, [1 / 16, 1 / 32, 1 / 64, 1 / 128]),
    "gamma.gamma": (_float, 0.0),
    "run.seed": (_int, 0),
    "run.threads": (_int, 1),
    "run.output": (_str, "out"),
    "run.checkpoint_every": (_int, 0),
    "run.resume": (_bool, False),
    "run.stop_after": (_int, 0),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        return {k: self.values[k] for k in sorted(self.values)}

    def digest(self) -> str:
        """Hash of the effective configuration, independent of key order."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_lines(lines, source="<config>"):
    """Split ``key = value`` lines; returns ``(pairs, problems)``."""
    pairs, problems = {}, []
    for i, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"{source}:{i}: expected 'key = value', got {line!r}")
            continue
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs, problems


def build_config(pairs: dict, problems=()) -> ExperimentConfig:
    """Validate raw string pairs against the schema, reporting every violation."""
    problems = list(problems)
    values = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in SCHEMA.items()}
    for k, v in pairs.items():
        if k not in SCHEMA:
            problems.append(f"unknown key {k!r}")
            continue
        try:
            values[k] = SCHEMA[k][0](v)
        except ValueError as exc:
            problems.append(f"bad value for {k!r}: {exc}")
    problems.extend(_cross_checks(values, pairs))
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(values, dict(pairs))


def _cross_checks(v, pairs):
    out = []
    cells = v["grid.cells"]
    if any(c < 8 for c in cells) or not 1 <= len(cells) <= 3:
        out.append("grid.cells needs 1 to 3 entries, each at least 8")
    if v["grid.lengths"] and len(v["grid.lengths"]) != len(cells):
        out.append("grid.lengths must match grid.cells in length")
    if not 0 < v["epsilon"] <= 1:
        out.append("epsilon must lie in (0, 1]")
    if not 0 <= v["integrand.delta"] < 1:
        out.append("integrand.delta must lie in [0, 1)")
    if v["integrand.family"] == "quadratic" and v["integrand.matrix"] is None:
        out.append("integrand.matrix is required for the quadratic family")
    if v["run.threads"] < 1:
        out.append("run.threads must be positive")
    if v["run.checkpoint_every"] < 0:
        out.append("run.checkpoint_every must be nonnegative")
    if v["minmax.nodes"] < 8:
        out.append("minmax.nodes must be at least 8")
    if not 1 <= v["critical.k_eig"] <= 10:
        out.append("critical.k_eig must lie in [1, 10]")
    eps = v["gamma.epsilons"]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        out.append("gamma.epsilons must be decreasing")
    return out


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a config file (optional) and apply ``key=value`` overrides."""
    pairs, problems = {}, []
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc}"]) from exc
        pairs, problems = parse_lines(text.splitlines(), str(path))
    more, extra = parse_lines(overrides, "--set")
    pairs.update(more)
    return build_config(pairs, problems + extra)
