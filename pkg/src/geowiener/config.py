"""Run configuration: INI files with sections, validated before any computation.

Example::

    [run]
    experiment = converge
    seed = 7
    samples = 2000

    [manifold]
    name = sphere2
    radius = 1.0

    [start]
    coords = 0.0, 0.0

    [partition]
    T = 0.5
    N = 2, 4, 8, 16

    [measure]
    kind = G1

    [function]
    type = bump
    center = 0.3, 0.2
    scale = 0.5

Unknown sections or keys, malformed values and experiment-specific
constraint violations raise :class:`ConfigurationError` with the offending
line where one exists.
"""
from __future__ import annotations

import configparser
import copy
import re

from .errors import ConfigurationError

EXPERIMENTS = ("simulate", "converge", "ibp-check", "trichotomy", "heat-kernel-check", "free-path")

# section -> key -> (parser, default)
_FLOAT = float
_INT = int


def _floats(text):
    try:
        return [float(x) for x in re.split(r"[,\s]+", text.strip()) if x]
    except ValueError:
        raise ValueError(f"expected a list of numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ValueError(f"expected a list of integers, got {text!r}")
    return [int(v) for v in vals]


def _points(text):
    """``x1, y1; x2, y2`` -> list of coordinate lists."""
    return [_floats(p) for p in text.split(";") if p.strip()]


def _str(text):
    return text.strip()


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


SCHEMA = {
    "run": {
        "experiment": (_choice(*EXPERIMENTS), None),
        "seed": (_INT, 0),
        "samples": (_INT, 2000),
    },
    "manifold": {
        "name": (_choice("euclidean", "torus", "sphere2", "hyperbolic2"), "euclidean"),
        "dim": (_INT, 2),
        "radius": (_FLOAT, 1.0),
        "curvature": (_FLOAT, -1.0),
        "periods": (_floats, None),
    },
    "start": {
        "coords": (_floats, None),
        "chart": (_INT, 0),
    },
    "partition": {
        "T": (_FLOAT, 1.0),
        "N": (_ints, [1, 2, 4, 8]),
        "type": (_choice("uniform", "dyadic"), "uniform"),
    },
    "measure": {
        "kind": (_choice("G0", "G1", "wiener"), "G1"),
    },
    "function": {
        "type": (_choice("bump", "constant", "cosine", "legendre", "bump2"), "bump"),
        "center": (_floats, None),
        "center2": (_floats, None),
        "scale": (_FLOAT, 0.7),
        "scale2": (_FLOAT, 0.7),
        "time": (_FLOAT, None),
        "time2": (_FLOAT, None),
        "k": (_floats, [1.0, 0.5]),
        "degree": (_INT, 1),
        "amplitude": (_FLOAT, 1.0),
    },
    "ibp": {
        "h": (_choice("linear", "sines", "hats"), "linear"),
        "v": (_floats, [1.0, 0.5]),
        "steps": (_INT, 8),
        "rule": (_choice("integral", "printed"), "integral"),
    },
    "trichotomy": {
        "horizons": (_floats, [1.0, 2.0, 3.0]),
        "mesh": (_FLOAT, 0.125),
        "levels": (_ints, [1, 2, 3]),
        "cap": (_INT, 64),
    },
    "heat_kernel": {
        "times": (_floats, [0.1, 0.5, 1.0]),
        "resolution": (_INT, 64),
    },
    "free_path": {
        "atoms": (_points, None),
        "weights": (_floats, [0.5, 0.5]),
    },
    "tolerance": {
        "k_sigma": (_FLOAT, 3.0),
    },
}


def defaults():
    return {sec: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def _key_lines(text):
    """Map ``(section, key) -> line number`` (1-based) by a plain scan."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+)[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


class RunConfig:
    """Validated configuration; ``values[section][key]`` holds parsed values."""

    def __init__(self, values, source=None):
        self.values = values
        self.source = source

    @property
    def experiment(self):
        return self.values["run"]["experiment"]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    @property
    def samples(self):
        return self.values["run"]["samples"]

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self):
        return copy.deepcopy(self.values)

    @classmethod
    def from_dict(cls, d):
        vals = defaults()
        for sec, keys in d.items():
            if sec not in SCHEMA:
                raise ConfigurationError(f"unknown section [{sec}]")
            for k, v in keys.items():
                if k not in SCHEMA[sec]:
                    raise ConfigurationError(f"unknown key {k!r} in [{sec}]")
                vals[sec][k] = v
        cfg = cls(vals)
        cfg.validate()
        return cfg

    def override(self, seed=None, samples=None, experiment=None):
        if seed is not None:
            self.values["run"]["seed"] = int(seed)
        if samples is not None:
            self.values["run"]["samples"] = int(samples)
        if experiment is not None:
            self.values["run"]["experiment"] = experiment
        self.validate()
        return self

    def validate(self, lines=None):
        lines = lines or {}

        def fail(msg, sec=None, key=None):
            raise ConfigurationError(msg, line=lines.get((sec, key)) or lines.get((sec, None)))

        v = self.values
        if v["run"]["experiment"] is None:
            fail("missing [run] experiment", "run", "experiment")
        if v["run"]["seed"] < 0 or v["run"]["seed"] >= 2**64:
            fail("seed must be an unsigned 64-bit integer", "run", "seed")
        if v["run"]["samples"] < 2:
            fail("samples must be >= 2", "run", "samples")
        man = v["manifold"]
        if man["name"] == "sphere2" and man["radius"] <= 0:
            fail("radius must be positive", "manifold", "radius")
        if man["name"] == "hyperbolic2" and man["curvature"] >= 0:
            fail("hyperbolic curvature must be negative", "manifold", "curvature")
        if man["name"] in ("euclidean", "torus") and man["dim"] < 1:
            fail("dim must be >= 1", "manifold", "dim")
        if man["name"] == "torus" and man["periods"] is not None and any(p <= 0 for p in man["periods"]):
            fail("torus periods must be positive", "manifold", "periods")
        part = v["partition"]
        if part["T"] <= 0:
            fail("T must be positive", "partition", "T")
        if not part["N"] or any(n < 1 for n in part["N"]):
            fail("N must list positive integers", "partition", "N")
        if self.experiment == "converge" and len(part["N"]) < 2:
            fail("converge needs at least two partitions in N", "partition", "N")
        if v["function"]["scale"] <= 0 or v["function"]["scale2"] <= 0:
            fail("bump scales must be positive", "function", "scale")
        if v["ibp"]["steps"] < 1:
            fail("ibp steps must be >= 1", "ibp", "steps")
        if v["heat_kernel"]["resolution"] < 8:
            fail("heat-kernel resolution must be >= 8", "heat_kernel", "resolution")
        if any(t <= 0 for t in v["heat_kernel"]["times"]):
            fail("heat-kernel times must be positive", "heat_kernel", "times")
        fp = v["free_path"]
        if fp["atoms"] is not None and len(fp["atoms"]) != len(fp["weights"]):
            fail("free_path atoms and weights differ in length", "free_path", "weights")
        if any(w < 0 for w in fp["weights"]) or abs(sum(fp["weights"]) - 1) > 1e-12:
            fail("free_path weights must be non-negative and sum to 1", "free_path", "weights")
        tri = v["trichotomy"]
        if len(tri["horizons"]) < 2 or tri["mesh"] <= 0:
            fail("trichotomy needs two or more horizons and a positive mesh", "trichotomy", "horizons")
        return self


def parse_config(text, source=None) -> RunConfig:
    """Parse and validate INI text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (T vs t)
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.ParsingError as exc:
        no = exc.errors[0][0] if exc.errors else None
        raise ConfigurationError(f"malformed line {exc.errors[0][1]!s}" if exc.errors else str(exc), line=no) from None
    except configparser.Error as exc:
        raise ConfigurationError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    vals = defaults()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigurationError(f"unknown section [{sec}]", line=lines.get((sec, None)))
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigurationError(f"unknown key {key!r} in [{sec}]", line=lines.get((sec, key)))
            conv = SCHEMA[sec][key][0]
            try:
                vals[sec][key] = conv(raw)
            except ValueError as exc:
                raise ConfigurationError(f"[{sec}] {key}: {exc}", line=lines.get((sec, key))) from None
    cfg = RunConfig(vals, source)
    cfg.validate(lines)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
