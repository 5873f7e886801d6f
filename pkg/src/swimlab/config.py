"""Scenario files: structured-text parsing with named-key diagnostics.

A scenario file has [domain], [swimmer], [controls] and optional
[initial], [time], [output], [numerics] sections. Parsing failures
raise ConfigError carrying the dotted key and, when recoverable, the
line in the source file. The fully resolved configuration (defaults
filled in) is available for echoing into run metadata.
"""

from __future__ import annotations

import re

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .core import BodyShape, DomainSpec, SwimmerState
from .errors import ConfigError
from .forces import control_count
from .simulator import ControlSchedule, Numerics, Scenario

_AXES = "xyz"

_DEFAULTS = {
    "initial": {"eddy_amplitude": 0.0},
    "time": {"dt": 0.0},
    "output": {"field_every": 0},
    "numerics": {
        "poisson_tol": 1e-12,
        "cfl_safety": 0.5,
        "advection": True,
        "integrator": "rk2",
    },
}


def _find_line(text, key):
    """Best-effort line lookup of a key's final segment in the source."""
    if text is None:
        return None
    leaf = key.split(".")[-1]
    pattern = re.compile(rf"^\s*{re.escape(leaf)}\s*=")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return lineno
    return None


class _Reader:
    def __init__(self, data, text=None):
        self.data = data
        self.text = text

    def fail(self, key, message):
        raise ConfigError(message, key=key, line=_find_line(self.text, key))

    def section(self, name, required=True):
        if name not in self.data:
            if required:
                self.fail(name, f"missing required section [{name}]")
            return {}
        value = self.data[name]
        if not isinstance(value, dict):
            self.fail(name, f"[{name}] must be a table")
        return value

    def get(self, section, sect_name, key, kind, required=True, default=None):
        full = f"{sect_name}.{key}"
        if key not in section:
            if required:
                self.fail(full, f"missing required key {key!r} in [{sect_name}]")
            return default
        value = section[key]
        if kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(full, f"{key!r} must be a number, got {type(value).__name__}")
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(full, f"{key!r} must be an integer")
            return int(value)
        if kind == "bool":
            if not isinstance(value, bool):
                self.fail(full, f"{key!r} must be true or false")
            return value
        if kind == "string":
            if not isinstance(value, str):
                self.fail(full, f"{key!r} must be a string")
            return value
        if kind == "list":
            if not isinstance(value, list):
                self.fail(full, f"{key!r} must be an array")
            return value
        raise AssertionError(kind)


def _parse_orientation(token, dim, reader, key):
    if len(token) != dim or sorted(token) != sorted(_AXES[:dim]):
        reader.fail(key, f"orientation {token!r} must permute {_AXES[:dim]!r}")
    return tuple(token.index(_AXES[a]) for a in range(dim))


def scenario_from_dict(data, text=None):
    reader = _Reader(data, text)

    dom_sec = reader.section("domain")
    extent = reader.get(dom_sec, "domain", "extent", "list")
    cells = reader.get(dom_sec, "domain", "cells", "list")
    nu = reader.get(dom_sec, "domain", "nu", "number")
    try:
        domain = DomainSpec(tuple(extent), tuple(cells), nu)
    except (TypeError, ValueError) as exc:
        reader.fail("domain", str(exc))
    dim = domain.dim

    swim = reader.section("swimmer")
    kind = reader.get(swim, "swimmer", "shape", "string")
    params = reader.get(swim, "swimmer", "params", "list")
    centers = reader.get(swim, "swimmer", "centers", "list")
    try:
        base_shape = BodyShape(kind, tuple(params))
    except (TypeError, ValueError) as exc:
        reader.fail("swimmer.params", str(exc))
    if base_shape.dim != dim:
        reader.fail("swimmer.shape", f"{kind!r} is {base_shape.dim}-D but the domain is {dim}-D")
    try:
        state0 = SwimmerState(np.asarray(centers, float))
    except (TypeError, ValueError) as exc:
        reader.fail("swimmer.centers", str(exc))
    if state0.dim != dim:
        reader.fail("swimmer.centers", "center dimension does not match the domain")
    n = state0.n

    orientations = reader.get(
        swim, "swimmer", "orientations", "list", required=False
    )
    if orientations is None:
        shapes = base_shape
        orient_echo = [_AXES[:dim]] * n
    else:
        if len(orientations) != n:
            reader.fail("swimmer.orientations", f"need one orientation per part ({n})")
        perms = [
            _parse_orientation(tok, dim, reader, "swimmer.orientations")
            for tok in orientations
        ]
        shapes = tuple(base_shape.permuted(p) for p in perms)
        orient_echo = list(orientations)

    ctl = reader.section("controls")
    m = control_count(n)
    constant = reader.get(ctl, "controls", "constant", "list", required=False)
    table = reader.get(ctl, "controls", "schedule", "list", required=False)
    if (constant is None) == (table is None):
        reader.fail("controls", "give exactly one of 'constant' or 'schedule'")
    try:
        if constant is not None:
            controls = ControlSchedule(m, constant=constant)
        else:
            controls = ControlSchedule(m, table=table)
    except (TypeError, ValueError) as exc:
        reader.fail("controls", str(exc))

    initial = reader.section("initial", required=False)
    eddy = reader.get(
        initial, "initial", "eddy_amplitude", "number",
        required=False, default=_DEFAULTS["initial"]["eddy_amplitude"],
    )

    time_sec = reader.section("time")
    horizon = reader.get(time_sec, "time", "horizon", "number")
    if horizon <= 0:
        reader.fail("time.horizon", "horizon must be positive")
    dt = reader.get(time_sec, "time", "dt", "number", required=False, default=0.0)
    if dt < 0:
        reader.fail("time.dt", "dt must be nonnegative (0 means adaptive)")

    out_sec = reader.section("output", required=False)
    field_every = reader.get(
        out_sec, "output", "field_every", "int",
        required=False, default=_DEFAULTS["output"]["field_every"],
    )
    if field_every < 0:
        reader.fail("output.field_every", "field_every must be nonnegative")

    num_sec = reader.section("numerics", required=False)
    nd = _DEFAULTS["numerics"]
    numerics_kwargs = dict(
        poisson_tol=reader.get(num_sec, "numerics", "poisson_tol", "number",
                               required=False, default=nd["poisson_tol"]),
        cfl_safety=reader.get(num_sec, "numerics", "cfl_safety", "number",
                              required=False, default=nd["cfl_safety"]),
        advection=reader.get(num_sec, "numerics", "advection", "bool",
                             required=False, default=nd["advection"]),
        integrator=reader.get(num_sec, "numerics", "integrator", "string",
                              required=False, default=nd["integrator"]),
    )
    try:
        numerics = Numerics(**numerics_kwargs)
    except ValueError as exc:
        reader.fail("numerics.integrator", str(exc))

    resolved = {
        "domain": {"extent": list(domain.extent), "cells": list(domain.cells), "nu": domain.nu},
        "swimmer": {
            "shape": kind,
            "params": [float(p) for p in params],
            "centers": [list(map(float, c)) for c in centers],
            "orientations": orient_echo,
        },
        "controls": (
            {"constant": [float(v) for v in constant]}
            if constant is not None
            else {"schedule": [[float(x) for x in row] for row in table]}
        ),
        "initial": {"eddy_amplitude": eddy},
        "time": {"horizon": horizon, "dt": dt},
        "output": {"field_every": field_every},
        "numerics": numerics_kwargs,
    }

    return Scenario(
        domain=domain,
        shape=shapes,
        state0=state0,
        controls=controls,
        horizon=horizon,
        dt=None if dt == 0.0 else dt,
        eddy_amplitude=eddy,
        field_every=field_every,
        numerics=numerics,
        raw=resolved,
    )


def load_scenario(path):
    """Parse a scenario file; ConfigError names the key (and line) at fault."""
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        message = str(exc)
        match = re.search(r"line (\d+)", message)
        line = int(match.group(1)) if match else None
        raise ConfigError(f"syntax error: {message}", line=line) from exc
    return scenario_from_dict(data, text)
