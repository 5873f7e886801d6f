"""Command-line entry point.

Every subcommand reads a scenario file, writes its artifacts into ``--out``,
and drops a ``meta.json`` whose resolved-config echo plus argv are enough to
reproduce the run bit-for-bit.  Exit codes: 0 on success (a run that halts
on validity loss still succeeds, with the halt recorded in the metadata),
2 for configuration or validity rejections, 3 for runtime failures, 64 for
usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_scenario
from .controllability import (
    independence_check,
    jacobian_matrix,
    reachability_map,
    steer,
    tracked_endpoint,
)
from .core import BodyShape, DomainSpec, configuration_margins, validate_configuration
from .errors import (
    BoundaryViolation,
    ConfigError,
    DegenerateGeometry,
    DegenerateShift,
    GridMismatch,
    OverlapViolation,
    SeparationViolated,
    ShapeOutsideDomain,
    SwimLabError,
)
from .forces import assemble_force, net_torque, part_force_table
from .projection_lab import asymptotic_sweep
from .sensitivity import (
    cumulative_trapezoid,
    displacement_sensitivity,
    linearized_solve,
    micromotion_predict,
    volterra_kernel,
)
from .simulator import baseline_run, simulate

_USAGE_EXIT = 64


def _load(path):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
_VALIDATION_ERRORS = (
    ConfigError,
    ShapeOutsideDomain,
    OverlapViolation,
    BoundaryViolation,
    DegenerateGeometry,
    DegenerateShift,
    GridMismatch,
    SeparationViolated,
)

_AXES = "xyz"


# ---------------------------------------------------------------------------
# deterministic writers


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip decimal
    return str(value)


def _write_csv(path: Path, columns, rows, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


class _JsonEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.bool_,)):
            return bool(o)
        return super().default(o)


def _write_json(path: Path, payload):
    path.write_text(
        json.dumps(payload, cls=_JsonEncoder, indent=2, sort_keys=True) + "\n"
    )


def _write_meta(outdir: Path, args, scenario=None, extra=None):
    meta = {
        "version": __version__,
        "subcommand": args.subcommand,
        "argv": list(args._argv),
        "config_path": getattr(args, "config", None),
    }
    if scenario is not None and scenario.raw is not None:
        meta["config"] = scenario.raw
    if extra:
        meta.update(extra)
    _write_json(outdir / "meta.json", meta)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _position_columns(n, dim):
    return [f"z{i}_{_AXES[a]}" for i in range(n) for a in range(dim)]


def _write_trajectory(outdir: Path, traj):
    n = traj.positions.shape[1]
    dim = traj.positions.shape[2]
    m = traj.controls.shape[1]
    columns = (
        ["t"]
        + _position_columns(n, dim)
        + [f"v_{j}" for j in range(1, m + 1)]
        + ["energy", "pair_margin", "wall_margin"]
    )
    rows = []
    for k in range(len(traj.times)):
        rows.append(
            [traj.times[k]]
            + list(traj.positions[k].reshape(-1))
            + list(traj.controls[k])
            + [traj.energy[k], traj.pair_margin[k], traj.wall_margin[k]]
        )
    _write_csv(outdir / "trajectory.csv", columns, rows)


def _write_field(outdir: Path, step, time, field):
    domain = field.domain
    rows = []
    for a, comp in enumerate(field.comps):
        flat = comp.reshape(-1)
        rows.extend((a, idx, flat[idx]) for idx in range(flat.size))
    _write_csv(
        outdir / f"field_{step:06d}.csv",
        ["axis", "flat_index", "value"],
        rows,
        comments=[
            f"step={step} t={_fmt(time)}",
            f"cells={list(domain.cells)} extent={list(domain.extent)}",
            "component axis a lives on faces normal to a; C-order flattening",
        ],
    )


def _halt_info(traj):
    return {
        "halted": bool(traj.halted),
        "halt_time": None if not traj.halted else float(traj.halt_time),
        "halt_cause": traj.halt_cause or None,
    }


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args):
    scenario = _load(args.config)
    validate_configuration(scenario.state0, scenario.shapes, scenario.domain)
    report = configuration_margins(scenario.state0, scenario.shapes, scenario.domain)
    print(f"configuration valid: pair margin {report.pair_margin:.6g}, "
          f"wall margin {report.wall_margin:.6g}")
    if args.out is not None:
        outdir = _outdir(args)
        controls = scenario.controls(0.0)
        table = part_force_table(scenario.state0, scenario.shapes, controls)
        dim = scenario.domain.dim
        _write_csv(
            outdir / "forces.csv",
            ["part"] + [f"f{_AXES[a]}" for a in range(dim)],
            [[i] + list(table[i]) for i in range(len(table))],
        )
        force = assemble_force(
            scenario.state0, scenario.shapes, scenario.domain, controls
        )
        torque = net_torque(force)
        _write_meta(
            args=args,
            outdir=outdir,
            scenario=scenario,
            extra={
                "pair_margin": report.pair_margin,
                "wall_margin": report.wall_margin,
                "net_torque": torque,
            },
        )
    return 0


def _cmd_simulate(args):
    scenario = _load(args.config)
    store = scenario.field_every if scenario.field_every > 0 else None
    traj = simulate(scenario, store_every=store)
    outdir = _outdir(args)
    _write_trajectory(outdir, traj)
    for step, field in traj.snapshots:
        _write_field(outdir, step, traj.times[step], field)
    _write_meta(
        args=args,
        outdir=outdir,
        scenario=scenario,
        extra={
            **_halt_info(traj),
            "steps": len(traj.times) - 1,
            "max_divergence_rel": float(traj.max_divergence_rel),
            "outputs": ["trajectory.csv"]
            + [f"field_{step:06d}.csv" for step, _ in traj.snapshots],
        },
    )
    if traj.halted:
        print(f"run halted at t={traj.halt_time:.6g} ({traj.halt_cause}); "
              "partial trajectory written")
    return 0


def _split_gain(scenario):
    controls = scenario.controls(0.0)
    gain = float(np.linalg.norm(controls))
    if gain == 0.0:
        raise ConfigError(
            "micromotion needs a nonzero constant control vector", key="controls"
        )
    return gain, controls / gain


def _cmd_micromotion(args):
    scenario = _load(args.config)
    gain, amplitudes = _split_gain(scenario)
    if args.gain is not None:
        gain = args.gain
    horizon = args.time if args.time is not None else scenario.horizon
    predicted = micromotion_predict(
        scenario.state0,
        scenario.shapes,
        scenario.domain,
        amplitudes,
        gain=gain,
        t=horizon,
    )
    traj = simulate(scenario.with_controls(gain * amplitudes).with_horizon(horizon))
    simulated = traj.positions[-1]
    start = scenario.state0.positions
    outdir = _outdir(args)
    dim = scenario.domain.dim
    rows = []
    for i in range(start.shape[0]):
        dp = predicted[i] - start[i]
        ds = simulated[i] - start[i]
        rows.append(
            [i]
            + list(dp)
            + list(ds)
            + [float(np.linalg.norm(dp)), float(np.linalg.norm(ds))]
        )
    _write_csv(
        outdir / "micromotion.csv",
        ["part"]
        + [f"predicted_d{_AXES[a]}" for a in range(dim)]
        + [f"simulated_d{_AXES[a]}" for a in range(dim)]
        + ["predicted_norm", "simulated_norm"],
        rows,
    )
    _write_meta(
        args=args,
        outdir=outdir,
        scenario=scenario,
        extra={**_halt_info(traj), "gain": gain, "time": horizon,
               "amplitudes": amplitudes},
    )
    return 0


def _cmd_sensitivity(args):
    scenario = _load(args.config)
    baseline = baseline_run(scenario)
    sens = linearized_solve(baseline, control=args.control)
    n = scenario.state0.n
    parts = range(n) if args.part is None else [args.part]
    dim = scenario.domain.dim
    psi_rows, kernel_rows, anorms = [], [], {}
    for i in parts:
        kernel = volterra_kernel(baseline, i)
        anorms[str(i)] = {
            "anorm": kernel.anorm,
            "contraction_ok": kernel.contraction_ok,
        }
        disp = displacement_sensitivity(sens, part=i, kernel=kernel)
        for k, t in enumerate(baseline.times):
            psi_rows.append([i, t] + list(disp.psi[k]))
            kernel_rows.append([i, t] + list(kernel.values[k].reshape(-1)))
    _outdir(args)
    outdir = Path(args.out)
    _write_csv(
        outdir / "psi.csv",
        ["part", "t"] + [f"psi_{_AXES[a]}" for a in range(dim)],
        psi_rows,
        comments=[f"endpoint sensitivity to control {args.control}"],
    )
    _write_csv(
        outdir / "kernel.csv",
        ["part", "t"]
        + [f"K_{_AXES[a]}{_AXES[b]}" for a in range(dim) for b in range(dim)],
        kernel_rows,
    )
    _write_meta(
        args=args,
        outdir=outdir,
        scenario=scenario,
        extra={"control": args.control, "kernels": anorms,
               **_halt_info(baseline)},
    )
    return 0


def _parse_indices(text):
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad control indices {text!r}") from exc


def _parse_point(text, dim):
    try:
        point = np.array([float(p) for p in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad coordinate list {text!r}") from exc
    if point.shape != (dim,):
        raise ConfigError(f"expected {dim} coordinates, got {point.size}")
    return point


def _cmd_reach(args):
    scenario = _load(args.config)
    indices = _parse_indices(args.indices)
    atlas = reachability_map(
        scenario,
        args.part,
        indices,
        gain=args.gain,
        samples=args.samples,
        horizon=args.horizon,
        jobs=args.jobs,
    )
    outdir = _outdir(args)
    dim = scenario.domain.dim
    m = atlas.controls.shape[1]
    rows = []
    for s in range(len(atlas.endpoints)):
        rows.append(
            [s]
            + list(atlas.directions[s])
            + list(atlas.controls[s])
            + list(atlas.endpoints[s])
            + [bool(atlas.halted[s])]
        )
    _write_csv(
        outdir / "atlas.csv",
        ["sample"]
        + [f"dir_{k}" for k in range(atlas.directions.shape[1])]
        + [f"v_{j}" for j in range(1, m + 1)]
        + [f"end_{_AXES[a]}" for a in range(dim)]
        + ["halted"],
        rows,
    )
    _write_meta(
        args=args,
        outdir=outdir,
        scenario=scenario,
        extra={
            "part": args.part,
            "indices": list(indices),
            "gain": args.gain,
            "horizon": atlas.horizon,
            "drift_endpoint": atlas.drift_endpoint,
            "degenerate": atlas.degenerate,
            "winding": atlas.winding,
            "simple": atlas.simple,
            "coverage": atlas.coverage,
            "covered": atlas.covered,
            "certified": atlas.certified,
            "inradius": atlas.inradius,
            "diameter": atlas.diameter,
        },
    )
    return 0


def _cmd_steer(args):
    scenario = _load(args.config)
    indices = _parse_indices(args.indices)
    target = _parse_point(args.target, scenario.domain.dim)
    m = 2 * scenario.state0.n - 3
    baseline = simulate(scenario.with_controls(np.zeros(m)), store_every=1)
    jacobian = jacobian_matrix(baseline, args.part, indices)
    tol = args.tol
    if tol is None:
        drift = tracked_endpoint(baseline, args.part)
        tol = 0.02 * float(np.linalg.norm(target - drift))
    result = steer(
        scenario,
        args.part,
        indices,
        target,
        tol=tol,
        max_iter=args.max_iter,
        jacobian=jacobian,
    )
    outdir = _outdir(args)
    _write_json(
        outdir / "steering.json",
        {
            "target": result.target,
            "controls": result.controls,
            "endpoint": result.endpoint,
            "iterations": result.iterations,
            "residual": result.residual,
            "history": result.history,
            "tolerance": tol,
            "jacobian": jacobian.matrix,
        },
    )
    _write_meta(
        args=args,
        outdir=outdir,
        scenario=scenario,
        extra={"part": args.part, "indices": list(indices), "tolerance": tol},
    )
    return 0


def _cmd_projlab(args):
    direction = np.array([float(p) for p in args.direction.split(",")])
    dim = direction.size
    if args.shape == "rectangle":
        if dim != 2:
            raise ConfigError("rectangle sweeps are two-dimensional")
        shape = BodyShape.rectangle(args.p, args.q)
    elif args.shape == "disc":
        shape = BodyShape.disc(args.size)
    else:
        shape = BodyShape.ball(args.size)
    expected = 2 if args.shape != "ball" else 3
    if dim != expected:
        raise ConfigError(
            f"direction needs {expected} components for shape {args.shape!r}"
        )
    sizes, shapes, domains, centers = [], [], [], []
    for k in range(args.ladder):
        scale = 2.0 ** (args.ladder - 1 - k)
        extent = args.extent / scale
        cells = args.cells // int(scale)
        if cells * int(scale) != args.cells:
            raise ConfigError("cells must be divisible by the ladder scaling")
        domains.append(DomainSpec((extent,) * dim, (cells,) * dim, 1.0))
        shapes.append(shape)
        centers.append((extent / 2.0,) * dim)
        sizes.append(shape.circumscribed_radius / extent)
    sweep = asymptotic_sweep(sizes, shapes, domains, centers, direction)
    outdir = _outdir(args)
    rows = [
        [row.size] + list(row.vector) + [row.ratio]
        for row in sweep.rows
    ]
    _write_csv(
        outdir / "sweep.csv",
        ["size"] + [f"avg_{_AXES[a]}" for a in range(dim)] + ["ratio"],
        rows,
        comments=["size = circumscribed radius / domain extent"],
    )
    _write_meta(
        args=args,
        outdir=outdir,
        extra={
            "shape": args.shape,
            "direction": direction,
            "limit_vector": sweep.limit_vector,
            "limit_ratio": sweep.limit_ratio,
            "rate": sweep.rate,
        },
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="swimlab",
        description="numerical laboratory for swimmer-in-fluid control experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, help_text, needs_out=True, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="scenario TOML file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("validate", _cmd_validate, "check a scenario configuration",
            needs_out=False)
    p.add_argument("--out", help="optional directory for force diagnostics")

    add("simulate", _cmd_simulate, "run the coupled solver")

    p = add("micromotion", _cmd_micromotion,
            "small-time predicted vs simulated displacements")
    p.add_argument("--gain", type=float, help="control magnitude override")
    p.add_argument("--time", type=float, help="horizon override")

    p = add("sensitivity", _cmd_sensitivity,
            "linearized control sensitivities and displacement solves")
    p.add_argument("--control", type=int, required=True,
                   help="control index (1-based)")
    p.add_argument("--part", type=int, help="restrict to one part")

    p = add("reach", _cmd_reach, "endpoint atlas of a constant-control ring")
    p.add_argument("--indices", required=True,
                   help="comma-separated control indices")
    p.add_argument("--part", type=int,
                   help="tracked part (default: center of mass)")
    p.add_argument("--gain", type=float, required=True, help="ring radius")
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--horizon", type=float, help="horizon override")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel sample evaluations (default 1)")

    p = add("steer", _cmd_steer, "Newton steering to a target endpoint")
    p.add_argument("--indices", required=True)
    p.add_argument("--part", type=int)
    p.add_argument("--target", required=True, help="comma-separated target point")
    p.add_argument("--tol", type=float,
                   help="residual tolerance (default: 2%% of target distance)")
    p.add_argument("--max-iter", type=int, default=10)

    p = add("projlab", _cmd_projlab, "averaged-projection asymptotic sweeps",
            needs_config=False)
    p.add_argument("--shape", choices=("disc", "rectangle", "ball"),
                   default="disc")
    p.add_argument("--size", type=float, default=1.0 / 64.0,
                   help="disc/ball radius")
    p.add_argument("--p", type=float, default=1.0 / 16.0,
                   help="rectangle long side")
    p.add_argument("--q", type=float, default=1.0 / 256.0,
                   help="rectangle short side")
    p.add_argument("--direction", default="1,0",
                   help="force direction components")
    p.add_argument("--ladder", type=int, default=3)
    p.add_argument("--cells", type=int, default=256,
                   help="cells per axis on the finest row")
    p.add_argument("--extent", type=float, default=1.0,
                   help="domain extent on the largest row")

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version, 2 for usage problems
        return 0 if exc.code == 0 else _USAGE_EXIT
    args._argv = list(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SwimLabError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
