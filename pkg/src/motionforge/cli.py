"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 truncated path, 4 semantic error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import catalog
from .constraints import ConstraintSystem, InfeasibleRealization
from .flexes import canonical_sign, find_unblocked_flex, select_flex
from .io import (
    InputError,
    dumps_json,
    frames_from_dict,
    loads_json,
    projection_csv,
    render_svg,
    system_from_dict,
    system_to_dict,
    trajectory_csv,
    trajectory_to_dict,
)
from .retraction import TrackerConfig
from .rigidity import analyze, second_order_verdict
from .tracker import track_path

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRUNCATED = 3
EXIT_SEMANTIC = 4

log = logging.getLogger("motionforge")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# argument parsing


def _tracker_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_tracker_flags(p: argparse.ArgumentParser):
    for f in dataclasses.fields(TrackerConfig):
        kind = int if f.type in (int, "int") else float
        p.add_argument(_tracker_flag(f.name), type=kind, default=None, metavar="N" if kind is int else "F",
                       help=f"tracker setting (default {f.default})")


def _add_source(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--builtin", metavar="NAME", help="named example (see 'catalog list')")
    g.add_argument("--input", metavar="FILE", help="system JSON file")


def _svg_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WIDTHxHEIGHT, e.g. 400x300") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("width and height must be positive")
    return w, h


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionforge", description="Rigidity analysis and motion tracking "
                                     "for quadratic geometric constraint systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="rank, flexes, stresses and rigidity verdicts")
    _add_source(p)
    p.add_argument("--output", metavar="FILE")
    p.add_argument("--rank-tol", type=float, default=1e-10)
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("deform", help="track a continuous motion")
    _add_source(p)
    p.add_argument("--output", metavar="FILE", help="trajectory JSON (stdout if omitted)")
    p.add_argument("--csv", metavar="FILE", help="also write the trajectory as CSV")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--flex", default="auto", help="'auto' or comma-separated basis coefficients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=64)
    _add_tracker_flags(p)

    p = sub.add_parser("contract", help="shrink or stretch one polytope edge")
    _add_source(p)
    p.add_argument("--output", metavar="FILE")
    p.add_argument("--edge", required=True, help="two 1-based vertex indices, e.g. 1,2")
    p.add_argument("--gamma", type=float, default=0.9, help="final length as a fraction of the initial one")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_tracker_flags(p)

    p = sub.add_parser("project", help="random 2-D projection of a trajectory")
    p.add_argument("--input", metavar="FILE", required=True, help="trajectory JSON")
    p.add_argument("--output", metavar="FILE")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("render", help="draw frames as SVG")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", metavar="NAME")
    g.add_argument("--input", metavar="FILE", help="system or trajectory JSON")
    p.add_argument("--output", metavar="PATH", required=True,
                   help="SVG file for a single frame, otherwise a prefix for PREFIX_NNNN.svg")
    p.add_argument("--frames", default="0", help="comma-separated frame indices (may be empty)")
    p.add_argument("--flexes", action="store_true", help="draw the first nontrivial flex as arrows")
    p.add_argument("--svg-size", type=_svg_size, default=(400, 400), metavar="WxH")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("catalog", help="list or export the named examples")
    p.add_argument("action", nargs="?", choices=["list", "show"], default="list")
    p.add_argument("name", nargs="?")
    p.add_argument("--output", metavar="FILE")
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from None


def _emit(text: str, output: Optional[str]):
    if output is None:
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {output}: {exc.strerror}", EXIT_INPUT) from None


def _check_output(output: Optional[str]):
    if output is not None:
        parent = Path(output).parent
        if not parent.is_dir():
            raise CliError(f"output directory {parent} does not exist", EXIT_INPUT)


def _load_system(args) -> tuple[ConstraintSystem, dict, Optional[float]]:
    """System, its JSON echo and the packing radius (if sticky contacts apply)."""
    if args.builtin is not None:
        try:
            system = catalog.builtin(args.builtin)
        except catalog.CatalogError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
        spec = catalog.sticky_spec_for(args.builtin)
        radius = spec.radius if spec is not None else None
        return system, system_to_dict(system, args.builtin, radius), radius
    data = loads_json(_read_text(args.input), args.input)
    if isinstance(data, dict) and "frames" in data and "system" in data:
        data = data["system"]
    system = system_from_dict(data)
    radius = data.get("packing_radius")
    return system, data, radius


def _tracker_config(args) -> TrackerConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(TrackerConfig)
                 if getattr(args, f.name, None) is not None}
    try:
        return TrackerConfig(**overrides)
    except ValueError as exc:
        raise CliError(f"invalid tracker setting: {exc}", EXIT_INPUT) from None


def _sticky_hook(system: ConstraintSystem, radius: Optional[float], config: TrackerConfig):
    if radius is None:
        return None
    spec = catalog.PackingSpec(radius, system.points())

    def hook(current, x):
        return catalog.sticky_update(spec, current, x, config)

    return hook


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    _check_output(args.output)
    system, _, _ = _load_system(args)
    report = analyze(system, args.rank_tol)
    verdict = second_order_verdict(system, report, args.restarts, args.seed)
    out = report.to_dict()
    out["second_order"] = verdict.status.value
    out["witness_flex"] = None if verdict.witness_flex is None else verdict.witness_flex.tolist()
    _emit(dumps_json(out), args.output)
    return EXIT_OK


def _parse_flex(text: str) -> Optional[list[float]]:
    if text.strip().lower() == "auto" or not text.strip():
        return None
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"--flex: expected 'auto' or numbers separated by commas, got {text!r}", EXIT_INPUT) from None


def cmd_deform(args) -> int:
    _check_output(args.output)
    _check_output(args.csv)
    if args.steps < 0 or args.step_size <= 0:
        raise CliError("--steps must be >= 0 and --step-size > 0", EXIT_INPUT)
    config = _tracker_config(args)
    coeffs = _parse_flex(args.flex)
    system, echo, radius = _load_system(args)
    report = analyze(system, config.rank_tol)
    if report.n_nontrivial == 0:
        raise CliError("no nontrivial flex: the system is infinitesimally rigid", EXIT_SEMANTIC)
    if coeffs is None:
        choice = find_unblocked_flex(system, report, args.restarts, args.seed)
        if choice is None:
            raise CliError("no unblocked nontrivial flex found", EXIT_SEMANTIC)
    else:
        try:
            choice = select_flex(report, coeffs)
        except ValueError as exc:
            raise CliError(f"--flex: {exc}", EXIT_INPUT) from None
    path = track_path(system, choice, args.steps, args.step_size, config, args.seed,
                      sticky=_sticky_hook(system, radius, config))
    data = trajectory_to_dict(path, echo)
    _emit(dumps_json(data), args.output)
    if args.csv:
        _emit(trajectory_csv(data, system.dim), args.csv)
    if path.truncated:
        log.error("path truncated: %s", path.error)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_contract(args) -> int:
    _check_output(args.output)
    config = _tracker_config(args)
    system, echo, _ = _load_system(args)
    try:
        u, v = (int(i) - 1 for i in args.edge.split(","))
    except ValueError:
        raise CliError(f"--edge: expected two indices like 1,2, got {args.edge!r}", EXIT_INPUT) from None
    if not 0 < args.gamma or args.steps < 1:
        raise CliError("--gamma must be positive and --steps at least 1", EXIT_INPUT)
    try:
        path = catalog.edge_contraction_path(system, (u, v), args.gamma, args.steps, config)
    except (catalog.CatalogError, ValueError) as exc:
        raise CliError(str(exc), EXIT_SEMANTIC) from None
    _emit(dumps_json(trajectory_to_dict(path, echo)), args.output)
    if path.truncated:
        log.error("path truncated: %s", path.error)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_project(args) -> int:
    _check_output(args.output)
    data = loads_json(_read_text(args.input), args.input)
    if not isinstance(data, dict):
        raise CliError("trajectory: expected a JSON object", EXIT_INPUT)
    if len(frames_from_dict(data)) == 0:
        raise CliError("trajectory has no frames", EXIT_SEMANTIC)
    _emit(projection_csv(data, args.seed), args.output)
    return EXIT_OK


def cmd_render(args) -> int:
    if args.builtin is not None:
        system, _, radius = _load_system(args)
        frames = [system.realization]
    else:
        data = loads_json(_read_text(args.input), args.input)
        if isinstance(data, dict) and "frames" in data:
            system = system_from_dict(_field_system(data))
            radius = data["system"].get("packing_radius")
            frames = list(frames_from_dict(data))
        else:
            system = system_from_dict(data)
            radius = data.get("packing_radius")
            frames = [system.realization]
    if system.dim not in (2, 3):
        raise CliError("only 2-D and 3-D systems can be rendered", EXIT_SEMANTIC)
    try:
        indices = [int(i) for i in args.frames.split(",") if i.strip()]
    except ValueError:
        raise CliError(f"--frames: expected comma-separated integers, got {args.frames!r}", EXIT_INPUT) from None
    for i in indices:
        if not 0 <= i < len(frames):
            raise CliError(f"--frames: frame {i} out of range 0..{len(frames) - 1}", EXIT_INPUT)
    width, height = args.svg_size
    single = len(indices) == 1 and args.output.endswith(".svg")
    for i in indices:
        x = np.asarray(frames[i], dtype=float)
        flex = None
        if args.flexes:
            try:
                rep = analyze(system.at(x, tol=1e-6))
            except InfeasibleRealization:
                raise CliError(f"frame {i} does not satisfy the constraints", EXIT_SEMANTIC) from None
            if rep.n_nontrivial:
                flex = canonical_sign(rep.nontrivial_flex_basis[:, 0])
        svg = render_svg(system, x, width, height, flex, radius)
        target = args.output if single else f"{args.output}_{i:04d}.svg"
        _check_output(target)
        _emit(svg, target)
    return EXIT_OK


def _field_system(data: dict) -> dict:
    if not isinstance(data.get("system"), dict):
        raise InputError("trajectory: missing field 'system'")
    return data["system"]


def cmd_catalog(args) -> int:
    _check_output(args.output)
    if args.action == "list":
        width = max(len(n) for n in catalog.builtin_names())
        text = "".join(f"{n:<{width}}  {catalog.describe(n)}\n" for n in catalog.builtin_names())
        _emit(text, args.output)
        return EXIT_OK
    if not args.name:
        raise CliError("catalog show: missing example name", EXIT_INPUT)
    try:
        system = catalog.builtin(args.name)
    except catalog.CatalogError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    spec = catalog.sticky_spec_for(args.name)
    _emit(dumps_json(system_to_dict(system, args.name, spec.radius if spec else None)), args.output)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "deform": cmd_deform,
    "contract": cmd_contract,
    "project": cmd_project,
    "render": cmd_render,
    "catalog": cmd_catalog,
}


def _setup_logging():
    level = os.environ.get("MOTIONFORGE_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleRealization as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
