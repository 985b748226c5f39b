"""Command-line interface: ``run``, ``study``, ``converge`` and ``fit``.

Settings come from defaults, then an optional ``--config`` JSON document,
then explicit flags. The JSON document has the sections ``solver``,
``benchmark`` (with nested ``material`` and ``load``), ``schedule`` and
``output``, whose keys are the field names of the corresponding classes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields, replace

from ..model import MaterialParams
from ..solver import LoadCase, LoadSchedule, SolverConfig
from .benchmark import (CONVERGE_SIZES, CONVERGE_U, TABLE_PAIRS, BenchmarkSpec, converge,
                        run_benchmark, study_h_eps)
from .fit import FitError, fit_power_law

# flag dest -> (section, key)
FLAG_MAP = {
    "mode": ("solver", "mode"), "eps": ("solver", "fixed_eps"),
    "stagger_tol": ("solver", "stagger_tol"), "max_stagger_iters": ("solver", "max_stagger_iters"),
    "eps_refine": ("solver", "eps_refine"), "h_min": ("solver", "h_min"),
    "f_factor": ("solver", "f_factor"), "adaptivity": ("solver", "adaptivity"),
    "max_refine_passes": ("solver", "max_refine_passes"),
    "h": ("benchmark", "h"), "width": ("benchmark", "width"), "height": ("benchmark", "height"),
    "crack_from": ("benchmark", "crack_from"), "crack_tip": ("benchmark", "crack_tip"),
    "lam": ("material", "lam"), "mu": ("material", "mu"), "g_c": ("material", "g_c"),
    "beta": ("material", "beta"), "eta": ("material", "eta"),
    "crack_value": ("load", "crack_value"),
    "u_max": ("schedule", "u_max"), "coarse": ("schedule", "coarse"),
    "fine": ("schedule", "fine"), "switch": ("schedule", "switch"),
    "vtk_every": ("output", "vtk_every"), "stop_after_drop": ("output", "stop_after_drop"),
}
OUTPUT_KEYS = {"vtk_every": 100, "stop_after_drop": None}


class ConfigError(ValueError):
    pass


def _keys(cls):
    return {f.name for f in fields(cls)}


def _check_keys(section: str, given: dict, allowed: set) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")


def load_config(doc: dict) -> dict:
    """Split a JSON document into validated per-section dictionaries."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_keys("top level", doc, {"solver", "benchmark", "schedule", "output", "material", "load"})
    sections = {k: dict(doc.get(k, {})) for k in ("solver", "schedule", "output")}
    bench = dict(doc.get("benchmark", {}))
    sections["material"] = {**dict(doc.get("material", {})), **dict(bench.pop("material", {}))}
    sections["load"] = {**dict(doc.get("load", {})), **dict(bench.pop("load", {}))}
    sections["benchmark"] = bench
    _check_keys("solver", sections["solver"], _keys(SolverConfig))
    _check_keys("schedule", sections["schedule"], _keys(LoadSchedule))
    _check_keys("output", sections["output"], set(OUTPUT_KEYS))
    _check_keys("material", sections["material"], _keys(MaterialParams))
    _check_keys("load", sections["load"], _keys(LoadCase))
    _check_keys("benchmark", bench, _keys(BenchmarkSpec) - {"material", "load"})
    return sections


def resolve(args) -> tuple[BenchmarkSpec, SolverConfig, LoadSchedule, dict]:
    sections = {k: {} for k in ("solver", "schedule", "output", "material", "load", "benchmark")}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        sections = load_config(doc)
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            sections[section][key] = value
    try:
        material = MaterialParams(**sections["material"])
        load = LoadCase(**sections["load"])
        spec = BenchmarkSpec(**sections["benchmark"], material=material, load=load)
        solver = SolverConfig(**sections["solver"])
        schedule = LoadSchedule(**sections["schedule"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    output = {**OUTPUT_KEYS, **sections["output"]}
    return spec, solver, schedule, output


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.replace(" ", "").split(","):
        h, eps = item.split(":")
        out.append((float(h), float(eps)))
    return out


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", default=None, help="output directory")
    g = p.add_argument_group("solver")
    g.add_argument("--mode", choices=["uniform", "spatial", "fixed"])
    g.add_argument("--eps", type=float, help="length for fixed mode (mm)")
    g.add_argument("--stagger-tol", type=float)
    g.add_argument("--max-stagger-iters", type=int)
    g.add_argument("--eps-refine", type=float)
    g.add_argument("--h-min", type=float)
    g.add_argument("--f-factor", type=float)
    g.add_argument("--adaptivity", type=_bool)
    g.add_argument("--max-refine-passes", type=int)
    g = p.add_argument_group("benchmark")
    g.add_argument("--h", type=float, help="initial mesh size (mm)")
    g.add_argument("--width", type=float)
    g.add_argument("--height", type=float)
    g.add_argument("--crack-from", choices=["left", "right"])
    g.add_argument("--crack-tip", type=float)
    g.add_argument("--crack-value", type=float)
    g = p.add_argument_group("material")
    g.add_argument("--lam", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--g-c", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--eta", type=float)
    g = p.add_argument_group("schedule")
    g.add_argument("--u-max", type=float)
    g.add_argument("--coarse", type=float, help="increment below the switch load")
    g.add_argument("--fine", type=float, help="increment from the switch load on")
    g.add_argument("--switch", type=float)
    g = p.add_argument_group("output")
    g.add_argument("--vtk-every", type=int, help="snapshot interval in steps (0 disables)")
    g.add_argument("--stop-after-drop", type=float,
                   help="stop once force falls below this fraction of its peak")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptive-phasefield",
        description="Phase-field fracture with an optimised regularisation length.")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress log")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("run", help="single edge-crack benchmark run")
    _add_common(p)

    p = sub.add_parser("study", help="fixed-length runs over (h, eps) pairs")
    _add_common(p)
    p.add_argument("--pairs", type=_pairs, default=None,
                   help="comma-separated h:eps pairs (default: the five reference pairs)")

    p = sub.add_parser("converge", help="energy-vs-DOF sweep and power-law fits")
    _add_common(p)
    p.add_argument("--sizes", type=_floats, default=None,
                   help="comma-separated initial mesh sizes")
    p.add_argument("--modes", default="uniform,spatial")
    p.add_argument("--u-eval", type=float, default=CONVERGE_U)

    p = sub.add_parser("fit", help="power-law fit of energy against DOFs from a CSV file")
    p.add_argument("csv", help="file with n_dofs and energy columns (optional mode column)")
    p.add_argument("--no-strict", action="store_true",
                   help="accept energies that are not strictly decreasing")
    return parser


def _fit_csv(path: str, strict: bool) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"n_dofs", "energy"} <= set(rows[0]):
        raise ConfigError(f"{path}: need n_dofs and energy columns")
    groups: dict = {}
    for r in rows:
        groups.setdefault(r.get("mode", "all"), []).append((float(r["n_dofs"]), float(r["energy"])))
    return {m: fit_power_law(sorted(pts), strict=strict).to_dict() for m, pts in groups.items()}


def cli(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        stream=sys.stderr, format="%(message)s")

    try:
        if args.command == "fit":
            result = _fit_csv(args.csv, strict=not args.no_strict)
            print(json.dumps(result, indent=2, sort_keys=True))
            return 0
        spec, solver, schedule, output = resolve(args)
    except (ConfigError, FitError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = args.out or f"out/{args.command}"
    if args.command == "run":
        res = run_benchmark(spec, solver, schedule, out, vtk_every=output["vtk_every"],
                            stop_after_drop=output["stop_after_drop"])
        return res.status
    if args.command == "study":
        pairs = args.pairs or list(TABLE_PAIRS)
        path = study_h_eps(pairs, spec, schedule, out, base_config=solver,
                           vtk_every=output["vtk_every"] if args.vtk_every is not None else 0,
                           stop_after_drop=output["stop_after_drop"])
        print(path.read_text(), end="")
        return 0
    # converge
    sizes = args.sizes or list(CONVERGE_SIZES)
    modes = [m for m in args.modes.split(",") if m]
    sched = replace(schedule, u_max=args.u_eval) if args.u_max is None else schedule
    try:
        points, fits = converge(sizes, spec, out, modes=modes, u_eval=args.u_eval,
                                base_config=solver, schedule=sched)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({m: (f.to_dict() if hasattr(f, "to_dict") else {"error": f})
                      for m, f in fits.items()}, indent=2, sort_keys=True))
    return 0 if all(hasattr(f, "to_dict") for f in fits.values()) and points else 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
