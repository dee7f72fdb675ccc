"""Command-line front end.

Subcommands: ``efficiency``, ``sweep``, ``dynamics``, ``ga`` and ``figure``.
Every run writes its outputs plus ``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or
undefined efficiency.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_from_document, dump_config, load_config, load_document
from .coupling import SingularGeometryError
from .experiments import ResultCache, SweepAxis, SweepSpec, dynamics_report, log_grid, sweep
from .flux import UndefinedEfficiencyError, efficiency
from .solvers import SolverError, StiffnessError, log_time_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


@dataclass
class RunManifest:
    command: list
    config_hash: str | None = None
    seed: int | None = None
    code_version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        path = out_dir / "manifest.json"
        names = sorted({str(Path(p).resolve().relative_to(out_dir.resolve())) for p in self.outputs})
        payload = asdict(self)
        payload["outputs"] = names
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return path


# --------------------------------------------------------------------------
# subcommands


def cmd_efficiency(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    man = RunManifest(command=sys.argv, config_hash=config.config_hash())
    res = efficiency(config)
    print(f"chi = {res.chi:.6g}")
    print(f"E   = {res.E:.6g}  (hbar*omega*gamma0)")
    print(f"E0  = {res.E0:.6g}  (hbar*omega*gamma0)")
    print(f"P   = {res.P:.6g}  (hbar*omega*gamma0)")
    man.outputs += [
        _write_json(out / "efficiency.json", res.to_dict()),
        dump_config(config, out / "config.toml"),
    ]
    man.write(out)
    return EXIT_OK


def _axis_from_doc(entry: dict, i: int) -> SweepAxis:
    where = f"sweep.axis[{i}]"
    if "name" not in entry:
        raise ConfigError(f"{where}.name", "missing required field")
    if "values" in entry:
        values = entry["values"]
    else:
        try:
            lo, hi, num = float(entry["min"]), float(entry["max"]), int(entry["num"])
        except KeyError as exc:
            raise ConfigError(f"{where}.{exc.args[0]}", "missing required field (or give values)") from exc
        spacing = entry.get("spacing", "log")
        if spacing == "log":
            values = log_grid(lo, hi, num)
        elif spacing == "linear":
            values = tuple(np.linspace(lo, hi, num))
        else:
            raise ConfigError(f"{where}.spacing", "expected 'log' or 'linear'")
    try:
        return SweepAxis(entry["name"], tuple(values))
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


def cmd_sweep(args) -> int:
    doc = load_document(args.config)
    base = config_from_document(doc)
    sec = doc.get("sweep")
    if not isinstance(sec, dict) or not sec.get("axis"):
        raise ConfigError("sweep.axis", "missing required field")
    axes = tuple(_axis_from_doc(e, i) for i, e in enumerate(sec["axis"]))
    try:
        spec = SweepSpec(base, axes, outputs=tuple(sec.get("outputs", ["chi"])))
    except ValueError as exc:
        raise ConfigError("sweep", str(exc)) from exc
    out = _out_dir(args)
    man = RunManifest(command=sys.argv, config_hash=base.config_hash())
    cache = ResultCache(out / "cache.sqlite")
    try:
        res = sweep(spec, workers=args.threads, cache=cache)
    finally:
        cache.close()
    cols = ["chi", "E", "E0", "P"]
    if "delta" in spec.outputs:
        first = next((r for r in res.records if r.ok), None)
        cols += [k for k in (first.result["delta"] if first else {}) if k not in cols]
    scale = {a.name: 1e-6 for a in axes if a.name.startswith("d")}
    man.outputs += [res.write_csv(out / "sweep.csv", columns=cols, scale=scale), dump_config(base, out / "config.toml")]
    man.extra = {"spec": spec.to_dict(), "provenance": res.provenance, "failed_points": res.n_failed}
    man.write(out)
    print(f"{len(res.records)} points, {res.n_failed} failed, max chi = {np.nanmax(res.grid('chi')):.6g}")
    return EXIT_OK


def cmd_dynamics(args) -> int:
    doc = load_document(args.config)
    config = config_from_document(doc)
    sec = doc.get("dynamics", {})
    t_grid = log_time_grid(
        float(sec.get("t_min", 1e-4)), float(sec.get("t_max", 1e4)), int(sec.get("per_decade", 10))
    )
    out = _out_dir(args)
    man = RunManifest(command=sys.argv, config_hash=config.config_hash())
    rep = dynamics_report(config, t_grid, method=sec.get("method", "expm"))
    man.outputs += [rep.write_csv(out / "trajectory.csv"), dump_config(config, out / "config.toml")]
    man.extra = {"initial_state": "gibbs", "n_times": len(t_grid), "frame": "rotating"}
    man.write(out)
    eff = rep.efficiency
    print(f"{len(t_grid)} times; final chi = {eff.chi[-1]:.6g}")
    return EXIT_OK


def cmd_ga(args) -> int:
    from .ga import GAConfig, base_chain, optimize, write_report

    if args.config:
        doc = load_document(args.config)
        base = config_from_document(doc)
        ga_sec = dict(doc.get("ga", {}))
    else:
        base, ga_sec = base_chain(5), {}
    if args.seed is not None:
        ga_sec["seed"] = args.seed
    if args.tolerance is not None:
        ga_sec["convergence_tol"] = args.tolerance
    if "bounds" in ga_sec:
        ga_sec["bounds"] = tuple(ga_sec["bounds"])
    try:
        ga = GAConfig(**ga_sec)
    except TypeError as exc:
        raise ConfigError("ga", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("ga", str(exc)) from exc
    out = _out_dir(args)
    man = RunManifest(command=sys.argv, config_hash=base.config_hash(), seed=ga.seed)
    log = out / "ga_log.jsonl"
    res = optimize(ga, base, workers=args.threads, log_path=log)
    man.outputs += [log, write_report(res, out / "ga_report.json"), dump_config(base, out / "config.toml")]
    man.extra = {"ga": asdict(ga)}
    man.write(out)
    row = res.table_row()
    genes = "  ".join(f"{k}={v}" for k, v in row.items() if k.startswith("d"))
    print(f"N={row['N']}  {genes}  chi={row['chi']}  converged={res.converged} after {res.generations} generations")
    return EXIT_OK


def cmd_figure(args) -> int:
    from .figures import FIGURES, generate

    if args.figure_id not in FIGURES:
        raise ConfigError("figure_id", f"unknown figure {args.figure_id!r}; choose from {', '.join(FIGURES)}")
    out = _out_dir(args)
    man = RunManifest(command=sys.argv)
    cache = ResultCache(out / "cache.sqlite")
    try:
        paths, meta = generate(args.figure_id, out, quick=args.quick, workers=args.threads, cache=cache)
    finally:
        cache.close()
    man.outputs += paths
    man.extra = meta
    man.write(out)
    if args.figure_id == "table1-check":
        for r in meta["rows"]:
            print(f"N={r['N']}  genome(um)={r['genome_um']}  chi={r['chi']:.4f}  reference={r['chi_reference']}  deviation={100 * r['rel_deviation']:+.3f}%")
    else:
        for p in paths:
            print(p)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="random seed (ga)")
        p.add_argument("--threads", type=int, default=None, help="cap on worker processes")
        p.add_argument("--tolerance", type=float, default=None, help="convergence tolerance (ga)")

    p = sub.add_parser("efficiency", help="stationary efficiency of one configuration")
    common(p)
    p.set_defaults(func=cmd_efficiency)
    p = sub.add_parser("sweep", help="efficiency over a one- or two-axis grid")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("dynamics", help="time series of populations, fluxes and chi(t)")
    common(p)
    p.set_defaults(func=cmd_dynamics)
    p = sub.add_parser("ga", help="genetic search over the gaps after the triplet")
    common(p, config_required=False)
    p.set_defaults(func=cmd_ga)
    p = sub.add_parser("figure", help="data files for one figure")
    p.add_argument("figure_id")
    common(p, config_required=False)
    p.add_argument("--quick", action="store_true", help="coarse grids for a fast smoke run")
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SingularGeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UndefinedEfficiencyError, SolverError, StiffnessError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
