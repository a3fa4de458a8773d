"""Command-line interface: ``randnoma {analyze,simulate,optimize,validate}``.

Settings resolve as: command-line flag > ``--config`` file > built-in
default.  ``RANDNOMA_SEED`` replaces the built-in default seed.  SNRs are
given in dB.  Exit codes: 0 success, 1 failed check, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import __version__
from .channel import AnalyticalDomainError, ParameterError, SystemConfig
from .markov import analytical_sum_rate, event_probabilities
from .optimizer import (
    GridSpec,
    grid_search_analytical,
    grid_search_simulated,
    sweep_k,
    write_table,
    SWEEP_SCHEMES,
    _fmt,
)
from .simulator import run_monte_carlo
from . import validation

SEED_ENV = "RANDNOMA_SEED"

# flag dest -> SystemConfig field
CONFIG_FLAGS = {
    "users": "K",
    "snr_db": "snr_db",
    "p": "p",
    "rate": "R",
    "slots": "n_slots",
    "experiments": "n_experiments",
    "seed": "seed",
    "scheme": "scheme",
}


class UsageError(Exception):
    pass


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines keyed by SystemConfig field names."""
    types = {f.name: f.type for f in fields(SystemConfig)}
    casts = {"int": int, "float": float, "str": str}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = casts[types[key]](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_config(args: argparse.Namespace) -> SystemConfig:
    values = asdict(SystemConfig())
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for flag, name in CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        return SystemConfig(**values)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _grid_from_args(args, base: GridSpec) -> GridSpec:
    overrides = {
        k: getattr(args, k)
        for k in ("p_min", "p_max", "p_step", "R_min", "R_max", "R_step", "refinement_rounds", "refinement_shrink")
        if getattr(args, k, None) is not None
    }
    try:
        return replace(base, **overrides)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, out: str | None, manifest: dict, started: float) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)
        manifest["outputs"] = [out]
        manifest["wall_clock_s"] = round(time.perf_counter() - started, 3)
        Path(out + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest(command: str, argv: list[str], config: dict) -> dict:
    return {"command": command, "argv": argv, "config": config, "seed": config.get("seed"),
            "version": __version__}


def cmd_analyze(args, argv) -> int:
    started = time.perf_counter()
    config = resolve_config(args)
    B = config.B
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("p", "R", "T", "Rs"))
    try:
        if args.grid:
            grid = _grid_from_args(args, GridSpec.default_analytical(config.snr_db, refinement_rounds=0))
            for p in grid.p_values():
                for R in grid.R_values():
                    T, Rs = analytical_sum_rate(float(p), float(R), B)
                    w.writerow((_fmt(float(p)), _fmt(float(R)), _fmt(T), _fmt(Rs)))
        else:
            T, Rs = analytical_sum_rate(config.p, config.R, B)
            w.writerow((_fmt(config.p), _fmt(config.R), _fmt(T), _fmt(Rs)))
    except AnalyticalDomainError as exc:
        raise UsageError(f"analytical model unavailable: {exc}") from None
    cfg = {"snr_db": config.snr_db, "p": config.p, "R": config.R, "grid": bool(args.grid)}
    _emit(buf.getvalue(), args.out, _manifest("analyze", argv, cfg), started)
    return 0


def cmd_simulate(args, argv) -> int:
    started = time.perf_counter()
    config = resolve_config(args)
    res = run_monte_carlo(config, workers=args.workers)
    record = {"K": config.K, "snr_db": config.snr_db, "p": config.p, "R": config.R,
              "n_slots": config.n_slots, "n_experiments": config.n_experiments,
              "seed": config.seed, "scheme": config.scheme}
    for name in res.mean:
        record[name] = res.mean[name]
        record[name + "_stderr"] = res.stderr[name]
    if args.format == "json":
        text = json.dumps(record, sort_keys=True) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(record.keys())
        w.writerow(_fmt(v) for v in record.values())
        text = buf.getvalue()
    else:
        lines = [f"K={config.K} B={config.snr_db:g} dB p={config.p:g} R={config.R:g} "
                 f"scheme={config.scheme} slots={config.n_slots} experiments={config.n_experiments} "
                 f"seed={config.seed}"]
        for name in res.mean:
            se = res.stderr[name]
            se_txt = "n/a" if se is None else f"{se:.6f}"
            lines.append(f"  {name:<24} {res.mean[name]:.6f} +- {se_txt}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out, _manifest("simulate", argv, asdict(config)), started)
    return 0


def cmd_optimize(args, argv) -> int:
    started = time.perf_counter()
    config = resolve_config(args)
    try:
        if args.sweep:
            K_list = [int(k) for k in args.sweep.split(",")]
            grid = _grid_from_args(args, GridSpec.default_simulated(config.snr_db))
            rows = sweep_k(config, K_list, args.schemes.split(","), grid, workers=args.workers)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("K", "scheme", "p_star", "R_star", "Rs_star", "stderr"))
            for r in rows:
                w.writerow((r.K, r.scheme, _fmt(r.p_star), _fmt(r.R_star), _fmt(r.Rs_star), _fmt(r.stderr)))
            _emit(buf.getvalue(), args.out, _manifest("optimize", argv, asdict(config)), started)
            return 0
        if args.simulated:
            grid = _grid_from_args(args, GridSpec.default_simulated(config.snr_db))
            res = grid_search_simulated(config, grid, workers=args.workers)
        else:
            if config.K != 2:
                raise UsageError("the analytical backend covers K = 2 only; use --simulated")
            grid = _grid_from_args(args, GridSpec.default_analytical(config.snr_db))
            res = grid_search_analytical(config.snr_db, grid)
    except AnalyticalDomainError as exc:
        raise UsageError(f"analytical model unavailable: {exc}") from None
    row = res.as_row(config.K, config.snr_db)
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in row.items())
    manifest = _manifest("optimize", argv, {**asdict(config), "grid": asdict(grid)})
    if args.table:
        write_table([row], args.table)
        manifest["outputs"] = [args.table]
        manifest["wall_clock_s"] = round(time.perf_counter() - started, 3)
        Path(args.table + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _emit(text, args.out, manifest, started)
    return 0


def _sign_flipped_col2(p, R, B):
    """Closed form with the sign of the second term of E^Col_2 flipped (mutation fixture)."""
    ev = event_probabilities(p, R, B)
    return replace(ev, col2=ev.col2 + 2 * ev.E22)


def cmd_validate(args, argv) -> int:
    started = time.perf_counter()
    closed_form = _sign_flipped_col2 if args.inject_fault else event_probabilities
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0))
    checks = validation.run_all(
        n_samples=args.samples, hist_slots=args.hist_slots, seed=seed, closed_form=closed_form
    )
    report = {"passed": all(c.passed for c in checks), "checks": [c.as_dict() for c in checks]}
    if args.format == "json":
        text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    else:
        text = "".join(
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}  "
            + "  ".join(f"{k}={_fmt(v)}" for k, v in c.stats.items() if not isinstance(v, (list, dict)))
            + "\n"
            for c in checks
        )
    _emit(text, args.out, _manifest("validate", argv, {"seed": seed, "samples": args.samples}), started)
    return 0 if report["passed"] else 1


def _add_system_flags(sp, *, users=True, sim=True):
    sp.add_argument("--config", help="file of 'key = value' lines (SystemConfig field names)")
    sp.add_argument("--snr-db", dest="snr_db", type=float, help="average received SNR B in dB")
    sp.add_argument("--p", type=float, help="transmission probability in (0, 1]")
    sp.add_argument("--rate", type=float, help="encoding rate R in bits/symbol")
    if users:
        sp.add_argument("--users", type=int, help="number of users K")
    if sim:
        sp.add_argument("--slots", type=int, help="slots per experiment")
        sp.add_argument("--experiments", type=int, help="Monte Carlo experiments")
        sp.add_argument("--seed", type=int, help=f"base seed (default: ${SEED_ENV} or 0)")
        sp.add_argument("--scheme", choices=("cross-slot", "intra-only"))
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
    sp.add_argument("--out", help="also write the output to this file (plus a .manifest.json)")


def _add_grid_flags(sp):
    for name in ("p_min", "p_max", "p_step", "R_min", "R_max", "R_step", "refinement_shrink"):
        sp.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    sp.add_argument("--refinement-rounds", dest="refinement_rounds", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randnoma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("analyze", help="closed-form two-user throughput and sum rate")
    _add_system_flags(sp, users=False, sim=False)
    sp.add_argument("--grid", action="store_true", help="evaluate the full (p, R) grid")
    _add_grid_flags(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="Monte Carlo metrics for one operating point")
    _add_system_flags(sp)
    sp.add_argument("--format", choices=("text", "json", "csv"), default="text")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("optimize", help="grid-search the sum-rate optimum")
    _add_system_flags(sp)
    backend = sp.add_mutually_exclusive_group()
    backend.add_argument("--analytical", action="store_true", help="closed-form backend (K = 2, default)")
    backend.add_argument("--simulated", action="store_true", help="Monte Carlo backend")
    backend.add_argument("--sweep", metavar="K1,K2,...", help="simulated optimum per K and scheme")
    sp.add_argument("--schemes", default=",".join(SWEEP_SCHEMES), help="schemes for --sweep")
    sp.add_argument("--table", help="write the result as a lookup-table CSV")
    _add_grid_flags(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("validate", help="run the oracle checks")
    sp.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo slots per parameter triple")
    sp.add_argument("--hist-slots", dest="hist_slots", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (UsageError, ParameterError) as exc:
        print(f"randnoma {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
