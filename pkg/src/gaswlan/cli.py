"""Command line entry point: ``gaswlan run|sweep|verify|calc|schema|list``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .analytic import cw_opt_approx, optimal_point
from .harness import emit, replicate, run, run_sweep, sweep_rows
from .phy import PhyProfile
from .scenario import ScenarioError, bundled, bundled_names, json_schema, load_scenarios


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and path in bundled_names():
        return bundled(path)
    return p


def _target(out, name: str, fmt: str, many: bool):
    if out is None or out == "-":
        return None
    p = Path(out)
    if many or p.is_dir():
        return p / f"{name}.{fmt}"
    return p


def _write(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    specs = load_scenarios(_resolve(args.scenario))
    if args.name:
        specs = [s for s in specs if s.name == args.name]
        if not specs:
            raise ScenarioError([("name", f"no scenario named {args.name!r}")], args.scenario)
    many = len(specs) > 1
    for spec in specs:
        if spec.sweep is not None:
            _sweep_one(spec, args, many)
            continue
        target = _target(args.out, spec.name, args.format, many)
        if args.replications > 1:
            out = replicate(spec, args.replications, args.seed, args.fidelity)
        else:
            out = run(spec, args.seed, args.fidelity)
        _write(emit(out, args.format, target), target)
    return 0


def _sweep_one(spec, args, many):
    results = run_sweep(spec, args.seed, args.fidelity, args.replications if args.replications > 1 else None)
    target = _target(args.out, spec.name, args.format, many)
    if args.format == "csv":
        text = sweep_rows(results)
    else:
        text = json.dumps({
            "metadata": {"scenario": spec.to_dict(), "seed": spec.seed if args.seed is None else args.seed, "version": __version__},
            "results": [{"m": r.m, "aifs_slots": r.aifs_slots, "txop_packets": r.txop_packets, "best_cw": r.cw,
                         "best_throughput_bps": r.throughput, "curve": r.curve, "extra": r.extra} for r in results],
        }, indent=1, sort_keys=True, default=float) + "\n"
    if target is not None:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    _write(text, target)


def cmd_sweep(args) -> int:
    specs = load_scenarios(_resolve(args.scenario))
    specs = [s for s in specs if s.sweep is not None and (not args.name or s.name == args.name)]
    if not specs:
        raise ScenarioError([("sweep", "file defines no scenario with a sweep block")], args.scenario)
    for spec in specs:
        _sweep_one(spec, args, len(specs) > 1)
    return 0


def cmd_verify(args) -> int:
    from .oracle import default_suite

    results = default_suite(quick=args.quick)
    lines = [json.dumps(r.to_dict(), sort_keys=True, default=float) for r in results]
    table = "\n".join(r.line() for r in results)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    sys.stderr.write(table + "\n")
    return 0 if all(r.passed for r in results) else 1


def _phy_from_args(args) -> PhyProfile:
    phy = PhyProfile.ieee80211g(payload_bytes=args.payload_bytes)
    return phy.with_overrides(T_e=args.T_e, T_t=args.T_t, l=args.l, T_beacon=args.T_beacon)


def cmd_calc(args) -> int:
    phy = _phy_from_args(args)
    rows = []
    for n in args.n:
        opt = optimal_point(n, phy)
        d = opt.to_dict()
        d["cw_opt_approx"] = cw_opt_approx(n, phy)
        d["gamma_default"] = opt.gamma_default
        rows.append(d)
    if args.format == "json":
        sys.stdout.write(json.dumps({"phy": phy.to_dict(), "points": rows}, indent=1, sort_keys=True) + "\n")
    else:
        cols = ("n", "tau_opt", "cw_opt", "cw_opt_approx", "r_opt", "gamma_max", "gamma_max_theorem", "gamma_default")
        sys.stdout.write(",".join(cols) + "\n")
        for d in rows:
            sys.stdout.write(",".join(repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in cols) + "\n")
    return 0


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(json_schema(), indent=1) + "\n")
    return 0


def cmd_list(args) -> int:
    for name in bundled_names():
        sys.stdout.write(f"{name}\t{bundled(name)}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaswlan", description="Contention-window adaptation simulator and checkers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
        sp.add_argument("--name", help="only the scenario with this name")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--fidelity", choices=("meanfield", "slot"), default=None)
        sp.add_argument("--out", default=None, help="output file (or directory when the file holds several scenarios)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--replications", type=int, default=1)

    r = sub.add_parser("run", help="run scenarios and write their time series")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="best-static-response sweeps (selfish CW grids)")
    common(s)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the checker suite; one JSON result per line")
    v.add_argument("--quick", action="store_true", help="smaller sample counts")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("calc", help="optimal point and gain ceiling for given station counts")
    c.add_argument("--n", type=int, nargs="+", required=True)
    c.add_argument("--payload-bytes", type=int, default=1500)
    c.add_argument("--T-e", dest="T_e", type=float, default=None)
    c.add_argument("--T-t", dest="T_t", type=float, default=None)
    c.add_argument("--l", type=float, default=None)
    c.add_argument("--T-beacon", dest="T_beacon", type=float, default=None)
    c.add_argument("--format", choices=("csv", "json"), default="csv")
    c.set_defaults(func=cmd_calc)

    sc = sub.add_parser("schema", help="print the scenario-file JSON schema")
    sc.set_defaults(func=cmd_schema)
    ls = sub.add_parser("list", help="list bundled scenario files")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "replications", 1) < 1:
            raise ValueError("--replications must be >= 1")
        return args.func(args)
    except BrokenPipeError:
        return 0
    except ScenarioError as e:
        sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
        return 2
    except (ValueError, OSError) as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
