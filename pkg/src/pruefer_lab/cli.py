"""Command-line front end: one subcommand per experiment kind plus `report`."""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, parse_config
from .errors import ConfigParseError, ConfigValidationError, PrueferLabError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pruefer-lab",
        description="Level-statistics laboratory for 1D operators with decaying random potential",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="TOML config path")
        sp.add_argument("--seed", type=int, default=None, help="override run.master_seed")
        sp.add_argument("--replicas", type=int, default=None, help="override run.replicas")
        sp.add_argument("--workers", type=int, default=None,
                        help="override run.workers (default: PRUEFER_LAB_WORKERS or 1)")
        sp.add_argument("--out", default=None, help="override run.output_dir")
        sp.add_argument("--check", action="store_true",
                        help="exit nonzero when any acceptance check fails")
    rp = sub.add_parser("report", help="merge manifests into one report with figures")
    rp.add_argument("manifests", nargs="+", help="manifest.json paths")
    rp.add_argument("--out", required=True, help="report output directory")
    rp.add_argument("--pool", action="store_true",
                    help="require all manifests to be shards of one experiment")
    rp.add_argument("--check", action="store_true", help="exit nonzero on any failed check")
    return p


def _load_config(args, kind):
    with open(args.config) as fh:
        text = fh.read()
    from .config import validate_config

    try:
        import tomllib as toml
    except ModuleNotFoundError:
        import tomli as toml
    try:
        raw = toml.loads(text)
    except toml.TOMLDecodeError as exc:
        raise ConfigParseError(str(exc)) from exc
    if raw.get("kind") is None:
        raw["kind"] = kind
    elif raw["kind"] != kind:
        raise ConfigValidationError(
            [f"kind: config says {raw['kind']!r} but subcommand is {kind!r}"])
    run = raw.setdefault("run", {})
    if args.seed is not None:
        run["master_seed"] = args.seed
    if args.replicas is not None:
        run["replicas"] = args.replicas
    if args.workers is not None:
        run["workers"] = args.workers
    if args.out is not None:
        run["output_dir"] = args.out
    return validate_config(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            from .report import report

            doc = report(args.manifests, args.out, pool=args.pool)
            n_fail = sum(1 for s in doc["sections"] for c in s["checks"] if not c["pass"])
            print(f"report: {doc['n_checks']} checks, {n_fail} failed -> {args.out}/report.json")
            if args.check and not doc["pass"]:
                return 2
            return 0
        cfg = _load_config(args, args.command)
        from .runner import checks_passed, run_experiment

        manifest = run_experiment(cfg)
        print(
            f"{args.command}: {cfg.run['replicas']} replicas, "
            f"{manifest['failed_count']} failed, "
            f"{manifest['wall_time_s']:.1f}s -> {manifest['path']}"
        )
        if args.check and not checks_passed(manifest):
            print("checks: FAIL", file=sys.stderr)
            return 2
        return 0
    except ConfigParseError as exc:
        loc = f" (line {exc.line}, column {exc.column})" if exc.line else ""
        print(f"config parse error{loc}: {exc}", file=sys.stderr)
        return 1
    except ConfigValidationError as exc:
        print("config validation failed:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 1
    except PrueferLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
