"""Command line: ``ringsim run|sweep|bounds|verify``.

Exit codes: 0 success, 1 validation error, 2 invariant failure, 3 simulation guard.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import checks
from .config import load_config
from .errors import InvalidParameterError, SimulationGuardError
from .harness import cli_bounds, cli_run, cli_sweep, write_rows

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT, EXIT_GUARD = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ringsim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (overrides config.output)")
        p.add_argument("--seed", type=int, help="master seed override")
        if name == "sweep":
            p.add_argument("--traces", action="store_true", help="also write one trace CSV per run")

    b = sub.add_parser("bounds")
    b.add_argument("--config", help="read L/delta/sigma/p/eps from the config's theory block and taus from its workers")
    b.add_argument("--L", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=1.0)
    b.add_argument("--sigma", type=float, default=1.0)
    b.add_argument("--p", type=float, default=2.0)
    b.add_argument("--eps", type=float, default=0.1)
    b.add_argument("--taus", type=float, nargs="+", default=[1.0])
    b.add_argument("--out", help="directory for bounds.csv")

    v = sub.add_parser("verify")
    lvl = v.add_mutually_exclusive_group()
    lvl.add_argument("--quick", dest="level", action="store_const", const="quick")
    lvl.add_argument("--full", dest="level", action="store_const", const="full")
    v.set_defaults(level="quick")
    v.add_argument("--inject-fault", choices=["eta"], help="corrupt a run on purpose to exercise the checker")
    v.add_argument("--out", help="directory for verify_report.txt")
    return ap


def _taus_from_config(cfg) -> list[float]:
    taus = []
    for g in cfg.workers:
        if g.model == "deterministic":
            taus += [g.tau] * g.count
        elif g.model in ("exponential", "pareto"):
            taus += [g.mean] * g.count
        else:
            raise InvalidParameterError("bounds from config need fixed-model workers")
    return taus


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd in ("run", "sweep"):
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            if args.cmd == "run":
                for path, line in cli_run(cfg, args.out):
                    print(line)
                    print(f"trace written to {path}")
            else:
                path, best = cli_sweep(cfg, args.out, write_traces=args.traces)
                for row in best:
                    print(f"best {row['policy']}: eta={row['eta']:g} R={row['R']:g} median final f_gap={row['median_final_f_gap']:.6g}")
                write_rows(Path(path).with_name("best.csv"), ("policy", "eta", "R", "median_final_f_gap"), best)
                print(f"sweep written to {path}")
            return EXIT_OK

        if args.cmd == "bounds":
            if args.config:
                cfg = load_config(args.config)
                if cfg.theory is None:
                    raise InvalidParameterError("theory: block required for bounds --config")
                th = cfg.theory
                report = cli_bounds(th.L, th.delta, th.sigma, th.p, th.eps, _taus_from_config(cfg))
            else:
                report = cli_bounds(args.L, args.delta, args.sigma, args.p, args.eps, args.taus)
            print(report.table())
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                report.to_csv(Path(args.out) / "bounds.csv")
            return EXIT_OK

        t0 = time.perf_counter()
        results = checks.run_suite(args.level, inject=args.inject_fault)
        lines = [r.line() for r in results]
        failed = sum(not r.passed for r in results)
        lines.append(f"{len(results) - failed}/{len(results)} checks passed in {time.perf_counter() - t0:.1f}s")
        text = "\n".join(lines)
        print(text)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "verify_report.txt").write_text(text + "\n")
        return EXIT_INVARIANT if failed else EXIT_OK
    except SimulationGuardError as exc:
        print(f"simulation guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
