"""Command line: ``run``, ``accept`` and ``sweep``.

Exit codes: 0 success, 1 configuration error or failed criterion, 2 internal error.
The worker-pool size comes from ``DELAYBANDITS_WORKERS`` unless ``--workers`` is given.
"""
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from .errors import ConfigurationError

log = logging.getLogger("delaybandits")

EXIT_OK, EXIT_FAIL, EXIT_INTERNAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems count as configuration failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAIL, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delaybandits", description="Delayed-feedback bandit experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("--output", type=Path, default=None, help="override the output directory")
    r.add_argument("--workers", type=int, default=None)

    a = sub.add_parser("accept", help="run the acceptance suite")
    a.add_argument("--tier", choices=("fast", "full"), default="fast")
    a.add_argument("--only", default=None, help="comma-separated criterion ids, e.g. 1,6,12")
    a.add_argument("--sabotage", action="store_true", help="break EXP3 updates to exercise the ratio check")
    a.add_argument("--report", type=Path, default=None, help="write a CSV report here")
    a.add_argument("--root-seed", type=int, default=0)

    s = sub.add_parser("sweep", help="run a config once per parameter value")
    s.add_argument("config", type=Path)
    s.add_argument("--param", required=True, help="field name, e.g. horizon or delay.d")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--output", type=Path, default=None)
    s.add_argument("--workers", type=int, default=None)
    return p


def _cmd_run(args) -> int:
    from .config import RunConfig
    from .runner import run_experiment

    cfg = RunConfig.load(args.config)
    res = run_experiment(cfg, args.output, args.workers)
    s = res.summary
    print(f"wrote {res.output_dir} ({cfg.seeds} seeds, {len(s.checkpoints)} checkpoints, {res.wall_time:.2f}s)")
    print(f"final T={s.checkpoints[-1]} mean regret {s.mean_regret[-1]:.6g} +- {s.std_error[-1]:.3g}")
    if s.exponent is not None:
        print(f"fitted exponent {s.exponent:.4f}")
    return EXIT_OK


def _cmd_accept(args) -> int:
    from .acceptance import AcceptanceSuite, exit_status, write_report

    only = [x.strip() for x in args.only.split(",")] if args.only else None
    suite = AcceptanceSuite(args.tier, sabotage=args.sabotage, root_seed=args.root_seed)
    results = suite.run(only, echo=lambda line: print(line, flush=True))
    if args.report:
        write_report(results, args.report)
    code = exit_status(results)
    failed = [r.cid for r in results if not r.passed and not r.advisory]
    print(f"tier {args.tier}: {sum(r.passed for r in results)}/{len(results)} passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return code


def _cmd_sweep(args) -> int:
    from .config import RunConfig
    from .runner import sweep

    cfg = RunConfig.load(args.config)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("--values is empty")
    base, results = sweep(cfg, args.param, values, args.output, args.workers)
    for v, res in zip(values, results):
        print(f"{args.param}={v.strip()}: mean regret {res.summary.mean_regret[-1]:.6g}")
    print(f"wrote {base / 'sweep.csv'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "accept": _cmd_accept, "sweep": _cmd_sweep}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception:  # anything else is a bug
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
