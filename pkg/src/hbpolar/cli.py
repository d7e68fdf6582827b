"""Command line entry point ``hb``."""

from __future__ import annotations

import argparse
import logging
import sys

from .sim import ExperimentConfig, emit_theory_curve, rows_to_csv, run_experiment, theory_to_csv


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hb", description="Polar-code Heegard-Berger experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write a CSV")
    run.add_argument("--config", required=True, help="JSON file with ExperimentConfig fields")
    run.add_argument("--out", help="CSV path (defaults to the config's out, else stdout)")
    run.add_argument("--workers", type=int, help="process count (default HB_THREADS or all cores)")

    th = sub.add_parser("theory", help="write the theory curve for a config as CSV")
    th.add_argument("--config", required=True)
    th.add_argument("--out")
    th.add_argument("--points", type=int, default=200)
    th.add_argument("--d2-min", type=float)
    th.add_argument("--d2-max", type=float)

    st = sub.add_parser("selftest", help="run the invariant suite")
    st.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.cmd == "selftest":
        from .selftest import run_all
        return 1 if run_all(args.seed) else 0

    cfg = ExperimentConfig.from_json(args.config)
    if args.cmd == "run":
        rows = run_experiment(cfg, workers=args.workers)
        _write(rows_to_csv(rows), args.out or cfg.out)
        return 0
    rng = None
    if args.d2_min is not None or args.d2_max is not None:
        rng = (args.d2_min if args.d2_min is not None else min(cfg.d2),
               args.d2_max if args.d2_max is not None else max(cfg.d2))
    _write(theory_to_csv(emit_theory_curve(cfg, args.points, rng)), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
