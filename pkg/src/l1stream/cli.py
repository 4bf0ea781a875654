"""Command line entry point: ``l1stream run | gen | verify``."""
from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

from .harness import ConfigError, load_config, make_config, make_stream, run_experiment
from .signals import write_stream, write_stream_csv


def _csv_ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _csv_strs(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _add_common(p):
    p.add_argument("config", nargs="?", help="key = value config file")
    p.add_argument("--pipeline", choices=("lot", "dynamic"))
    p.add_argument("--signal")
    p.add_argument("--R", type=_csv_ints, help="comma separated compression factors")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--full-scale", dest="full_scale", action="store_const", const=True,
                   help="use 2**15 samples instead of the desk-scale length")


def build_parser():
    ap = argparse.ArgumentParser(prog="l1stream", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write results")
    _add_common(run)
    run.add_argument("--solver", choices=("homotopy", "prox-oracle"))
    run.add_argument("--baselines", type=_csv_strs, help="e.g. dct or ls-kalman,dwt-only")
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.add_argument("--record-timing", dest="record_timing", action="store_const", const=True)
    run.add_argument("--quiet", action="store_true")

    gen = sub.add_parser("gen", help="write the signal and measurements of one trial")
    _add_common(gen)
    gen.add_argument("--out", required=True, help="output file (.bin) or directory (csv)")
    gen.add_argument("--format", choices=("bin", "csv"), default="bin")

    ver = sub.add_parser("verify", help="run the property and acceptance suites")
    ver.add_argument("--tests", default=None, help="test directory (default: bundled tests/)")
    ver.add_argument("pytest_args", nargs="*")
    return ap


def _config_from(args, keys):
    file_values = load_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k, None) for k in keys}
    return make_config(file_values, overrides)


def cmd_run(args):
    cfg = _config_from(args, ("pipeline", "signal", "R", "trials", "seed", "full_scale",
                              "solver", "baselines", "out", "workers", "record_timing"))

    def progress(rec):
        if not args.quiet:
            print(f"R={rec.R} trial={rec.trial} {rec.method:<12} SER={rec.ser_db:7.2f} dB "
                  f"steps={rec.steps}", flush=True)

    run_experiment(cfg, progress)
    if not args.quiet:
        print(f"results written to {cfg.out}/")
    return 0


def cmd_gen(args):
    cfg = _config_from(args, ("pipeline", "signal", "R", "seed", "full_scale"))
    x, _, meas = make_stream(cfg, cfg.R[0], 0)
    blocks = x.reshape(-1, cfg.N)
    if args.format == "bin":
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_stream(args.out, blocks, meas)
    else:
        write_stream_csv(args.out, blocks, meas)
    print(f"wrote {meas.T} blocks (N={meas.N}, M={meas.M}) to {args.out}")
    return 0


def cmd_verify(args):
    tests = args.tests
    if tests is None:
        tests = str(Path(__file__).resolve().parents[2] / "tests")
    if not Path(tests).is_dir():
        print(f"test directory {tests} not found", file=sys.stderr)
        return 2
    return subprocess.call([sys.executable, "-m", "pytest", "-q", tests, *args.pytest_args])


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "gen": cmd_gen, "verify": cmd_verify}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
