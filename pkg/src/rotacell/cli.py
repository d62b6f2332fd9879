"""Command line front end.

Four subcommands: ``simulate`` (one method on one drop, JSON report),
``sweep`` (Monte Carlo sweep from a spec file, CSV table), ``validate``
(fast invariant suites, JSON summary), and ``trace`` (per-iteration
convergence data for one run, CSV).  Errors exit nonzero after printing
a one-line JSON error summary to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .drivers import Method, report_to_dict, run_method
from .harness import emit_csv, run_sweep, sweep_spec_from_dict
from .scenario import ConfigError, default_config, load_config, scenario_from_seed

METHOD_NAMES = [m.value for m in Method]


def _load_scenario_config(path):
    if path is None:
        return default_config()
    return load_config(path)


def _write_or_print(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w") as fh:
        fh.write(text)


def cmd_simulate(args):
    cfg = _load_scenario_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    scn = scenario_from_seed(cfg, seed=seed)
    report = run_method(scn, Method(args.method), seed=seed)
    payload = report_to_dict(report, config=cfg)
    _write_or_print(json.dumps(payload, indent=2) + "\n", args.out)
    if args.out is not None:
        print(
            f"{args.method} seed={seed}: min rate "
            f"{report.min_rate:.4f} bps/Hz -> {args.out}"
        )
    return 0


def cmd_sweep(args):
    if args.config is None:
        raise ConfigError("sweep: --config SPEC_FILE is required")
    import yaml

    with open(args.config) as fh:
        raw = yaml.safe_load(fh)
    spec = sweep_spec_from_dict(raw)
    if args.seed is not None:
        spec.seed = args.seed
    out = args.out or "sweep.csv"

    def progress(done, total):
        if done % 10 == 0 or done == total:
            print(f"  {done}/{total} runs", file=sys.stderr, flush=True)

    result = run_sweep(spec, jobs=args.jobs, progress=progress)
    emit_csv(result, out)
    failures = sum(len(c.failures) for c in result.cells.values())
    print(f"sweep: {len(result.values)} values x {len(result.methods)} methods "
          f"x {result.drops} drops -> {out}" + (f" ({failures} failed runs)" if failures else ""))
    return 0


def cmd_validate(args):
    from .validate import run_validation_suite

    checks = run_validation_suite(seed=0 if args.seed is None else args.seed)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    summary = {
        "passed": sum(ok for _, ok, _ in checks),
        "failed": sum(not ok for _, ok, _ in checks),
        "checks": [{"name": n, "ok": bool(ok), "detail": d} for n, ok, d in checks],
    }
    if args.out is not None:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2)
    return 0 if summary["failed"] == 0 else 1


def cmd_trace(args):
    cfg = _load_scenario_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    scn = scenario_from_seed(cfg, seed=seed)
    report = run_method(scn, Method(args.method), seed=seed)
    lines = ["iter,min_rate_bpshz"]
    lines += [f"{it},{rate:.10g}" for it, rate in report.trace]
    _write_or_print("\n".join(lines) + "\n", args.out)
    if args.out is not None:
        print(f"{args.method} seed={seed}: {len(report.trace)} trace points -> {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rotacell",
        description="Max-min fair cell-free downlink with rotatable antennas.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, method=True, jobs=False):
        p.add_argument("--config", help="config file (YAML/JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path (default: stdout)")
        if method:
            p.add_argument(
                "--method", choices=METHOD_NAMES, default="AO", help="method to run"
            )
        if jobs:
            p.add_argument(
                "--jobs", type=int, default=1, help="worker processes for drops"
            )

    p_sim = sub.add_parser("simulate", help="run one method on one drop")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run a Monte Carlo sweep spec")
    add_common(p_sweep, method=False, jobs=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the fast invariant suites")
    add_common(p_val, method=False)
    p_val.set_defaults(func=cmd_validate)

    p_trace = sub.add_parser("trace", help="emit per-iteration convergence data")
    add_common(p_trace)
    p_trace.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - uniform error summary at the edge
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
