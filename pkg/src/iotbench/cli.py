"""Command-line entry point.

    iotbench run --config F [--out D] [--desk-scale] [--clients 5 ...] [--set key=value ...]
    iotbench sweep-scalability [--rate 4100] [--m 1:10] [--series 1.0:linear,0.9:decaying]
    iotbench sweep-cost [--iotps 4.1e6] [--r 1,2,5,10,20,50,100] [--curve cost|price]
    iotbench check-config --config F [overrides]
    iotbench show-report R

Exit codes: 0 all checks pass, 1 benchmark-invalidating failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

from . import metrics as M
from .config import _KEYS, ConfigError, format_config, parse_config
from .report import ReportError, emit_report, load_report, summary_text

OUT_ENV = "IOTBENCH_OUT"
DEFAULT_OUT = "reports"

EXIT_OK, EXIT_INVALID, EXIT_CONFIG = 0, 1, 2


def _flag(key: str) -> str:
    return "--" + key.replace(".", "-").replace("_", "-")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value properties file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    g = p.add_argument_group("config overrides")
    for key in _KEYS:
        if key == "desk_scale":
            continue
        g.add_argument(_flag(key), dest=f"cfg:{key}", metavar="V", help=argparse.SUPPRESS)
    p.add_argument("--desk-scale", action="store_true", help="allow short runs (>= 5 s)")


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    for dest, value in vars(args).items():
        if dest.startswith("cfg:") and value is not None:
            out[dest[4:]] = value
    if args.desk_scale:
        out["desk_scale"] = "true"
    return out


def _load_config(args):
    return parse_config(args.config, _overrides(args))


def _parse_grid(text: str, cast=float) -> list:
    """``1:10`` (inclusive integer range) or ``1,2,5``; empty text is an empty grid."""
    text = text.strip()
    if not text:
        return []
    if ":" in text and "," not in text:
        lo, hi = text.split(":")
        return [cast(x) for x in range(int(lo), int(hi) + 1)]
    return [cast(x) for x in text.split(",") if x.strip()]


def _parse_series(text: str) -> list[tuple[float, str]]:
    out = []
    for part in filter(None, (x.strip() for x in text.split(","))):
        w, _, mode = part.partition(":")
        out.append((float(w), mode or "linear"))
    return out


def scalability_csv(rate: float, ms, series, t_0: float = 1.0, t_s: float = 1.0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "w_s", "mode", "iotps_kiotps"])
    for w_s, mode in series:
        for m in ms:
            x = M.ScalabilityInputs(rate=rate, m=int(m), w_s=w_s, t_0=t_0, t_s=t_s, mode=mode)
            w.writerow([int(m), repr(w_s), mode, repr(M.model_iotps(x))])
    return buf.getvalue()


def cost_csv(cost: M.CostModel, iotps_value: float, rs, curve: str = "cost") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if curve == "cost":
        w.writerow(["r", "storage_cost", "total_cost"])
        for r in rs:
            w.writerow([repr(r), repr(M.storage_cost(cost, iotps_value, r)), repr(M.total_cost(cost, iotps_value, r))])
    else:
        w.writerow(["r", "usd_per_kiotps"])
        for r in rs:
            w.writerow([repr(r), repr(M.price_performance(cost, iotps_value, r))])
    return buf.getvalue()


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    from .driver import run_benchmark

    cfg = _load_config(args)
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    report = run_benchmark(cfg, out_dir=out)
    jpath, spath = emit_report(report, out)
    sys.stdout.write(summary_text(report))
    print(f"report:  {jpath}\nsummary: {spath}")
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_sweep_scalability(args) -> int:
    ms = _parse_grid(args.m, int)
    series = _parse_series(args.series)
    _write(scalability_csv(args.rate, ms, series, args.t0, args.ts), args.output)
    return EXIT_OK


def cmd_sweep_cost(args) -> int:
    cost = M.CostModel(
        c_0=args.c0, c_s=args.cs, storage_cost_per_16b=args.per_record, record_bytes=args.record_bytes
    )
    _write(cost_csv(cost, args.iotps, _parse_grid(args.r), args.curve), args.output)
    return EXIT_OK


def cmd_check_config(args) -> int:
    cfg = _load_config(args)
    sys.stdout.write(format_config(cfg))
    return EXIT_OK


def cmd_show_report(args) -> int:
    try:
        report = load_report(args.report)
    except (OSError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(summary_text(report))
    return EXIT_OK if report.valid else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iotbench", description="IoT time-series database benchmark harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the two-iteration benchmark")
    _add_config_args(r)
    r.add_argument("--out", help=f"report directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-scalability", help="scale-out model curve as CSV")
    s.add_argument("--rate", type=float, default=4100.0, help="baseline rate R (kIoTps)")
    s.add_argument("--m", default="1:10", help="node counts, e.g. 1:10 or 1,2,4")
    s.add_argument("--series", default="1.0:linear,0.9:decaying", help="w_s:mode list")
    s.add_argument("--t0", type=float, default=1.0)
    s.add_argument("--ts", type=float, default=1.0)
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_sweep_scalability)

    c = sub.add_parser("sweep-cost", help="storage/total cost or $/kIoTps over r as CSV")
    c.add_argument("--iotps", type=float, default=4.1e6)
    c.add_argument("--r", default="1,2,5,10,20,50,100")
    c.add_argument("--curve", choices=("cost", "price"), default="cost")
    c.add_argument("--c0", type=float, default=300_000.0)
    c.add_argument("--cs", type=float, default=300_000.0)
    c.add_argument("--per-record", type=float, default=M.STORAGE_COST_PER_16B_RECORD)
    c.add_argument("--record-bytes", type=int, default=M.REFERENCE_RECORD_BYTES)
    c.add_argument("--output", "-o")
    c.set_defaults(func=cmd_sweep_cost)

    k = sub.add_parser("check-config", help="validate a config and print it normalized")
    _add_config_args(k)
    k.set_defaults(func=cmd_check_config)

    v = sub.add_parser("show-report", help="print the summary of a report file")
    v.add_argument("report")
    v.set_defaults(func=cmd_show_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
