#!/usr/bin/env python3
"""Short benchmark runs for a laptop.

    python scripts/desk_run.py reference   # real store, wall clock, ~45 s
    python scripts/desk_run.py modeled     # modeled SUT, virtual clock, instant

Reports land in ``--out`` (default ``reports``).
"""

import argparse
import sys

from iotbench.config import parse_config
from iotbench.driver import run_benchmark
from iotbench.report import emit_report, summary_text

PRESETS = {
    "reference": {
        "sensors": "100",
        "clients": "3",
        "records": "300000",
        "desk_scale": "true",
        "min_run_seconds": "10",
        "sut.adapter": "reference",
        "verify_sample": "1000",
    },
    "modeled": {
        "sensors": "50",
        "clients": "4",
        "records": "70000",
        "desk_scale": "true",
        "min_run_seconds": "30",
        "sut.adapter": "modeled",
        "sut.nodes": "3",
        "modeled.rate": "2500",
        "modeled.w_s": "0.9",
        "clock": "virtual",
    },
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("preset", choices=sorted(PRESETS))
    ap.add_argument("--out", default="reports")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    raw = dict(PRESETS[args.preset])
    raw.update(dict(s.split("=", 1) for s in args.set))
    report = run_benchmark(parse_config(None, raw), out_dir=args.out)
    paths = emit_report(report, args.out)
    sys.stdout.write(summary_text(report))
    print("report:", paths[0])
    return 0 if report.valid else 1


if __name__ == "__main__":
    sys.exit(main())
