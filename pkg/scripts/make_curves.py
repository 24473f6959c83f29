#!/usr/bin/env python3
"""Regenerate the scale-out and cost curves as CSV (and PNG if matplotlib is present).

    python scripts/make_curves.py [--out curves]
"""

import argparse
import csv
from pathlib import Path

from iotbench.cli import cost_csv, scalability_csv
from iotbench.metrics import CostModel, storage_crossover_ratio

RATE = 4100.0  # kIoTps, stable-phase rate of the reference configuration
IOTPS = 4.1e6
RATIOS = [1, 2, 5, 10, 20, 50, 100]


def _plot(out: Path, scal: str, price: str) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    rows = list(csv.DictReader(scal.splitlines()))
    for key in sorted({(r["w_s"], r["mode"]) for r in rows}):
        pts = [r for r in rows if (r["w_s"], r["mode"]) == key]
        a.plot([int(r["m"]) for r in pts], [float(r["iotps_kiotps"]) for r in pts], marker="o", label=f"w_s={key[0]} {key[1]}")
    a.set_xlabel("nodes before scale-out (m)")
    a.set_ylabel("kIoTps")
    a.legend()
    rows = list(csv.DictReader(price.splitlines()))
    b.semilogx([float(r["r"]) for r in rows], [float(r["usd_per_kiotps"]) for r in rows], marker="o")
    b.set_xlabel("compression ratio r")
    b.set_ylabel("$/kIoTps")
    fig.tight_layout()
    fig.savefig(out / "curves.png", dpi=120)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="curves")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cost = CostModel()
    scal = scalability_csv(RATE, range(1, 11), [(1.0, "linear"), (0.9, "linear"), (0.9, "decaying")])
    costs = cost_csv(cost, IOTPS, RATIOS, "cost")
    price = cost_csv(cost, IOTPS, RATIOS, "price")
    for name, text in (("scalability.csv", scal), ("cost.csv", costs), ("price.csv", price)):
        (out / name).write_text(text)
    _plot(out, scal, price)
    print(f"storage cost equals system cost at r = {storage_crossover_ratio(cost, IOTPS):.2f}")
    print(f"wrote {out}/scalability.csv, cost.csv, price.csv")


if __name__ == "__main__":
    main()
