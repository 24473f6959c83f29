"""Report documents: a JSON file with a fixed schema plus a plain-text summary.

Both file names embed the run's UTC start timestamp. ``load_report`` parses
the JSON back into the same dataclasses, so ``load(emit(r)) == r``.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .driver import (
    SCHEMA_VERSION,
    BenchmarkReport,
    CheckResult,
    DataCheck,
    IterationResult,
    PhaseStats,
)


class ReportError(ValueError):
    pass


def report_to_dict(report: BenchmarkReport) -> dict:
    return asdict(report)


def report_from_dict(doc: dict) -> BenchmarkReport:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"unsupported schema_version {doc.get('schema_version')!r}")
    iters = []
    for it in doc.get("iterations", []):
        it = dict(it)
        it["measured"] = PhaseStats(**it["measured"])
        if it.get("data_check") is not None:
            it["data_check"] = DataCheck(**it["data_check"])
        iters.append(IterationResult(**it))
    rest = {k: v for k, v in doc.items() if k not in ("iterations", "checks")}
    return BenchmarkReport(
        iterations=iters,
        checks=[CheckResult(**c) for c in doc.get("checks", [])],
        **rest,
    )


def dumps(report: BenchmarkReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def loads(text: str) -> BenchmarkReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportError(f"not a report document: {exc}") from None
    return report_from_dict(doc)


def load_report(path) -> BenchmarkReport:
    return loads(Path(path).read_text(encoding="utf-8"))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:,.6g}" if abs(x) >= 1e6 else f"{x:.6g}"
    return str(x)


def summary_text(report: BenchmarkReport) -> str:
    lines = [
        f"iotbench report (harness {report.harness_version}, schema {report.schema_version})",
        f"started  {report.started_at}",
        f"finished {report.finished_at}",
        f"result   {'VALID' if report.valid else 'INVALID'}"
        + ("" if report.failure_stage is None else f" (failed at {report.failure_stage})"),
        "",
    ]
    if report.allocation:
        lines.append(f"allocation {report.allocation}")
    for it in report.iterations:
        m = it.measured
        lines.append(
            f"iteration {it.index}: T={it.T:.3f}s n_0={m.n_0} n_s={m.n_s} "
            f"t_0={m.t_0:.3f}s t_s={m.t_s:.3f}s scale-out={m.scale_out} queries={m.queries}"
        )
    if report.metrics:
        lines.append("")
        lines.append("metrics")
        for k, v in report.metrics.items():
            lines.append(f"  {k:<22} {_fmt(v)}")
    lines.append("")
    lines.append("checks")
    for c in report.checks:
        detail = f"  {c.detail}" if c.detail else ""
        lines.append(f"  [{c.status.upper():>7}] {c.name}{detail}")
    return "\n".join(lines) + "\n"


def _stamp(report: BenchmarkReport) -> str:
    s = report.started_at or "unknown"
    return s.replace("-", "").replace(":", "").replace("+0000", "Z").replace("+00:00", "Z")


def emit_report(report: BenchmarkReport, out_dir) -> tuple[Path, Path]:
    """Write ``report-<ts>.json`` and ``summary-<ts>.txt``; never overwrites."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _stamp(report)
    n = 0
    while True:
        tag = base if n == 0 else f"{base}-{n}"
        jpath, spath = out / f"report-{tag}.json", out / f"summary-{tag}.txt"
        if not jpath.exists() and not spath.exists():
            break
        n += 1
    jpath.write_text(dumps(report), encoding="utf-8")
    spath.write_text(summary_text(report), encoding="utf-8")
    return jpath, spath
