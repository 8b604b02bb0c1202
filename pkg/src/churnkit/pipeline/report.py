"""Report files: a machine-readable CSV and a markdown rendering of the result grid."""

from __future__ import annotations

import calendar
import csv
import io
from pathlib import Path
from typing import Sequence

from ..metrics import format_rate, format_score, format_seconds
from .experiment import AVERAGE, METRIC_FIELDS, REPORT_FIELDS, TIMING_FIELDS, ReportRow

UNDEFINED = "n/a"
NO_TIME = "-"
FORMATS = ("csv", "markdown")

SAMPLER_LABELS = {
    "none": "No Sampling",
    "random-under": "Random Under-Sampling",
    "tomek-under": "Tomek Link Under-Sampling",
    "random-over": "Random Over-Sampling",
    "smote": "SMOTE",
    "borderline-smote": "Borderline-SMOTE",
    "smote-tomek": "SMOTE+Tomek Link",
}
CLASSIFIER_LABELS = {"lr": "LR", "svm": "SVM", "rf": "RF", "rf-cost-sensitive": "Cost-Sensitive RF"}
MEASURE_LABELS = {"precision": "precision", "recall": "recall", "tnr": "TNR",
                  "f_measure": "F-measure", "g_mean": "G-mean"}


class ReportError(OSError):
    pass


def _cell(name: str, value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    if value is None:
        return NO_TIME if name in TIMING_FIELDS else UNDEFINED
    return str(value)


def _parse(name: str, text: str):
    if name in METRIC_FIELDS or name in TIMING_FIELDS:
        return None if text in (UNDEFINED, NO_TIME) else float(text)
    return text


def to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for row in rows:
        writer.writerow([_cell(name, getattr(row, name)) for name in REPORT_FIELDS])
    return buf.getvalue()


def read_report_csv(path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
            raise ReportError(f"{path}: unexpected report header")
        return [ReportRow(**{k: _parse(k, v) for k, v in rec.items()}) for rec in reader]


def method_label(sampler: str, classifier: str, linear_present: bool = False) -> str:
    if classifier == "rf-cost-sensitive" and sampler == "none":
        return "Cost-Sensitive Learning"
    if classifier == "rf" and not linear_present:
        return SAMPLER_LABELS[sampler]
    if sampler == "none":
        return CLASSIFIER_LABELS[classifier]
    return f"{SAMPLER_LABELS[sampler]} + {CLASSIFIER_LABELS[classifier]}"


def _month_label(key: str) -> str:
    if key == AVERAGE:
        return "Average"
    year, month = int(key[:4]), int(key[4:])
    return f"{calendar.month_abbr[month]} {year}"


def _pair_label(row: ReportRow) -> str:
    if row.train_month == AVERAGE:
        return "Average"
    return f"{_month_label(row.train_month)} to {_month_label(row.test_month)}"


def to_markdown(rows: Sequence[ReportRow]) -> str:
    """Methods as columns; each month pair (then the averages) as a block of measure rows."""
    methods = list(dict.fromkeys(r.method for r in rows))
    linear = any(c in ("lr", "svm") for _, c in methods)
    header = [method_label(s, c, linear) for s, c in methods]
    pairs = list(dict.fromkeys(_pair_label(r) for r in rows))
    cell = {(_pair_label(r), r.method): r for r in rows}

    def table(first: str, measures, fmt):
        lines = ["| | " + first + " | " + " | ".join(header) + " |",
                 "|---|---|" + "---|" * len(header)]
        for pair in pairs:
            for i, (name, label) in enumerate(measures):
                values = []
                for m in methods:
                    r = cell.get((pair, m))
                    if r is None:
                        values.append("")
                    elif not r.ok:
                        values.append("failed")
                    else:
                        values.append(fmt(name, getattr(r, name)))
                lines.append(f"| {pair if i == 0 else ''} | {label} | " + " | ".join(values) + " |")
        return lines

    def metric_fmt(name, v):
        return format_rate(v) if name in ("precision", "recall", "tnr") else format_score(v)

    out = ["## Prediction results", ""]
    out += table("Measure", [(n, MEASURE_LABELS[n]) for n in METRIC_FIELDS], metric_fmt)
    out += ["", "## Time spent constructing the model", ""]
    timing = [("sampling_s", "Sampling"), ("train_s", "Train"), ("total_s", "Total")]
    out += table("Time (s)", timing, lambda _n, v: format_seconds(v))
    failures = [r for r in rows if not r.ok]
    if failures:
        out += ["", "## Failed runs", ""]
        out += [f"- {r.experiment_id}: {r.status[len('failed: '):]}" for r in failures]
    return "\n".join(out) + "\n"


def figure_csv(rows: Sequence[ReportRow]) -> str:
    """Plot-ready averages: one line per method with its mean measures."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("method", "sampler", "classifier") + METRIC_FIELDS)
    averages = [r for r in rows if r.train_month == AVERAGE]
    linear = any(r.classifier in ("lr", "svm") for r in averages)
    for r in averages:
        writer.writerow([method_label(r.sampler, r.classifier, linear), r.sampler, r.classifier]
                        + [_cell(n, getattr(r, n)) for n in METRIC_FIELDS])
    return buf.getvalue()


def emit_report(rows: Sequence[ReportRow], path, fmt: str = "csv") -> Path:
    """Write ``rows`` as CSV or markdown to ``path``; undefined metrics print as n/a, absent timings as -."""
    if not rows:
        raise ReportError("nothing to report")
    if fmt not in FORMATS:
        raise ReportError(f"unknown report format {fmt!r}")
    text = to_csv(rows) if fmt == "csv" else to_markdown(rows)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path


def emit_figure_csv(rows: Sequence[ReportRow], path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(figure_csv(rows))
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
