"""Report documents: canonical machine-readable JSON plus human tables.

Every run emits two views of the same result: a machine document (the source
of truth for downstream tooling and acceptance checks) and a rendered table.
Machine documents serialize canonically — sorted keys, fixed indentation — so
identical runs produce byte-identical files; volatile values (wall-clock
latency, timestamps) are confined to the ``latency`` and ``meta`` blocks.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dataset import Dataset, DatasetError
from .harness import EvalReport
from .metrics import (
    DEFAULT_ELIGIBILITY_MIN_DELTA_AVG,
    efficiency_eligible,
    format_percent,
)

REPORT_SCHEMA_VERSION = 1
REPORT_KINDS = ("evaluation", "latency", "validation")


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_report(path: Path | str, data: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(data))


def validate_report(data: dict) -> dict:
    """Check the report envelope; returns the document for chaining."""
    version = data.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise DatasetError(f"unsupported report schema version {version!r} "
                           f"(expected {REPORT_SCHEMA_VERSION})")
    kind = data.get("kind")
    if kind not in REPORT_KINDS:
        raise DatasetError(f"unknown report kind {kind!r}")
    required = {
        "evaluation": ("mode", "tracker", "accuracy", "control"),
        "latency": ("mode", "tracker", "latency", "accuracy"),
        "validation": ("summary",),
    }[kind]
    missing = [key for key in required if key not in data]
    if missing:
        raise DatasetError(f"{kind} report missing field(s): {missing}")
    return data


def load_report(path: Path | str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"report file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"report {path}: invalid JSON ({exc})") from exc
    return validate_report(data)


def _meta() -> dict:
    return {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "package_version": __version__,
    }


def _sequences_block(report: EvalReport) -> dict:
    block = {}
    for result in report.sequence_results:
        entry = {
            "status": result.status,
            "n_points": result.n_points,
            "frame_count": result.frame_count,
        }
        if result.failure_reason:
            entry["reason"] = result.failure_reason
        block[result.sequence_key] = entry
    return block


def build_evaluation_doc(report: EvalReport, kind: str = "evaluation") -> dict:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "mode": report.mode,
        "tracker": report.tracker_name,
        "unit": report.schedule.unit,
        "thresholds": list(report.schedule.thresholds),
        "accuracy": report.accuracy.to_dict(),
        "control": report.control_accuracy.to_dict(),
        "sequences": _sequences_block(report),
        "skipped": [list(item) for item in report.skipped],
        "violations": [list(item) for item in report.violations],
        "latency": None,
        "efficiency_eligible": None,
        "meta": _meta(),
    }
    if report.latency is not None:
        doc["latency"] = report.latency.to_dict()
        doc["efficiency_eligible"] = efficiency_eligible(
            report.accuracy.delta_avg, DEFAULT_ELIGIBILITY_MIN_DELTA_AVG)
    return doc


def build_latency_doc(report: EvalReport) -> dict:
    return build_evaluation_doc(report, kind="latency")


def build_validation_doc(dataset: Dataset, mismatches: list[str]) -> dict:
    sequences = {
        seq.key: {
            "kind": seq.kind,
            "frame_count": seq.frame_count,
            "n_points": seq.n_points,
            "image_size": list(seq.image_size),
            "start_ms": seq.start_ms,
            "end_ms": seq.end_ms,
            "duration_s": seq.duration_s,
        }
        for seq in dataset.sequences
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "validation",
        "summary": dataset.summary().to_dict(),
        "sequences": sequences,
        "skipped": [list(item) for item in dataset.skipped],
        "mismatches": mismatches,
        "synthetic": dataset.is_synthetic,
        "meta": _meta(),
    }


# ---------------------------------------------------------------------------
# human rendering

def _format_row(cells: list[str], widths: list[int]) -> str:
    return "  ".join(cell.rjust(width) for cell, width in zip(cells, widths))


def _threshold_label(threshold: float, unit: str) -> str:
    t = int(threshold) if float(threshold).is_integer() else threshold
    return f"<{t}{unit}"


def render_accuracy_table(doc: dict) -> str:
    """Threshold-sweep table: one column per threshold (ascending), then Avg."""
    labels = [_threshold_label(t, doc["unit"]) for t in doc["thresholds"]]
    header = ["tracker"] + labels + ["Avg."]
    rows = []
    for name, block in ((doc["tracker"], doc["accuracy"]),
                        ("control", doc["control"])):
        values = [format_percent(block["per_threshold"][label]) for label in labels]
        rows.append([name] + values + [format_percent(block["delta_avg"])])
    widths = [max(len(header[i]), *(len(row[i]) for row in rows))
              for i in range(len(header))]
    lines = [_format_row(header, widths),
             _format_row(["-" * w for w in widths], widths)]
    lines += [_format_row(row, widths) for row in rows]
    unit = doc["unit"]
    lines.append(f"(fractions of points with error < threshold, in %; "
                 f"thresholds in {unit}; n={doc['accuracy']['n_samples']})")
    return "\n".join(lines)


def render_latency_block(doc: dict) -> str:
    latency = doc.get("latency")
    if not latency:
        return "latency: not measured"
    lines = [
        f"frames timed : {latency['n_frames']}",
        f"mean latency : {latency['mean_ms']:.2f} ms",
        f"p95 latency  : {latency['p95_ms']:.2f} ms",
        f"p99 latency  : {latency['p99_ms']:.2f} ms",
        f"score (mean+p95+p99)/3 : {latency['score_ms']:.2f} ms",
    ]
    eligible = doc.get("efficiency_eligible")
    if eligible is not None:
        status = "yes" if eligible else "no"
        lines.append(f"accuracy gate (delta_avg >= "
                     f"{format_percent(DEFAULT_ELIGIBILITY_MIN_DELTA_AVG)}%) : {status}")
    return "\n".join(lines)


def render_validation_summary(doc: dict) -> str:
    s = doc["summary"]
    lines = [
        f"sequences    : {s['total_sequences']}",
        f"points       : {s['total_points']}",
        f"sessions     : {len(s['sessions'])} ({', '.join(s['sessions'])})"
        if s["sessions"] else "sessions     : 0",
        f"in-vivo/ex-vivo/unknown sessions : {s['in_vivo_sessions']}"
        f"/{s['ex_vivo_sessions']}/{s['unknown_sessions']}",
        f"mean clip length : {s['mean_clip_seconds']:.1f} s",
    ]
    if doc.get("skipped"):
        lines.append(f"skipped      : {len(doc['skipped'])}")
        for key, reason in doc["skipped"]:
            lines.append(f"  - {key}: {reason}")
    if doc.get("mismatches"):
        lines.append("manifest mismatches:")
        for item in doc["mismatches"]:
            lines.append(f"  - {item}")
    return "\n".join(lines)


def render_report(doc: dict) -> str:
    kind = doc.get("kind")
    if kind == "validation":
        return render_validation_summary(doc)
    parts = [render_accuracy_table(doc)]
    if kind == "latency" or doc.get("latency"):
        parts.append(render_latency_block(doc))
    if doc.get("violations"):
        lines = ["contract violations:"]
        lines += [f"  - {key}: {reason}" for key, reason in doc["violations"]]
        parts.append("\n".join(lines))
    if doc.get("skipped"):
        lines = ["skipped sequences:"]
        lines += [f"  - {key}: {reason}" for key, reason in doc["skipped"]]
        parts.append("\n".join(lines))
    return "\n\n".join(parts)
