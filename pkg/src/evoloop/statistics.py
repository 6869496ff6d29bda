"""Task history aggregation and JSON/CSV export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .model import IterationRecord, TaskState
from .runtime import to_datetime

CSV_COLUMNS = ("iteration", "valid", "score", "tokens", "wall_ms")


class ExportError(OSError):
    pass


def summarize_iteration(rec: IterationRecord) -> dict[str, Any]:
    art = rec.artifact
    gen = rec.generator_meta
    ev = rec.evaluation
    return {
        "index": rec.index,
        "valid": rec.valid,
        "prompt": rec.prompt.content if rec.prompt else None,
        "prompt_kind": rec.prompt.kind.value if rec.prompt else None,
        "artifact": None if art is None else {
            "id": art.id,
            "solution_type": art.solution_type.value,
            "language": art.language,
            "content": art.text,
            "created_at": art.created_at.isoformat(),
        },
        "test": {
            "passed": rec.test.passed,
            "failures": [asdict(f) for f in rec.test.failures],
        },
        "analysis": dict(rec.analysis.entries),
        "evaluation": None if ev is None else {
            "score": ev.score,
            "metrics": dict(ev.metrics),
            "ranked": list(ev.ranked) if ev.ranked is not None else None,
            "feedback_text": ev.feedback_text,
        },
        "evaluation_error": rec.evaluation_error,
        "generator": None if gen is None else {
            "model": gen.model_identity,
            "latency": gen.latency,
            "tokens_prompt": gen.tokens_prompt,
            "tokens_completion": gen.tokens_completion,
            "attempts": gen.attempts,
        },
        "tokens": rec.tokens,
        "wall_time": rec.wall_time,
    }


@dataclass
class StatisticsReport:
    status: str
    reason: Optional[str]
    started_at: str
    history: list[dict] = field(default_factory=list)
    best: Optional[dict] = None
    progression: list[dict] = field(default_factory=list)
    error_distribution: dict[str, int] = field(default_factory=dict)
    usage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StatisticsReport":
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        per_iter = {row["iteration"]: row for row in self.usage.get("per_iteration", [])}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for point, summary in zip(self.progression, self.history):
            usage = per_iter.get(point["iteration"], {})
            score = point["score"]
            writer.writerow([
                point["iteration"],
                "true" if summary["valid"] else "false",
                "" if score is None else repr(float(score)),
                usage.get("tokens", 0),
                f"{usage.get('wall_time', 0.0) * 1000:.3f}",
            ])
        return buf.getvalue()


def summarize(state: TaskState) -> StatisticsReport:
    """Aggregate a task's history: log, best solution, progression, errors, usage."""
    history = [summarize_iteration(r) for r in state.iterations]
    progression = []
    best = None
    errors: dict[str, int] = {}
    per_iteration = []
    for rec in state.iterations:
        score = rec.evaluation.score if rec.evaluation is not None else None
        progression.append({"iteration": rec.index, "score": score})
        if score is not None and (best is None or score > best["score"]):
            best = {"artifact_id": rec.artifact.id, "score": score, "iteration": rec.index}
        for failure in rec.test.failures:
            errors[failure.error_class] = errors.get(failure.error_class, 0) + 1
        per_iteration.append({"iteration": rec.index, "tokens": rec.tokens, "wall_time": rec.wall_time})
    usage = {
        "tokens_total": sum(p["tokens"] for p in per_iteration),
        "wall_time_total": sum(p["wall_time"] for p in per_iteration),
        "per_iteration": per_iteration,
    }
    return StatisticsReport(
        status=state.status,
        reason=state.reason,
        started_at=to_datetime(state.started_at).isoformat(),
        history=history,
        best=best,
        progression=progression,
        error_distribution=dict(sorted(errors.items())),
        usage=usage,
    )


def export(report: StatisticsReport, format: str, destination) -> Path:
    """Write ``report`` as ``json`` (full report) or ``csv`` (progression table)."""
    if format == "json":
        text = report.to_json()
    elif format == "csv":
        text = report.to_csv()
    else:
        raise ValueError(f"unknown export format {format!r}")
    path = Path(destination)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write statistics to {path}: {exc.strerror or exc}") from exc
    return path


def export_all(report: StatisticsReport, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {directory}: {exc.strerror or exc}") from exc
    return (
        export(report, "json", directory / "statistics.json"),
        export(report, "csv", directory / "statistics.csv"),
    )


def load_json(path) -> StatisticsReport:
    with open(path, encoding="utf-8") as fh:
        return StatisticsReport.from_dict(json.load(fh))
