"""Scoring of valid solutions, LLM-judge parsing and incumbent comparison."""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Optional

from .connectors import make_generator
from .game2048 import PolicySpec, evaluate_solver
from .model import (
    AnalysisReport,
    EvaluationResult,
    ExternalMetricEvaluator,
    Game2048Evaluator,
    LLMJudgeEvaluator,
    Message,
    MessageKind,
    Role,
    SolutionArtifact,
)
from .prompts import render_template
from .validation import FILE_SUFFIXES


class EvaluationError(RuntimeError):
    """The evaluator could not produce a result for a valid solution."""


class JudgeParseError(EvaluationError):
    pass


@dataclass(frozen=True)
class JudgeVerdict:
    rating: int
    suggestion: str

    def __post_init__(self):
        if not 1 <= self.rating <= 10:
            raise ValueError("rating must be within 1..10")
        if not self.suggestion:
            raise ValueError("suggestion must be non-empty")

    def render(self) -> str:
        return f"Rating: {self.rating} Suggestion: {self.suggestion}"


_RATING = re.compile(r"\brating[ \t]*:[ \t]*([+-]?\d+)(?!\d)(?![.,]\d)", re.I)
_RATING_LABEL = re.compile(r"\brating[ \t]*:", re.I)
_SUGGESTION = re.compile(r"\bsuggestion[ \t]*:(.*)\Z", re.I | re.S)


def parse_judge_reply(reply: str) -> JudgeVerdict:
    """Extract ``Rating: <1..10>`` and the ``Suggestion:`` text that follows it.

    Labels are case-insensitive and surrounding whitespace is ignored.  The
    suggestion label must follow the rating; its text runs to the end of the reply.
    """
    if not _RATING_LABEL.search(reply):
        raise JudgeParseError("reply has no 'Rating:' label")
    rating = _RATING.search(reply)
    if rating is None:
        raise JudgeParseError("'Rating:' is not followed by an integer")
    value = int(rating.group(1))
    if not 1 <= value <= 10:
        raise JudgeParseError(f"rating {value} is outside 1..10")
    suggestion = _SUGGESTION.search(reply, rating.end())
    if suggestion is None:
        raise JudgeParseError("no 'Suggestion:' label after the rating")
    text = suggestion.group(1).strip()
    if not text:
        raise JudgeParseError("suggestion is empty")
    return JudgeVerdict(value, text)


def better(candidate: EvaluationResult, incumbent: EvaluationResult) -> bool:
    """Strict improvement on score; ties keep the incumbent."""
    if candidate.score is None or incumbent.score is None:
        raise ValueError("both results need a score to be compared")
    return candidate.score > incumbent.score


def format_score(score: Optional[float]) -> str:
    if score is None:
        return "n/a"
    if float(score).is_integer():
        return str(int(score))
    return repr(float(score))


def render_metrics(metrics: dict) -> str:
    return "\n".join(f"{k}: {format_score(v)}" for k, v in metrics.items())


def render_feedback(template: str, score, metrics: dict, suggestion: str = "") -> str:
    return render_template(
        template,
        score=format_score(score),
        metrics=render_metrics(metrics),
        suggestion=suggestion,
    ).strip()


def _write_temp(artifact: SolutionArtifact) -> str:
    suffix = FILE_SUFFIXES.get((artifact.language or "").lower(), ".txt")
    fd, path = tempfile.mkstemp(prefix="solution_", suffix=suffix)
    with os.fdopen(fd, "wb") as fh:
        data = artifact.content
        fh.write(data if isinstance(data, bytes) else data.encode("utf-8"))
    return path


def _external_metric(artifact, spec: ExternalMetricEvaluator) -> EvaluationResult:
    path = _write_temp(artifact)
    try:
        argv = [
            render_template(tok, file=path, language=artifact.language or "")
            for tok in shlex.split(spec.command)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout)
        except subprocess.TimeoutExpired as exc:
            raise EvaluationError(f"metric command exceeded {spec.timeout}s") from exc
        except OSError as exc:
            raise EvaluationError(f"metric command unavailable: {exc}") from exc
    finally:
        os.unlink(path)
    if proc.returncode != 0:
        raise EvaluationError(f"metric command exited {proc.returncode}: {proc.stderr.strip()[-500:]}")
    score = None
    metrics = {}
    line_re = re.compile(r"^([A-Za-z_][\w.-]*)=([-+0-9.eE]+|nan|inf)$")
    for line in proc.stdout.splitlines():
        m = line_re.match(line.strip())
        if not m:
            continue
        try:
            value = float(m.group(2))
        except ValueError:
            continue
        if m.group(1) == spec.metric_key and score is None:
            score = value
        elif m.group(1) != spec.metric_key:
            metrics[m.group(1)] = value
    if score is None:
        raise EvaluationError(f"no '{spec.metric_key}=<real>' line in metric output")
    return EvaluationResult(
        score=score,
        metrics=metrics,
        feedback_text=render_feedback(spec.feedback_render, score, metrics),
    )


def _llm_judge(artifact, spec: LLMJudgeEvaluator, judge, clock) -> EvaluationResult:
    gen = judge or make_generator(spec.generator, clock=clock)
    prompt = render_template(spec.template, solution=artifact.text)
    try:
        reply = gen.generate([Message(Role.USER, prompt, MessageKind.INITIAL)])
    except Exception as exc:
        raise EvaluationError(f"judge generator failed: {exc}") from exc
    verdict = parse_judge_reply(reply.message.content)
    return EvaluationResult(
        score=float(verdict.rating),
        feedback_text=render_feedback(spec.feedback_render, verdict.rating, {}, verdict.suggestion),
    )


def _game2048(artifact, spec: Game2048Evaluator) -> EvaluationResult:
    if isinstance(artifact.content, bytes):
        raise EvaluationError("game2048 needs solver source code")
    path = _write_temp(artifact)
    try:
        policy = PolicySpec.solver_file(
            path, time_limit=spec.search_time_budget, move_timeout=spec.move_time_limit
        )
        result = evaluate_solver(policy, spec.n_games, spec.base_seed, spec.move_cap)
    finally:
        os.unlink(path)
    failed = [g for g in result.games if g.termination in ("policy_error", "policy_timeout")]
    if len(failed) == len(result.games) and all(g.valid_moves == 0 for g in failed):
        raise EvaluationError(f"solver failed every game: {failed[0].detail}")
    metrics = {
        "avg_max_tile": result.avg_max_tile,
        "avg_valid_moves": result.avg_valid_moves,
        "wins": float(result.wins),
        "policy_failures": float(len(failed)),
    }
    return EvaluationResult(
        score=result.avg_score,
        metrics=metrics,
        feedback_text=render_feedback(spec.feedback_render, result.avg_score, metrics),
    )


def evaluate(
    artifact: SolutionArtifact,
    analysis: AnalysisReport,
    state,
    spec,
    *,
    judge=None,
    clock=None,
) -> EvaluationResult:
    """Score a solution that passed its tests.

    ``analysis`` and ``state`` are available to evaluators that weigh metadata
    or history; the builtin kinds score the solution alone.  ``judge`` is the
    task's live judge generator, so scripted judges advance across calls.
    """
    if isinstance(spec, ExternalMetricEvaluator):
        return _external_metric(artifact, spec)
    if isinstance(spec, LLMJudgeEvaluator):
        return _llm_judge(artifact, spec, judge, clock)
    if isinstance(spec, Game2048Evaluator):
        return _game2048(artifact, spec)
    raise TypeError(f"unsupported evaluator spec {spec!r}")
