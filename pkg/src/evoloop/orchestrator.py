"""The task loop: prompt, generate, test, analyze, evaluate, stop; and parallel runs."""

from __future__ import annotations

import base64
import binascii
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

from .analysis import analyze
from .connectors import ScriptExhausted, make_generator
from .evaluation import EvaluationError, better, evaluate
from .model import (
    AnalysisReport,
    ChatHTTPGeneratorSpec,
    Incumbent,
    IterationRecord,
    LLMJudgeEvaluator,
    Message,
    MessageKind,
    Role,
    SolutionArtifact,
    SolutionType,
    TaskConfig,
    TaskState,
    TestFailure,
    TestOutcome,
    validate_config,
)
from .prompts import compose_iteration_prompt, select_repeating, trim_context
from .runtime import LogicalClock, WallClock, resolve_seed, stream, to_datetime, ulid
from .statistics import StatisticsReport, summarize
from .stopping import should_stop
from .validation import extract_code, feedback_for, run_tests

log = logging.getLogger(__name__)

MAX_ECHOED_SOLUTION = 8192


class ConfigError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid task config: " + "; ".join(self.violations))


def uses_logical_clock(config: TaskConfig) -> bool:
    if config.clock != "auto":
        return config.clock == "logical"
    return not any(isinstance(g, ChatHTTPGeneratorSpec) for g in config.generator_specs())


class Task:
    """One configured run of the loop, with its own state, generators and random streams.

    ``run`` drives the loop to completion on the calling thread.  ``request_stop``
    may be called from any thread; the loop honours it at the next iteration
    boundary.  ``snapshot`` gives a consistent statistics view while running.
    """

    def __init__(
        self,
        config: TaskConfig,
        *,
        clock=None,
        sleep: Callable[[float], None] = time.sleep,
        on_iteration: Optional[Callable[["Task", IterationRecord], None]] = None,
    ):
        violations = validate_config(config)
        if violations:
            raise ConfigError(violations)
        self.config = config
        self.seed = resolve_seed(config.seed)
        if clock is None:
            clock = LogicalClock() if uses_logical_clock(config) else WallClock()
        self.clock = clock
        self.on_iteration = on_iteration
        self.generator = make_generator(config.generator, clock=clock, sleep=sleep)
        self.judge = None
        if isinstance(config.evaluator, LLMJudgeEvaluator):
            self.judge = make_generator(config.evaluator.generator, clock=clock, sleep=sleep)
        self.analysis_generators = {
            a.output_key: make_generator(a.generator, clock=clock, sleep=sleep)
            for a in config.analyzers
            if a.generator is not None
        }
        self._prompt_rng = stream(self.seed, "prompts")
        self._id_rng = stream(self.seed, "ids")
        self._repeating = config.prompts.repeating
        self._system = (
            Message(Role.SYSTEM, config.prompts.system, MessageKind.SYSTEM)
            if config.prompts.system
            else None
        )
        self._history: list[Message] = []
        self._error_turn: Optional[Message] = None
        self._retry_turn: Optional[Message] = None
        self._feedback: list[str] = []
        self._stop = threading.Event()
        self._lock = threading.RLock()
        self.state = TaskState(started_at=0.0)

    # -- prompt assembly -------------------------------------------------------

    def _now_dt(self):
        return to_datetime(self.clock.now())

    def _next_prompt(self) -> Message:
        if self._retry_turn is not None:
            return self._retry_turn
        if self._error_turn is not None:
            return self._error_turn
        if self.state.counters.total == 0:
            return Message(Role.USER, self.config.prompts.initial, MessageKind.INITIAL, self._now_dt())
        repeating = ""
        if self._repeating is not None:
            repeating, self._repeating = select_repeating(self._repeating, self._prompt_rng)
        if not repeating and not self._feedback:
            return Message(Role.USER, self.config.prompts.initial, MessageKind.INITIAL, self._now_dt())
        return compose_iteration_prompt(repeating, self._feedback, self._now_dt())

    def conversation_for(self, user_message: Message) -> list[Message]:
        prior = ([self._system] if self._system else []) + self._history
        return trim_context(prior, self.config.context_window) + [user_message]

    def _error_message(self, outcome: TestOutcome, artifact: SolutionArtifact) -> Message:
        text = feedback_for(outcome, self.config.tests)
        previous = artifact.text[:MAX_ECHOED_SOLUTION]
        if previous:
            text += "\n\nPrevious solution:\n" + previous
        return Message(Role.USER, text, MessageKind.FEEDBACK, self._now_dt())

    # -- artifacts ---------------------------------------------------------------

    def _artifact(self, raw: str, index: int) -> SolutionArtifact:
        config = self.config
        now = self.clock.now()
        content: str | bytes = raw
        if config.solution_type is SolutionType.CODE:
            content = extract_code(raw, config.language)
        elif config.solution_type is SolutionType.IMAGE_BLOB:
            try:
                content = base64.b64decode(raw.strip(), validate=True)
            except (binascii.Error, ValueError):
                content = raw.encode("utf-8")
        return SolutionArtifact(
            id=ulid(now, self._id_rng),
            solution_type=config.solution_type,
            content=content,
            iteration_index=index,
            created_at=to_datetime(now),
            language=config.language,
            raw=raw,
        )

    # -- loop --------------------------------------------------------------------

    def step(self) -> IterationRecord:
        """Run one iteration and append its record; raises ``ScriptExhausted``."""
        config = self.config
        index = self.state.counters.total + 1
        started = self.clock.now()
        user_message = self._next_prompt()
        request = tuple(self.conversation_for(user_message))
        try:
            response = self.generator.generate(request)
        except ScriptExhausted:
            raise
        except Exception as exc:  # noqa: BLE001 - transport failures become invalid iterations
            log.warning("iteration %d: generator failed: %s", index, exc)
            self._retry_turn = user_message
            outcome = TestOutcome((TestFailure("generator", "generator_failure", str(exc)),))
            record = IterationRecord(
                index=index, valid=False, test=outcome, analysis=AnalysisReport({}),
                request=request, wall_time=self.clock.now() - started,
            )
            return self._commit(record)

        self._retry_turn = None
        self._history += [user_message, response.message]
        artifact = self._artifact(response.message.content, index)
        outcome = run_tests(artifact, config.tests)
        if not outcome.passed:
            self._error_turn = self._error_message(outcome, artifact)
            record = IterationRecord(
                index=index, valid=False, test=outcome, analysis=AnalysisReport({}),
                request=request, artifact=artifact, generator_meta=response,
                wall_time=self.clock.now() - started,
            )
            return self._commit(record)

        self._error_turn = None
        report = analyze(artifact, config.analyzers, self.analysis_generators, self.clock)
        evaluation = None
        evaluation_error = None
        if config.evaluator is not None:
            try:
                evaluation = evaluate(
                    artifact, report, self.state, config.evaluator,
                    judge=self.judge, clock=self.clock,
                )
            except EvaluationError as exc:
                evaluation_error = f"{type(exc).__name__}: {exc}"
                log.warning("iteration %d: evaluation failed: %s", index, exc)
        feedback = []
        if evaluation is not None and evaluation.feedback_text:
            feedback.append(evaluation.feedback_text)
        if config.include_analysis_in_feedback and report.entries:
            feedback.append("\n".join(f"{k}: {v}" for k, v in report.entries.items()))
        self._feedback = feedback
        record = IterationRecord(
            index=index, valid=True, test=outcome, analysis=report, request=request,
            artifact=artifact, evaluation=evaluation, evaluation_error=evaluation_error,
            generator_meta=response, wall_time=self.clock.now() - started,
        )
        return self._commit(record)

    def _commit(self, record: IterationRecord) -> IterationRecord:
        with self._lock:
            self.state.record(record)
            ev = record.evaluation
            if ev is not None and ev.score is not None:
                inc = self.state.incumbent
                if inc is None or better(ev, inc.evaluation):
                    self.state.incumbent = Incumbent(record.artifact.id, record.index, ev)
        if self.on_iteration is not None:
            self.on_iteration(self, record)
        return record

    def _finish(self, status: str, reason: str) -> None:
        with self._lock:
            self.state.status = status
            self.state.reason = reason

    def request_stop(self) -> None:
        self._stop.set()

    def run(self) -> tuple[TaskState, StatisticsReport]:
        with self._lock:
            self.state.status = "running"
            self.state.started_at = self.clock.now()
        while True:
            if self._stop.is_set():
                self._finish("stopped", "user")
                break
            try:
                self.step()
            except ScriptExhausted:
                self._finish("stopped", "script exhausted")
                break
            except Exception as exc:  # noqa: BLE001 - isolate the task's failure
                log.exception("task aborted")
                self._finish("stopped", f"error: {type(exc).__name__}: {exc}")
                break
            reason = should_stop(self.state, self.config.stopping, self.clock.now())
            if reason is not None:
                self._finish("finished", reason)
                break
        return self.state, self.snapshot()

    def snapshot(self) -> StatisticsReport:
        with self._lock:
            return summarize(self.state)


def run_task(config: TaskConfig, **kwargs) -> tuple[TaskState, StatisticsReport]:
    """Run ``config`` to completion; raises ``ConfigError`` before any iteration."""
    return Task(config, **kwargs).run()


def _run_isolated(config: TaskConfig, kwargs) -> tuple[TaskState, StatisticsReport]:
    try:
        return run_task(config, **kwargs)
    except Exception as exc:  # noqa: BLE001 - one task never takes down the others
        state = TaskState(started_at=0.0, status="stopped", reason=f"error: {exc}")
        return state, summarize(state)


def run_many(
    configs: Sequence[TaskConfig], max_parallel: int = 1, **kwargs
) -> list[tuple[TaskState, StatisticsReport]]:
    """Run tasks with at most ``max_parallel`` in flight; results follow ``configs`` order."""
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = [pool.submit(_run_isolated, c, kwargs) for c in configs]
        return [f.result() for f in futures]
