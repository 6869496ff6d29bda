"""Value types exchanged between the loop stages, and task configuration."""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional, Union


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class MessageKind(str, Enum):
    INITIAL = "initial"
    SYSTEM = "system"
    REPEATING = "repeating"
    FEEDBACK = "feedback"
    GENERATED = "generated"


class SolutionType(str, Enum):
    TEXT = "text"
    CODE = "code"
    IMAGE_BLOB = "image_blob"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    kind: MessageKind
    timestamp: Optional[datetime] = None

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "kind", MessageKind(self.kind))
        if self.kind is not MessageKind.GENERATED and not self.content:
            raise ValueError(f"{self.kind.value} message must have content")
        if self.role is Role.SYSTEM and self.kind is not MessageKind.SYSTEM:
            raise ValueError("system-role messages must have kind 'system'")

    def to_wire(self) -> dict[str, str]:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class SolutionArtifact:
    """One generated solution.

    ``content`` holds extracted code for code solutions and raw bytes for image
    blobs; ``raw`` keeps the generator's reply as received.
    """

    id: str
    solution_type: SolutionType
    content: Union[str, bytes]
    iteration_index: int
    created_at: datetime
    language: Optional[str] = None
    raw: str = ""

    def __post_init__(self):
        object.__setattr__(self, "solution_type", SolutionType(self.solution_type))
        if self.iteration_index < 1:
            raise ValueError("iteration_index must be >= 1")
        if self.solution_type is SolutionType.CODE and not self.language:
            raise ValueError("code artifacts need a language id")

    @property
    def text(self) -> str:
        """Content as text; image blobs are rendered as base64."""
        if isinstance(self.content, bytes):
            return base64.b64encode(self.content).decode("ascii")
        return self.content


@dataclass(frozen=True)
class GeneratorResponse:
    message: Message
    model_identity: str
    latency: float
    tokens_prompt: int
    tokens_completion: int
    attempts: int = 1

    def __post_init__(self):
        if self.message.role is not Role.ASSISTANT or self.message.kind is not MessageKind.GENERATED:
            raise ValueError("generator replies must be assistant/generated messages")
        if self.tokens_prompt < 0 or self.tokens_completion < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def tokens_total(self) -> int:
        return self.tokens_prompt + self.tokens_completion


@dataclass(frozen=True)
class TestFailure:
    __test__ = False

    test_name: str
    error_class: str
    detail: str


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    failures: tuple[TestFailure, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass(frozen=True)
class AnalysisReport:
    entries: dict[str, Union[float, int, str, bool]] = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationResult:
    """Score (higher is better), partial metrics and/or a ranking, plus feedback."""

    score: Optional[float] = None
    metrics: dict[str, float] = field(default_factory=dict)
    ranked: Optional[tuple[str, ...]] = None
    feedback_text: Optional[str] = None

    def __post_init__(self):
        if self.score is None and not self.metrics and self.ranked is None:
            raise ValueError("evaluation needs a score, metrics or a ranking")
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class IterationRecord:
    index: int
    valid: bool
    test: TestOutcome
    analysis: AnalysisReport
    request: tuple[Message, ...]
    artifact: Optional[SolutionArtifact] = None
    evaluation: Optional[EvaluationResult] = None
    evaluation_error: Optional[str] = None
    generator_meta: Optional[GeneratorResponse] = None
    wall_time: float = 0.0

    def __post_init__(self):
        if self.valid != self.test.passed:
            raise ValueError("valid must match the test outcome")
        if self.evaluation is not None and not self.valid:
            raise ValueError("invalid iterations are never evaluated")

    @property
    def tokens(self) -> int:
        return self.generator_meta.tokens_total if self.generator_meta else 0

    @property
    def prompt(self) -> Optional[Message]:
        """The user message sent this iteration."""
        return self.request[-1] if self.request else None


# -- configuration ------------------------------------------------------------
#
# Spec objects are deliberately permissive at construction time;
# ``validate_config`` reports every rule violation at once.

UNBOUNDED = None


@dataclass(frozen=True)
class RepeatingSpec:
    messages: tuple[str, ...]
    strategy: str = "single"
    weights: Optional[tuple[float, ...]] = None
    cursor: int = 0


@dataclass(frozen=True)
class PromptSpec:
    initial: str
    system: Optional[str] = None
    repeating: Optional[RepeatingSpec] = None


@dataclass(frozen=True)
class ScriptedGeneratorSpec:
    """Replays ``responses`` in order; ``delay`` sleeps before each reply."""

    responses: tuple[str, ...]
    delay: float = 0.0
    request_timeout: float = 60.0
    max_retries: int = 0
    kind: str = field(default="scripted", init=False)


@dataclass(frozen=True)
class ChatHTTPGeneratorSpec:
    endpoint: str
    model: str
    temperature: float = 1.0
    api_key_env: str = "EASE_API_KEY"
    request_timeout: float = 60.0
    max_retries: int = 3
    kind: str = field(default="chat_http", init=False)


GeneratorSpec = Union[ScriptedGeneratorSpec, ChatHTTPGeneratorSpec]


@dataclass(frozen=True)
class KeywordTest:
    name: str
    feedback_template: str
    required: tuple[str, ...] = ()
    forbidden: tuple[str, ...] = ()
    kind: str = field(default="keyword", init=False)


@dataclass(frozen=True)
class ExternalCheckTest:
    """Run ``command`` (with ``{file}``/``{language}`` placeholders); pass on ``pass_exit_code``."""

    name: str
    feedback_template: str
    command: str
    timeout: float = 30.0
    pass_exit_code: int = 0
    error_class: Optional[str] = None
    kind: str = field(default="external_check", init=False)


@dataclass(frozen=True)
class CodeExtractionTest:
    name: str
    feedback_template: str
    language: str = "python"
    kind: str = field(default="code_extraction", init=False)


TestSpec = Union[KeywordTest, ExternalCheckTest, CodeExtractionTest]

ANALYZER_KINDS = ("line_count", "char_count", "token_estimate", "keyword_presence", "llm_analysis")


@dataclass(frozen=True)
class AnalyzerSpec:
    kind: str
    output_key: str
    keywords: tuple[str, ...] = ()
    template: Optional[str] = None
    generator: Optional[GeneratorSpec] = None


@dataclass(frozen=True)
class ExternalMetricEvaluator:
    command: str
    metric_key: str = "SCORE"
    timeout: float = 300.0
    feedback_render: str = "Score: {score}\n{metrics}"
    kind: str = field(default="external_metric", init=False)


@dataclass(frozen=True)
class LLMJudgeEvaluator:
    template: str
    generator: GeneratorSpec
    feedback_render: str = "Rating: {score} Suggestion: {suggestion}"
    kind: str = field(default="llm_judge", init=False)


@dataclass(frozen=True)
class Game2048Evaluator:
    n_games: int = 5
    base_seed: int = 0
    move_time_limit: float = 5.0
    search_time_budget: Optional[float] = None
    move_cap: int = 20_000
    feedback_render: str = "Average score: {score}\n{metrics}"
    kind: str = field(default="game2048", init=False)


EvaluatorSpec = Union[ExternalMetricEvaluator, LLMJudgeEvaluator, Game2048Evaluator]

STOPPING_KINDS = (
    "max_iterations",
    "max_tokens",
    "max_valid_iterations",
    "max_consecutive_invalid",
    "score_threshold",
    "time_limit",
)


@dataclass(frozen=True)
class StoppingSpec:
    """``value`` is a count, a score threshold, or seconds, depending on ``kind``."""

    kind: str
    value: float


@dataclass(frozen=True)
class TaskConfig:
    prompts: PromptSpec
    generator: GeneratorSpec
    stopping: tuple[StoppingSpec, ...]
    context_window: Optional[int] = UNBOUNDED
    tests: tuple[TestSpec, ...] = ()
    analyzers: tuple[AnalyzerSpec, ...] = ()
    evaluator: Optional[EvaluatorSpec] = None
    seed: Optional[int] = None
    solution_type: SolutionType = SolutionType.TEXT
    language: Optional[str] = None
    include_analysis_in_feedback: bool = False
    clock: str = "auto"

    def generator_specs(self) -> list[GeneratorSpec]:
        specs = [self.generator]
        specs += [a.generator for a in self.analyzers if a.generator is not None]
        if isinstance(self.evaluator, LLMJudgeEvaluator):
            specs.append(self.evaluator.generator)
        return specs


def _validate_generator(path: str, spec) -> list[str]:
    out = []
    if isinstance(spec, ScriptedGeneratorSpec):
        if not spec.responses:
            out.append(f"{path}.responses: must be non-empty")
        if spec.delay < 0:
            out.append(f"{path}.delay: must be >= 0")
    elif isinstance(spec, ChatHTTPGeneratorSpec):
        if not spec.endpoint:
            out.append(f"{path}.endpoint: must be non-empty")
        if not spec.model:
            out.append(f"{path}.model: must be non-empty")
    else:
        out.append(f"{path}: unknown generator kind")
        return out
    if spec.request_timeout <= 0:
        out.append(f"{path}.request_timeout: must be positive")
    if spec.max_retries < 0:
        out.append(f"{path}.max_retries: must be >= 0")
    return out


def validate_config(config: TaskConfig) -> list[str]:
    """Return one ``"<field>: <rule>"`` string per violated configuration rule."""
    v: list[str] = []
    prompts = config.prompts
    if not prompts.initial:
        v.append("prompts.initial: must be non-empty")
    if prompts.system is not None and not prompts.system:
        v.append("prompts.system: must be non-empty when given")
    rep = prompts.repeating
    if rep is not None:
        if not rep.messages:
            v.append("repeating.messages: must be non-empty")
        elif any(not m for m in rep.messages):
            v.append("repeating.messages: entries must be non-empty")
        if rep.strategy not in ("single", "random", "random_weighted", "circular"):
            v.append(f"repeating.strategy: unknown strategy {rep.strategy!r}")
        if rep.weights is not None:
            if any(not (w > 0) for w in rep.weights):
                v.append("repeating.weights: must be positive")
            if len(rep.weights) != len(rep.messages):
                v.append("repeating.weights: must match message count")
        elif rep.strategy == "random_weighted":
            v.append("repeating.weights: required for random_weighted")
        if rep.messages and not 0 <= rep.cursor < len(rep.messages):
            v.append("repeating.cursor: must index a message")

    v += _validate_generator("generator", config.generator)

    if config.context_window is not None and config.context_window < 0:
        v.append("context_window: must be >= 0 or unbounded")

    for i, t in enumerate(config.tests):
        path = f"tests[{i}]"
        if not t.name:
            v.append(f"{path}.name: must be non-empty")
        if not t.feedback_template:
            v.append(f"{path}.feedback_template: must be non-empty")
        if isinstance(t, ExternalCheckTest):
            if t.timeout <= 0:
                v.append(f"{path}.timeout: must be positive")
            if not t.command.strip():
                v.append(f"{path}.command: must be non-empty")
        elif isinstance(t, KeywordTest):
            if not t.required and not t.forbidden:
                v.append(f"{path}: needs required or forbidden keywords")
    names = [t.name for t in config.tests]
    if len(set(names)) != len(names):
        v.append("tests: names must be unique")

    keys = set()
    for i, a in enumerate(config.analyzers):
        path = f"analyzers[{i}]"
        if a.kind not in ANALYZER_KINDS:
            v.append(f"{path}.kind: unknown analyzer {a.kind!r}")
        if not a.output_key:
            v.append(f"{path}.output_key: must be non-empty")
        elif a.output_key in keys:
            v.append(f"{path}.output_key: must be unique")
        keys.add(a.output_key)
        if a.kind == "keyword_presence" and not a.keywords:
            v.append(f"{path}.keywords: must be non-empty")
        if a.kind == "llm_analysis":
            if not a.template or "{solution}" not in a.template:
                v.append(f"{path}.template: must contain {{solution}}")
            if a.generator is None:
                v.append(f"{path}.generator: required for llm_analysis")
            else:
                v += _validate_generator(f"{path}.generator", a.generator)

    ev = config.evaluator
    if isinstance(ev, Game2048Evaluator):
        if ev.n_games < 1:
            v.append("evaluator.n_games: must be >= 1")
        if not ev.move_time_limit > 0:
            v.append("evaluator.move_time_limit: must be positive")
        if ev.search_time_budget is not None and not ev.search_time_budget > 0:
            v.append("evaluator.search_time_budget: must be positive")
        if ev.move_cap < 1:
            v.append("evaluator.move_cap: must be >= 1")
        if config.solution_type is not SolutionType.CODE:
            v.append("evaluator: game2048 needs a code solution")
    elif isinstance(ev, LLMJudgeEvaluator):
        if "{solution}" not in ev.template:
            v.append("evaluator.template: must contain {solution}")
        v += _validate_generator("evaluator.generator", ev.generator)
    elif isinstance(ev, ExternalMetricEvaluator):
        if not ev.command.strip():
            v.append("evaluator.command: must be non-empty")
        if not ev.metric_key:
            v.append("evaluator.metric_key: must be non-empty")

    if not config.stopping:
        v.append("stopping: must contain at least one condition")
    for i, s in enumerate(config.stopping):
        path = f"stopping[{i}]"
        if s.kind not in STOPPING_KINDS:
            v.append(f"{path}.kind: unknown condition {s.kind!r}")
        elif s.kind == "time_limit":
            if not s.value > 0:
                v.append(f"{path}.seconds: must be positive")
        elif s.kind != "score_threshold":
            if s.value < 1 or s.value != int(s.value):
                v.append(f"{path}.n: must be an integer >= 1")
        elif not math.isfinite(s.value):
            v.append(f"{path}.threshold: must be finite")

    if config.solution_type is SolutionType.CODE and not config.language:
        v.append("solution.language: required for code solutions")
    if config.clock not in ("auto", "wall", "logical"):
        v.append(f"clock: unknown clock {config.clock!r}")
    return v


# -- task state -----------------------------------------------------------------


@dataclass
class Counters:
    total: int = 0
    valid: int = 0
    consecutive_invalid: int = 0
    tokens_used: int = 0

    @classmethod
    def from_iterations(cls, iterations) -> "Counters":
        c = cls()
        for rec in iterations:
            c.total += 1
            c.tokens_used += rec.tokens
            if rec.valid:
                c.valid += 1
                c.consecutive_invalid = 0
            else:
                c.consecutive_invalid += 1
        return c


@dataclass(frozen=True)
class Incumbent:
    artifact_id: str
    iteration: int
    evaluation: EvaluationResult

    @property
    def score(self) -> float:
        return self.evaluation.score


@dataclass
class TaskState:
    """Mutable loop state, owned by exactly one task loop."""

    started_at: float
    iterations: list[IterationRecord] = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)
    incumbent: Optional[Incumbent] = None
    status: str = "created"
    reason: Optional[str] = None

    def record(self, rec: IterationRecord) -> None:
        self.iterations.append(rec)
        c = self.counters
        c.total += 1
        c.tokens_used += rec.tokens
        if rec.valid:
            c.valid += 1
            c.consecutive_invalid = 0
        else:
            c.consecutive_invalid += 1

    @property
    def done(self) -> bool:
        return self.status in ("finished", "stopped")
