"""User-defined tests on generated solutions and the error feedback they produce."""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
from typing import Sequence

from .model import (
    CodeExtractionTest,
    ExternalCheckTest,
    KeywordTest,
    SolutionArtifact,
    TestFailure,
    TestOutcome,
)
from .prompts import render_template

_FENCE = re.compile(r"^```[ \t]*([^\s`]*)[^\n]*\n(.*?)^```[ \t]*$", re.M | re.S)

FILE_SUFFIXES = {
    "python": ".py",
    "c": ".c",
    "cpp": ".cpp",
    "javascript": ".js",
    "typescript": ".ts",
    "rust": ".rs",
    "go": ".go",
    "java": ".java",
}


def find_fences(raw: str) -> list[tuple[str, str]]:
    """All fenced blocks as ``(tag, body)`` pairs, in order."""
    return [(m.group(1).lower(), m.group(2)) for m in _FENCE.finditer(raw)]


def extract_code(raw: str, language_id: str) -> str:
    """Body of the first fence tagged ``language_id``, else the first untagged
    fence, else ``raw`` unchanged."""
    fences = find_fences(raw)
    language_id = language_id.lower()
    for tag, body in fences:
        if tag == language_id:
            return body.rstrip("\n")
    for tag, body in fences:
        if not tag:
            return body.rstrip("\n")
    return raw


def _keyword_check(test: KeywordTest, text: str) -> TestFailure | None:
    missing = [k for k in test.required if k not in text]
    present = [k for k in test.forbidden if k in text]
    if not missing and not present:
        return None
    details = []
    if missing:
        details.append("missing required keyword(s): " + ", ".join(repr(k) for k in missing))
    if present:
        details.append("contains forbidden keyword(s): " + ", ".join(repr(k) for k in present))
    error_class = "missing_keyword" if missing else "forbidden_keyword"
    return TestFailure(test.name, error_class, "; ".join(details))


def _extraction_check(test: CodeExtractionTest, artifact: SolutionArtifact) -> TestFailure | None:
    raw = artifact.raw or artifact.text
    tags = [tag for tag, _ in find_fences(raw)]
    if test.language.lower() in tags or "" in tags:
        return None
    return TestFailure(
        test.name, "missing_code_block", f"no ```{test.language} fenced code block found"
    )


def _external_check(test: ExternalCheckTest, artifact: SolutionArtifact) -> TestFailure | None:
    suffix = FILE_SUFFIXES.get((artifact.language or "").lower(), ".txt")
    fd, path = tempfile.mkstemp(prefix="solution_", suffix=suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            data = artifact.content
            fh.write(data if isinstance(data, bytes) else data.encode("utf-8"))
        argv = [
            render_template(tok, file=path, language=artifact.language or "")
            for tok in shlex.split(test.command)
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=test.timeout
            )
        except subprocess.TimeoutExpired:
            return TestFailure(test.name, "timeout", f"check exceeded {test.timeout}s")
        except OSError as exc:
            return TestFailure(test.name, "tool_unavailable", f"{argv[0]}: {exc.strerror or exc}")
        if proc.returncode == test.pass_exit_code:
            return None
        output = (proc.stderr.strip() or proc.stdout.strip()).replace(path, "<solution>")
        detail = output[-2000:] if output else f"exit code {proc.returncode}"
        return TestFailure(test.name, test.error_class or test.name, detail)
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass


def run_tests(artifact: SolutionArtifact, suite: Sequence) -> TestOutcome:
    """Run every test in order and collect all failures."""
    failures = []
    for test in suite:
        if isinstance(test, KeywordTest):
            failure = _keyword_check(test, artifact.text)
        elif isinstance(test, CodeExtractionTest):
            failure = _extraction_check(test, artifact)
        elif isinstance(test, ExternalCheckTest):
            failure = _external_check(test, artifact)
        else:
            raise TypeError(f"unsupported test spec {test!r}")
        if failure is not None:
            failures.append(failure)
    return TestOutcome(tuple(failures))


GENERATOR_FAILURE_TEMPLATE = "The previous request failed: {detail}"


def feedback_for(outcome: TestOutcome, suite: Sequence) -> str:
    """Render each failing test's feedback template, blank-line separated."""
    if outcome.passed:
        raise ValueError("feedback_for needs a failing outcome")
    templates = {t.name: t.feedback_template for t in suite}
    parts = []
    for failure in outcome.failures:
        template = templates.get(failure.test_name, GENERATOR_FAILURE_TEMPLATE)
        parts.append(render_template(template, detail=failure.detail))
    return "\n\n".join(parts)
