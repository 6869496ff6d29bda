from datetime import datetime, timezone

import pytest

from evoloop.model import (
    CodeExtractionTest,
    ExternalCheckTest,
    KeywordTest,
    SolutionArtifact,
    SolutionType,
    TestFailure,
    TestOutcome,
)
from evoloop.validation import extract_code, feedback_for, find_fences, run_tests

NOW = datetime(2024, 1, 1, tzinfo=timezone.utc)


def art(content, raw=None, language="python"):
    return SolutionArtifact("01TEST", SolutionType.CODE, content, 1, NOW, language, raw if raw is not None else content)


SYNTAX = ExternalCheckTest(
    "syntax", "Syntax error:\n{detail}", "python3 -m py_compile {file}", error_class="syntax_error"
)


def test_extract_prefers_tagged_then_untagged_then_raw():
    raw = "text\n```\nuntagged\n```\n```python\ntagged\n```\n"
    assert extract_code(raw, "python") == "tagged"
    assert extract_code("```\nplain\n```", "python") == "plain"
    assert extract_code("no fences", "python") == "no fences"
    assert find_fences(raw) == [("", "untagged\n"), ("python", "tagged\n")]


def test_keyword_required_and_forbidden():
    suite = [KeywordTest("imports", "Fix imports: {detail}", required=("def move",), forbidden=("import torch",))]
    assert run_tests(art("def move(g, s): pass"), suite).passed
    out = run_tests(art("import torch\ndef move(g, s): pass"), suite)
    assert out.failures[0].error_class == "forbidden_keyword"
    out = run_tests(art("pass"), suite)
    assert out.failures[0].error_class == "missing_keyword"
    assert "'def move'" in out.failures[0].detail


def test_code_extraction_checks_the_raw_reply():
    test = CodeExtractionTest("fence", "Use a ```python block.")
    assert run_tests(art("x = 1", raw="```python\nx = 1\n```"), [test]).passed
    out = run_tests(art("x = 1", raw="x = 1"), [test])
    assert out.failures[0].error_class == "missing_code_block"


def test_syntax_check_passes_and_fails():
    assert run_tests(art("def f():\n    return 1\n"), [SYNTAX]).passed
    out = run_tests(art("def f(\n"), [SYNTAX])
    (failure,) = out.failures
    assert failure.error_class == "syntax_error"
    assert "<solution>" in failure.detail and "solution_" not in failure.detail


def test_external_check_timeout_and_missing_tool():
    slow = ExternalCheckTest("slow", "t", "sleep 5", timeout=0.2)
    assert run_tests(art("x"), [slow]).failures[0].error_class == "timeout"
    missing = ExternalCheckTest("tool", "t", "definitely-not-a-real-binary-xyz {file}")
    assert run_tests(art("x"), [missing]).failures[0].error_class == "tool_unavailable"


def test_all_failures_collected_in_suite_order():
    suite = [KeywordTest("a", "A {detail}", required=("zzz",)), SYNTAX]
    out = run_tests(art("def f(\n"), suite)
    assert [f.test_name for f in out.failures] == ["a", "syntax"]
    text = feedback_for(out, suite)
    assert text.startswith("A missing required keyword") and "\n\nSyntax error:\n" in text


def test_feedback_requires_failure():
    with pytest.raises(ValueError):
        feedback_for(TestOutcome(), [])


def test_unknown_failure_uses_generator_template():
    out = TestOutcome((TestFailure("generator", "generator_failure", "HTTP 500"),))
    assert feedback_for(out, []) == "The previous request failed: HTTP 500"
