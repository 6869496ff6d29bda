import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
SOLVERS = FIXTURES / "solvers"


@pytest.fixture(scope="session")
def story_fixture():
    return json.loads((FIXTURES / "story_replay.json").read_text(encoding="utf-8"))


def scripted(*responses, delay=0.0):
    return {"kind": "scripted", "responses": list(responses), "delay": delay}


def story_doc(fx, seed=7):
    """Config document replaying the recorded story run with a scripted judge."""
    return {
        "prompts": {
            "system": fx["system"],
            "initial": fx["initial"],
            "repeating": {"messages": [fx["repeating"]]},
        },
        "generator": scripted(*fx["stories"]),
        "evaluator": {
            "kind": "llm_judge",
            "template": "Rate this story from 1 to 10 and suggest one improvement.\n\n{solution}",
            "generator": scripted(*fx["judge_replies"]),
            "feedback_render": "Last twist evaluation:\nRating: {score} Suggestion: {suggestion}",
        },
        "stopping": [{"kind": "max_iterations", "n": 4}],
        "seed": seed,
    }


BROKEN = "```python\ndef add(a, b)\n    return a + b\n```"
FIXED = "```python\ndef add(a, b):\n    return a + b\n```"
SYNTAX_TEMPLATE = "Your code does not compile. Python reported:\n{detail}\nReturn the corrected code."


def syntax_doc(*responses, stopping=None, seed=1):
    return {
        "prompts": {"initial": "Write a Python function add(a, b) in a ```python block."},
        "generator": scripted(*responses),
        "tests": [{
            "kind": "external_check",
            "name": "syntax",
            "command": "python3 -m py_compile {file}",
            "error_class": "syntax_error",
            "feedback_template": SYNTAX_TEMPLATE,
        }],
        "stopping": stopping or [{"kind": "max_iterations", "n": len(responses)}],
        "solution": {"type": "code", "language": "python"},
        "seed": seed,
    }


ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
