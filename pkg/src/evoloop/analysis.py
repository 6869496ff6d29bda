"""Optional metadata extraction from valid solutions."""

from __future__ import annotations

import logging
from typing import Sequence

from .connectors import estimate_tokens, make_generator
from .model import AnalysisReport, AnalyzerSpec, Message, MessageKind, Role, SolutionArtifact
from .prompts import render_template

log = logging.getLogger(__name__)


class UnsupportedSolution(TypeError):
    pass


def run_llm_analysis(artifact: SolutionArtifact, template: str, spec, clock=None, generator=None) -> str:
    """Ask an analysis generator about ``artifact`` in a single-turn conversation."""
    if "{solution}" not in template:
        raise ValueError("analysis template must contain {solution}")
    prompt = render_template(template, solution=artifact.text)
    gen = generator or make_generator(spec, clock=clock)
    reply = gen.generate([Message(Role.USER, prompt, MessageKind.INITIAL)])
    return reply.message.content


def _text(artifact: SolutionArtifact) -> str:
    if isinstance(artifact.content, bytes):
        raise UnsupportedSolution("binary solutions are not analyzed")
    return artifact.content


def _analyze_one(artifact, spec: AnalyzerSpec, generators, clock):
    if spec.kind == "line_count":
        return len(_text(artifact).splitlines())
    if spec.kind == "char_count":
        return len(_text(artifact))
    if spec.kind == "token_estimate":
        return estimate_tokens(_text(artifact))
    if spec.kind == "keyword_presence":
        text = _text(artifact)
        return all(k in text for k in spec.keywords)
    if spec.kind == "llm_analysis":
        return run_llm_analysis(
            artifact, spec.template or "", spec.generator, clock=clock,
            generator=generators.get(spec.output_key),
        )
    raise ValueError(f"unknown analyzer {spec.kind!r}")


def analyze(
    artifact: SolutionArtifact,
    analyzers: Sequence[AnalyzerSpec],
    generators: dict | None = None,
    clock=None,
) -> AnalysisReport:
    """One entry per analyzer; a failing analyzer records ``"error:<class>"``.

    ``generators`` maps output keys to live generator instances so that
    scripted analysis generators keep their position across iterations.
    """
    generators = generators or {}
    entries = {}
    for spec in analyzers:
        try:
            entries[spec.output_key] = _analyze_one(artifact, spec, generators, clock)
        except Exception as exc:  # noqa: BLE001 - analysis never aborts the loop
            log.warning("analyzer %s failed: %s", spec.output_key, exc)
            entries[spec.output_key] = f"error:{type(exc).__name__}"
    return AnalysisReport(entries)
