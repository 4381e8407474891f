"""Shared fixtures: a tiny document and scripted-backend builders.

The scripted rules parse the counts and the embedded candidate back out
of the rendered prompts, so one backend serves any engine configuration.
"""
from __future__ import annotations

import re
from typing import Callable, Dict, Union

import pytest

from evoqa.gateway import Gateway, RetryPolicy, ScriptedBackend
from evoqa.ingest import SourceDocument
from evoqa.protocol import QAPair, format_judge_payload, format_qa_batch
from evoqa.rubric import default_rubric

DOC_TEXT = (
    "Photosynthesis converts light energy into chemical energy. "
    "Chlorophyll absorbs mostly red and blue light. "
    "The light reactions occur in the thylakoid membranes, while the "
    "Calvin cycle fixes carbon dioxide in the stroma."
)

ScoreFn = Callable[[str, str], Union[float, Dict[str, float]]]


@pytest.fixture
def doc() -> SourceDocument:
    return SourceDocument.from_text(DOC_TEXT, origin_path="<test>")


def _between(text: str, start: str, end: str) -> str:
    i = text.index(start) + len(start)
    return text[i:text.index(end, i)]


def seed_rule(req) -> str:
    n = int(re.search(r"produce exactly (\d+) unique", req.prompt.text).group(1))
    pairs = [QAPair.create(f"Seed question {i}?", f"Seed answer {i}.")
             for i in range(n)]
    return format_qa_batch(pairs)


def variation_rule(req) -> str:
    text = req.prompt.text
    v = int(re.search(r"create exactly (\d+) variations", text).group(1))
    question = _between(text, "Parent question:\n", "\n\nParent answer:")
    answer = _between(text, "Parent answer:\n", "\n\nTask:")
    pairs = [QAPair.create(f"{question} v{i}", f"{answer} v{i}") for i in range(v)]
    return format_qa_batch(pairs)


def extract_candidate(prompt_text: str):
    question = _between(prompt_text, "Candidate question:\n", "\n\nCandidate answer:")
    answer = _between(prompt_text, "Candidate answer:\n", "\n\nScore the candidate")
    return question, answer


def judge_rule_from(score_fn: ScoreFn):
    metric_ids = default_rubric().metric_ids()

    def judge_rule(req) -> str:
        question, answer = extract_candidate(req.prompt.text)
        scores = score_fn(question, answer)
        if isinstance(scores, (int, float)):
            scores = {mid: float(scores) for mid in metric_ids}
        return format_judge_payload(scores, "scripted judgement")

    return judge_rule


def round_of(question: str) -> int:
    """Variation round a scripted child belongs to (0 for seeds)."""
    return len(re.findall(r" v\d+", question))


def make_backend(score_fn: ScoreFn) -> ScriptedBackend:
    return ScriptedBackend(by_role={
        "seed": seed_rule,
        "variation": variation_rule,
        "judge": judge_rule_from(score_fn),
    })


def make_gateway(backend, **kwargs) -> Gateway:
    kwargs.setdefault("retry_policy", RetryPolicy(base_backoff_ms=1))
    kwargs.setdefault("sleeper", lambda seconds: None)
    return Gateway(backend, **kwargs)
