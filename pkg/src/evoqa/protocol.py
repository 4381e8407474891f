"""Prompt rendering and response parsing: the textual wire protocol.

Three prompt roles (seed, variation, judge) are rendered from template
files with {{placeholder}} substitution. Responses are parsed leniently
at the extraction stage (fenced block first, bracket matching as
fallback) and strictly validated afterwards.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Dict, List, Optional, Tuple

from .errors import (
    DuplicatePair,
    MalformedRecord,
    NonNumericScore,
    NoStructuredBlock,
    WrongCount,
)
from .ingest import SourceDocument, fingerprint
from .rubric import EvaluationReport, Rubric, aggregate_overall

ROLE_SEED = "seed"
ROLE_VARIATION = "variation"
ROLE_JUDGE = "judge"


@dataclass(frozen=True)
class QAPair:
    pair_id: str
    question: str
    answer: str
    lineage_id: str
    generation: int
    parent_id: Optional[str] = None

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise MalformedRecord("question and answer must be non-empty")
        if (self.generation == 0) != (self.parent_id is None):
            raise MalformedRecord(
                "generation 0 iff parent_id absent "
                f"(generation={self.generation}, parent_id={self.parent_id})")

    @classmethod
    def create(cls, question: str, answer: str, lineage_id: str = "",
               generation: int = 0, parent_id: Optional[str] = None) -> "QAPair":
        return cls(
            pair_id=compute_pair_id(question, answer),
            question=question,
            answer=answer,
            lineage_id=lineage_id,
            generation=generation,
            parent_id=parent_id,
        )

    def with_lineage(self, lineage_id: str, generation: int,
                     parent_id: Optional[str]) -> "QAPair":
        return replace(self, lineage_id=lineage_id, generation=generation,
                       parent_id=parent_id)


def compute_pair_id(question: str, answer: str) -> str:
    payload = question.encode("utf-8") + b"\x1f" + answer.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class PromptText:
    role_tag: str
    text: str
    context_digest: str


def _load_template(name: str) -> str:
    return resources.files("evoqa.templates").joinpath(f"{name}.txt").read_text(
        encoding="utf-8")


def _fill(template: str, values: Dict[str, str]) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{{" + key + "}}", value)
    return out


def render_seed_prompt(doc: SourceDocument, n: int) -> PromptText:
    if n < 1:
        raise ValueError("n must be >= 1")
    text = _fill(_load_template("seed"), {
        "document": doc.text,
        "count": str(n),
    })
    return PromptText(ROLE_SEED, text, doc.doc_id)


def render_variation_prompt(parent: QAPair, v: int) -> PromptText:
    if v < 1:
        raise ValueError("v must be >= 1")
    text = _fill(_load_template("variation"), {
        "question": parent.question,
        "answer": parent.answer,
        "count": str(v),
    })
    # variation prompts carry no document; digest the parent instead
    return PromptText(ROLE_VARIATION, text, fingerprint(parent.question + parent.answer))


def render_judge_prompt(doc: SourceDocument, qa: QAPair, rubric: Rubric) -> PromptText:
    metric_lines = "\n".join(
        f"- {m.metric_id} ({m.display_name}): {m.description}"
        for m in rubric.metrics)
    text = _fill(_load_template("judge"), {
        "document": doc.text,
        "question": qa.question,
        "answer": qa.answer,
        "scale_max": str(rubric.scale_max),
        "metrics": metric_lines,
    })
    return PromptText(ROLE_JUDGE, text, doc.doc_id)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def extract_structured_block(raw: str) -> str:
    """Contents of the first fenced block, else the first balanced {...}/[...]."""
    m = _FENCE_RE.search(raw)
    if m:
        return m.group(1).strip()
    found = _first_balanced(raw)
    if found is None:
        raise NoStructuredBlock("no fenced block or balanced bracket structure found")
    return found


def _first_balanced(raw: str) -> Optional[str]:
    start = None
    depth = 0
    in_string = False
    escaped = False
    for i, ch in enumerate(raw):
        if start is not None and in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch in "[{":
            if start is None:
                start = i
            depth += 1
        elif ch in "]}":
            if start is not None:
                depth -= 1
                if depth == 0:
                    return raw[start:i + 1]
        elif ch == '"' and start is not None:
            in_string = True
    return None


def parse_qa_batch(raw: str, expected_n: int) -> List[QAPair]:
    """Parse a model response into exactly expected_n generation-0 pairs.

    Lineage metadata is attached later by the engine via with_lineage.
    """
    block = extract_structured_block(raw)
    try:
        data = json.loads(block)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"structured block is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedRecord("expected a JSON array of question/answer objects")
    if len(data) != expected_n:
        raise WrongCount(len(data), expected_n)
    pairs = []
    seen = set()
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise MalformedRecord(f"record {i} is not an object")
        question = item.get("question")
        answer = item.get("answer")
        if not isinstance(question, str) or not question.strip():
            raise MalformedRecord(f"record {i}: missing or empty question")
        if not isinstance(answer, str) or not answer.strip():
            raise MalformedRecord(f"record {i}: missing or empty answer")
        pair = QAPair.create(question, answer)
        if pair.pair_id in seen:
            raise DuplicatePair(f"record {i} duplicates an earlier pair")
        seen.add(pair.pair_id)
        pairs.append(pair)
    return pairs


def parse_judge_report(raw: str, rubric: Rubric, candidate_id: str) -> EvaluationReport:
    """Parse a judge response; out-of-range scores are errors, never clamped."""
    block = extract_structured_block(raw)
    try:
        data = json.loads(block)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"structured block is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("scores"), dict):
        raise MalformedRecord('expected an object with a "scores" mapping')
    raw_scores = data["scores"]
    scores = {}
    for mid, value in raw_scores.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise NonNumericScore(mid)
        scores[mid] = float(value)
    overall = aggregate_overall(scores, rubric)  # raises Missing/Unknown/OutOfRange
    return EvaluationReport(
        candidate_id=candidate_id,
        scores=scores,
        overall=overall,
        judge_rationale=str(data.get("rationale", "")),
        raw_response_digest=fingerprint(raw),
    )


# --- serialization of the output contract (used by tests and scripted backends) ---

def format_qa_batch(pairs: List[QAPair]) -> str:
    payload = [{"question": p.question, "answer": p.answer} for p in pairs]
    return "```json\n" + json.dumps(payload, ensure_ascii=False, indent=2) + "\n```"


def format_judge_payload(scores: Dict[str, float], rationale: str = "") -> str:
    payload = {"scores": scores, "rationale": rationale}
    return "```json\n" + json.dumps(payload, ensure_ascii=False, indent=2) + "\n```"
