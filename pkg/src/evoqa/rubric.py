"""The 15-metric fitness rubric and score aggregation.

The overall fitness of a candidate is the weighted arithmetic mean of its
per-metric scores. Six of the default metric names come straight from the
method description (relevance, depth, factual accuracy, conciseness,
clarity, hallucination absence) plus coverage from the comparison study;
the remaining defaults fill out the 15 and are fully replaceable via a
rubric file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from .errors import EmptyReportList, MissingMetric, ScoreOutOfRange, UnknownMetric


@dataclass(frozen=True)
class Metric:
    metric_id: str
    display_name: str
    description: str
    weight: Fraction = Fraction(1)


@dataclass(frozen=True)
class Rubric:
    rubric_version: str
    metrics: Tuple[Metric, ...]
    scale_max: int = 10

    def metric_ids(self) -> List[str]:
        return [m.metric_id for m in self.metrics]


@dataclass(frozen=True)
class EvaluationReport:
    candidate_id: str
    scores: Dict[str, float]
    overall: float
    judge_rationale: str
    raw_response_digest: str


_DEFAULT_METRICS = [
    ("relevance", "Relevance", "How directly the pair addresses content of the source document."),
    ("depth", "Depth", "Depth of understanding the question demands and the answer demonstrates."),
    ("factual_accuracy", "Factual Accuracy", "Agreement of the answer with facts stated in the document."),
    ("conciseness", "Conciseness", "Absence of padding; the answer says what it needs and stops."),
    ("clarity", "Clarity", "Unambiguous phrasing of both question and answer."),
    ("hallucination_absence", "Hallucination Absence", "No claims that are absent from or contradicted by the document."),
    ("coverage", "Coverage", "How much of the relevant document material the pair draws on."),
    ("coherence", "Coherence", "Logical flow between the question and its answer."),
    ("specificity", "Specificity", "Preference for concrete, document-specific detail over generalities."),
    ("answer_completeness", "Answer Completeness", "The answer fully resolves the question as asked."),
    ("question_quality", "Question Quality", "The question is well-formed, answerable, and non-trivial."),
    ("grounding", "Grounding", "Traceability of every claim to a passage in the document."),
    ("non_redundancy", "Non-redundancy", "No repetition within the pair or restating the question as the answer."),
    ("fluency", "Fluency", "Grammatical, natural language."),
    ("self_containment", "Self-containment", "The pair is understandable without external context beyond the document."),
]

DEFAULT_RUBRIC_VERSION = "evoqa-default-1"


def default_rubric() -> Rubric:
    """The built-in 15-metric rubric, unit weights, 0-10 scale."""
    return Rubric(
        rubric_version=DEFAULT_RUBRIC_VERSION,
        metrics=tuple(Metric(mid, name, desc) for mid, name, desc in _DEFAULT_METRICS),
        scale_max=10,
    )


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


def validate_rubric(rubric: Rubric) -> List[Violation]:
    """Return violations; an empty list means the rubric is usable."""
    violations = []
    if not rubric.metrics:
        violations.append(Violation("EmptyMetricList", "rubric has no metrics"))
    if rubric.scale_max < 1:
        violations.append(Violation("BadScaleMax", f"scale_max {rubric.scale_max} < 1"))
    seen = set()
    for m in rubric.metrics:
        if m.metric_id in seen:
            violations.append(Violation("DuplicateMetricId", m.metric_id))
        seen.add(m.metric_id)
        if m.weight <= 0:
            violations.append(Violation("NonPositiveWeight", m.metric_id))
        if not m.metric_id or m.metric_id != m.metric_id.lower():
            violations.append(Violation("BadMetricId", m.metric_id))
    return violations


def _check_scores(scores: Dict[str, float], rubric: Rubric) -> None:
    ids = set(rubric.metric_ids())
    for mid in ids:
        if mid not in scores:
            raise MissingMetric(mid)
    for mid, value in scores.items():
        if mid not in ids:
            raise UnknownMetric(mid)
        if not (0 <= value <= rubric.scale_max):
            raise ScoreOutOfRange(mid, value)


def aggregate_overall(scores: Dict[str, float], rubric: Rubric) -> float:
    """Weighted arithmetic mean of the scores under the rubric's weights.

    Computed in exact rational arithmetic so unit-weight means like
    (14*9 + 6)/15 come out exactly.
    """
    _check_scores(scores, rubric)
    num = Fraction(0)
    den = Fraction(0)
    for m in rubric.metrics:
        num += m.weight * Fraction(scores[m.metric_id]).limit_denominator(10**9)
        den += m.weight
    return float(num / den)


def mean_per_metric(reports: Iterable[EvaluationReport],
                    rubric: Rubric) -> Tuple[Dict[str, float], float]:
    """Column means across reports, plus the mean of per-report overalls."""
    reports = list(reports)
    if not reports:
        raise EmptyReportList("no reports to average")
    per_metric = {}
    n = len(reports)
    for mid in rubric.metric_ids():
        total = Fraction(0)
        for r in reports:
            if mid not in r.scores:
                raise MissingMetric(mid)
            total += Fraction(r.scores[mid]).limit_denominator(10**9)
        per_metric[mid] = float(total / n)
    overall_mean = float(
        sum(Fraction(r.overall).limit_denominator(10**9) for r in reports) / n)
    return per_metric, overall_mean


# --- rubric file format: {rubric_version, scale_max, metrics:[{id,name,description,weight}]} ---

def rubric_to_dict(rubric: Rubric) -> dict:
    return {
        "rubric_version": rubric.rubric_version,
        "scale_max": rubric.scale_max,
        "metrics": [
            {"id": m.metric_id, "name": m.display_name,
             "description": m.description, "weight": float(m.weight)}
            for m in rubric.metrics
        ],
    }


def rubric_from_dict(data: dict) -> Rubric:
    metrics = tuple(
        Metric(
            metric_id=m["id"],
            display_name=m.get("name", m["id"]),
            description=m.get("description", ""),
            weight=Fraction(str(m.get("weight", 1))),
        )
        for m in data["metrics"]
    )
    return Rubric(
        rubric_version=data["rubric_version"],
        metrics=metrics,
        scale_max=int(data.get("scale_max", 10)),
    )


def load_rubric(path) -> Rubric:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    rubric = rubric_from_dict(data)
    violations = validate_rubric(rubric)
    if violations:
        raise ValueError(f"invalid rubric {path}: {violations}")
    return rubric
