"""Persistence: dataset emission, manifest, checkpoint/resume, comparison report.

All files are JSON (single object) or ndjson (one record per line).
Checkpoint writes are atomic (temp file + rename) and refuse to resume
under a different configuration digest.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import CheckpointCorrupt, ConfigMismatch, EmptyReportList, StoreNotWritable
from .ingest import SourceDocument
from .rubric import EvaluationReport, Rubric, mean_per_metric


def _utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def config_digest(engine_cfg, rubric_version: str, backend_kind: str,
                  model_name: str) -> str:
    payload = json.dumps({
        "n_seeds": engine_cfg.n_seeds,
        "n_variations": engine_cfg.n_variations,
        "threshold": engine_cfg.threshold,
        "max_rounds": engine_cfg.max_rounds,
        "include_parent_in_pool": engine_cfg.include_parent_in_pool,
        "judge_parse_retries": engine_cfg.judge_parse_retries,
        "rubric_version": rubric_version,
        "backend_kind": backend_kind,
        "model_name": model_name,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    doc_id: str
    config_snapshot: dict
    started_at: str
    finished_at: Optional[str]
    total_calls: int
    total_token_estimate: int
    outcome_summary: Dict[str, int]


@dataclass(frozen=True)
class Checkpoint:
    run_id: str
    doc_id: str
    doc_path: str
    config_digest: str
    completed: tuple  # LineageOutcome
    pending_seeds: tuple  # QAPair
    cache_entries: dict  # (doc_id, pair_id, rubric_version) -> EvaluationReport
    seeding_calls: int
    journal_sequence: int


# --- serde over engine/protocol values ---

def _pair_to_dict(pair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "question": pair.question,
        "answer": pair.answer,
        "lineage_id": pair.lineage_id,
        "generation": pair.generation,
        "parent_id": pair.parent_id,
    }


def _pair_from_dict(data: dict):
    from .protocol import QAPair
    return QAPair(
        pair_id=data["pair_id"],
        question=data["question"],
        answer=data["answer"],
        lineage_id=data["lineage_id"],
        generation=data["generation"],
        parent_id=data.get("parent_id"),
    )


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "candidate_id": report.candidate_id,
        "scores": report.scores,
        "overall": report.overall,
        "judge_rationale": report.judge_rationale,
        "raw_response_digest": report.raw_response_digest,
    }


def report_from_dict(data: dict) -> EvaluationReport:
    return EvaluationReport(
        candidate_id=data["candidate_id"],
        scores={k: float(v) for k, v in data["scores"].items()},
        overall=float(data["overall"]),
        judge_rationale=data.get("judge_rationale", ""),
        raw_response_digest=data.get("raw_response_digest", ""),
    )


def outcome_to_dict(outcome) -> dict:
    return {
        "lineage_id": outcome.lineage_id,
        "status": outcome.status,
        "rounds_used": outcome.rounds_used,
        "history": list(outcome.history),
        "calls_made": outcome.calls_made,
        "accepted": {
            "pair": _pair_to_dict(outcome.accepted.pair),
            "report": report_to_dict(outcome.accepted.report),
        },
    }


def outcome_from_dict(data: dict):
    from .engine import LineageOutcome, ScoredCandidate
    return LineageOutcome(
        lineage_id=data["lineage_id"],
        accepted=ScoredCandidate(
            pair=_pair_from_dict(data["accepted"]["pair"]),
            report=report_from_dict(data["accepted"]["report"]),
        ),
        status=data["status"],
        rounds_used=data["rounds_used"],
        history=tuple(data["history"]),
        calls_made=data["calls_made"],
    )


# --- dataset ---

def dataset_record(outcome) -> dict:
    accepted = outcome.accepted
    return {
        "lineage_id": outcome.lineage_id,
        "question": accepted.pair.question,
        "answer": accepted.pair.answer,
        "overall": accepted.report.overall,
        "scores": accepted.report.scores,
        "status": outcome.status,
        "generation": accepted.pair.generation,
        "rounds_used": outcome.rounds_used,
    }


def append_dataset_record(path, outcome) -> None:
    line = json.dumps(dataset_record(outcome), ensure_ascii=False, sort_keys=True)
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise StoreNotWritable(f"cannot append to {path}: {exc}") from exc


def read_dataset(path) -> List[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


# --- scores files (ndjson of EvaluationReports) ---

def write_scores_file(path, reports: List[EvaluationReport]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for report in reports:
                fh.write(json.dumps(report_to_dict(report), ensure_ascii=False,
                                    sort_keys=True) + "\n")
    except OSError as exc:
        raise StoreNotWritable(f"cannot write {path}: {exc}") from exc


def read_scores_file(path) -> List[EvaluationReport]:
    reports = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            reports.append(report_from_dict(json.loads(line)))
    return reports


# --- checkpoint ---

def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreNotWritable(f"cannot write {path}: {exc}") from exc


def save_checkpoint(state: Checkpoint, path) -> None:
    cache = [
        {"doc_id": k[0], "pair_id": k[1], "rubric_version": k[2],
         "report": report_to_dict(v)}
        for k, v in sorted(state.cache_entries.items())
    ]
    payload = {
        "run_id": state.run_id,
        "doc_id": state.doc_id,
        "doc_path": state.doc_path,
        "config_digest": state.config_digest,
        "completed": [outcome_to_dict(o) for o in state.completed],
        "pending_seeds": [_pair_to_dict(s) for s in state.pending_seeds],
        "cache": cache,
        "seeding_calls": state.seeding_calls,
        "journal_sequence": state.journal_sequence,
    }
    _atomic_write(Path(path), json.dumps(payload, ensure_ascii=False, sort_keys=True))


def load_checkpoint(path, expected_config_digest: Optional[str] = None) -> Checkpoint:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        state = Checkpoint(
            run_id=data["run_id"],
            doc_id=data["doc_id"],
            doc_path=data.get("doc_path", ""),
            config_digest=data["config_digest"],
            completed=tuple(outcome_from_dict(o) for o in data["completed"]),
            pending_seeds=tuple(_pair_from_dict(s) for s in data["pending_seeds"]),
            cache_entries={
                (e["doc_id"], e["pair_id"], e["rubric_version"]):
                    report_from_dict(e["report"])
                for e in data.get("cache", [])
            },
            seeding_calls=data.get("seeding_calls", 0),
            journal_sequence=data["journal_sequence"],
        )
    except OSError as exc:
        raise CheckpointCorrupt(f"cannot read checkpoint {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointCorrupt(f"checkpoint {path} is corrupt: {exc}") from exc
    if expected_config_digest is not None and state.config_digest != expected_config_digest:
        raise ConfigMismatch(
            f"checkpoint was written under config {state.config_digest[:12]}, "
            f"current config is {expected_config_digest[:12]}")
    return state


# --- comparison report ---

@dataclass(frozen=True)
class ComparisonReport:
    per_metric: Dict[str, Dict[str, float]]  # metric_id -> {mean_a, mean_b}
    overall_a: float
    overall_b: float
    n_a: int
    n_b: int
    # mean of per-metric means, the alternative reading of "overall"
    metric_mean_a: float
    metric_mean_b: float


def compare_report(reports_a: List[EvaluationReport],
                   reports_b: List[EvaluationReport],
                   rubric: Rubric) -> ComparisonReport:
    if not reports_a or not reports_b:
        raise EmptyReportList("both sides must be non-empty")
    means_a, overall_a = mean_per_metric(reports_a, rubric)
    means_b, overall_b = mean_per_metric(reports_b, rubric)
    per_metric = {
        mid: {"mean_a": means_a[mid], "mean_b": means_b[mid]}
        for mid in rubric.metric_ids()
    }
    n_metrics = len(rubric.metrics)
    return ComparisonReport(
        per_metric=per_metric,
        overall_a=overall_a,
        overall_b=overall_b,
        n_a=len(reports_a),
        n_b=len(reports_b),
        metric_mean_a=sum(means_a.values()) / n_metrics,
        metric_mean_b=sum(means_b.values()) / n_metrics,
    )


def comparison_to_dict(report: ComparisonReport) -> dict:
    return {
        "per_metric": report.per_metric,
        "overall_mean_of_reports": {"a": report.overall_a, "b": report.overall_b},
        "mean_of_metric_means": {"a": report.metric_mean_a, "b": report.metric_mean_b},
        "n_a": report.n_a,
        "n_b": report.n_b,
    }


def comparison_table(report: ComparisonReport) -> str:
    """Fixed-width table: metric, side A mean, side B mean, delta."""
    lines = [f"{'metric':<24} {'side A':>10} {'side B':>10} {'delta':>10}"]
    for mid, means in report.per_metric.items():
        delta = means["mean_a"] - means["mean_b"]
        lines.append(
            f"{mid:<24} {means['mean_a']:>10.2f} {means['mean_b']:>10.2f} {delta:>+10.2f}")
    delta = report.overall_a - report.overall_b
    lines.append(
        f"{'overall':<24} {report.overall_a:>10.2f} {report.overall_b:>10.2f} {delta:>+10.2f}")
    return "\n".join(lines) + "\n"


# --- manifest ---

def write_manifest(manifest: RunManifest, path) -> None:
    payload = {
        "run_id": manifest.run_id,
        "doc_id": manifest.doc_id,
        "config_snapshot": manifest.config_snapshot,
        "started_at": manifest.started_at,
        "finished_at": manifest.finished_at,
        "total_calls": manifest.total_calls,
        "total_token_estimate": manifest.total_token_estimate,
        "outcome_summary": manifest.outcome_summary,
    }
    _atomic_write(Path(path), json.dumps(payload, ensure_ascii=False, sort_keys=True,
                                         indent=2))


class FileRunSink:
    """Owns a run's output directory: dataset.ndjson, manifest.json, checkpoint.json.

    Checkpoint writes are serialized; the dataset is rewritten in seed
    order at finalize so interrupted-and-resumed runs emit byte-identical
    files.
    """

    def __init__(self, out_dir, run_id: str, doc_id: str, doc_path: str, engine_cfg,
                 rubric_version: str, backend_kind: str, model_name: str,
                 gateway=None, journal_sequence: int = 0):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.run_id = run_id
        self.doc_id = doc_id
        self.doc_path = doc_path
        self.engine_cfg = engine_cfg
        self.rubric_version = rubric_version
        self.backend_kind = backend_kind
        self.model_name = model_name
        self.gateway = gateway
        self.started_at = _utcnow()
        self._journal_sequence = journal_sequence
        self._lock = threading.Lock()

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / "dataset.ndjson"

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / "manifest.json"

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / "checkpoint.json"

    def _config_digest(self) -> str:
        return config_digest(self.engine_cfg, self.rubric_version,
                             self.backend_kind, self.model_name)

    def checkpoint(self, completed, pending_seeds, cache_entries,
                   seeding_calls: int = 0) -> None:
        with self._lock:
            self._journal_sequence += 1
            state = Checkpoint(
                run_id=self.run_id,
                doc_id=self.doc_id,
                doc_path=self.doc_path,
                config_digest=self._config_digest(),
                completed=tuple(completed),
                pending_seeds=tuple(pending_seeds),
                cache_entries=cache_entries,
                seeding_calls=seeding_calls,
                journal_sequence=self._journal_sequence,
            )
            save_checkpoint(state, self.checkpoint_path)

    def finalize(self, doc: SourceDocument, completed, seeding_calls: int = 0,
                 aborted: bool = False) -> RunManifest:
        with self._lock:
            if self.dataset_path.exists():
                self.dataset_path.unlink()
            for outcome in completed:
                append_dataset_record(self.dataset_path, outcome)
            summary: Dict[str, int] = {}
            for outcome in completed:
                summary[outcome.status] = summary.get(outcome.status, 0) + 1
            manifest = RunManifest(
                run_id=self.run_id,
                doc_id=doc.doc_id,
                config_snapshot={
                    "n_seeds": self.engine_cfg.n_seeds,
                    "n_variations": self.engine_cfg.n_variations,
                    "threshold": self.engine_cfg.threshold,
                    "max_rounds": self.engine_cfg.max_rounds,
                    "include_parent_in_pool": self.engine_cfg.include_parent_in_pool,
                    "judge_parse_retries": self.engine_cfg.judge_parse_retries,
                    "rubric_version": self.rubric_version,
                    "backend_kind": self.backend_kind,
                    "model_name": self.model_name,
                },
                started_at=self.started_at,
                finished_at=None if aborted else _utcnow(),
                total_calls=seeding_calls + sum(o.calls_made for o in completed),
                total_token_estimate=(
                    self.gateway.total_token_estimate if self.gateway else 0),
                outcome_summary=summary,
            )
            write_manifest(manifest, self.manifest_path)
            return manifest
