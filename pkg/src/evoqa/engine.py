"""Evolutionary core: seeding, per-lineage refinement loop, full-run orchestration.

One lineage = one seed pair evolved independently. Each round generates
variations of the current parent, scores the pool with the judge, keeps
the best, and stops once the best clears the acceptance threshold or the
round cap is hit. With the parent included in the pool the best-so-far
score can never regress between rounds.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .errors import (
    EmptyPool,
    EvaluationFailed,
    EvoQAError,
    LineageFailed,
    RunFailed,
    SeedGenerationFailed,
)
from .gateway import (
    CompletionRequest,
    DEFAULT_CREATIVE_TEMPERATURE,
    DEFAULT_JUDGE_TEMPERATURE,
    Gateway,
)
from .ingest import SourceDocument
from .protocol import (
    QAPair,
    parse_judge_report,
    parse_qa_batch,
    render_judge_prompt,
    render_seed_prompt,
    render_variation_prompt,
)
from .rubric import EvaluationReport, Rubric

STATUS_THRESHOLD_MET = "threshold_met"
STATUS_ROUND_CAP = "round_cap_reached"


@dataclass(frozen=True)
class EngineConfig:
    n_seeds: int = 10
    n_variations: int = 10
    threshold: float = 8.0
    max_rounds: int = 10
    include_parent_in_pool: bool = True
    judge_parse_retries: int = 2
    max_concurrent_lineages: int = 4

    def __post_init__(self):
        if self.n_seeds < 1 or self.n_variations < 1 or self.max_rounds < 1:
            raise ValueError("n_seeds, n_variations, max_rounds must be >= 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class ScoredCandidate:
    pair: QAPair
    report: EvaluationReport


@dataclass(frozen=True)
class LineageOutcome:
    lineage_id: str
    accepted: ScoredCandidate
    status: str
    rounds_used: int
    history: Tuple[float, ...]
    calls_made: int


@dataclass(frozen=True)
class RunResult:
    doc_id: str
    outcomes: Tuple[LineageOutcome, ...]
    manifest: object  # store.RunManifest; typed loosely to avoid an import cycle


def select_best(pool: List[ScoredCandidate]) -> ScoredCandidate:
    """Candidate with maximum overall; ties broken by lowest index."""
    if not pool:
        raise EmptyPool("cannot select from an empty pool")
    best = pool[0]
    for candidate in pool[1:]:
        if candidate.report.overall > best.report.overall:
            best = candidate
    return best


def threshold_met(overall: float, cfg: EngineConfig) -> bool:
    return overall >= cfg.threshold


class _Counter:
    """Per-lineage completion counter."""

    def __init__(self):
        self.count = 0
        self._lock = threading.Lock()

    def bump(self):
        with self._lock:
            self.count += 1


class EvolutionEngine:
    def __init__(self, gateway: Gateway, rubric: Rubric, cfg: EngineConfig,
                 model_name: str = "default",
                 creative_temperature: float = DEFAULT_CREATIVE_TEMPERATURE,
                 judge_temperature: float = DEFAULT_JUDGE_TEMPERATURE,
                 max_output_tokens: int = 4096):
        self.gateway = gateway
        self.rubric = rubric
        self.cfg = cfg
        self.model_name = model_name
        self.creative_temperature = creative_temperature
        self.judge_temperature = judge_temperature
        self.max_output_tokens = max_output_tokens
        self._cache: Dict[Tuple[str, str, str], EvaluationReport] = {}
        self._cache_lock = threading.Lock()

    # --- cache management (exposed for checkpoint/resume) ---

    def cache_snapshot(self) -> Dict[Tuple[str, str, str], EvaluationReport]:
        with self._cache_lock:
            return dict(self._cache)

    def cache_restore(self, entries: Dict[Tuple[str, str, str], EvaluationReport]) -> None:
        with self._cache_lock:
            self._cache.update(entries)

    # --- completion plumbing ---

    def _request(self, prompt, temperature: float) -> CompletionRequest:
        return CompletionRequest(
            prompt=prompt,
            model_name=self.model_name,
            temperature=temperature,
            max_output_tokens=self.max_output_tokens,
        )

    def _complete_parsed(self, prompt, temperature: float, parse: Callable[[str], object],
                         counter: Optional[_Counter] = None):
        """Complete and parse, re-requesting on parse failure up to judge_parse_retries."""
        last_error: Optional[Exception] = None
        for _ in range(self.cfg.judge_parse_retries + 1):
            result = self.gateway.complete_with_retry(self._request(prompt, temperature))
            if counter is not None:
                counter.bump()
            try:
                return parse(result.text)
            except EvoQAError as exc:
                last_error = exc
        raise last_error

    # --- operations ---

    def generate_seeds(self, doc: SourceDocument,
                       counter: Optional[_Counter] = None) -> List[QAPair]:
        prompt = render_seed_prompt(doc, self.cfg.n_seeds)
        try:
            pairs = self._complete_parsed(
                prompt, self.creative_temperature,
                lambda text: parse_qa_batch(text, self.cfg.n_seeds),
                counter)
        except EvoQAError as exc:
            raise SeedGenerationFailed(f"seed generation failed: {exc}") from exc
        return [
            pair.with_lineage(f"seed-{i:02d}", generation=0, parent_id=None)
            for i, pair in enumerate(pairs)
        ]

    def evaluate_candidate(self, doc: SourceDocument, pair: QAPair,
                           counter: Optional[_Counter] = None) -> ScoredCandidate:
        key = (doc.doc_id, pair.pair_id, self.rubric.rubric_version)
        with self._cache_lock:
            cached = self._cache.get(key)
        if cached is not None:
            return ScoredCandidate(pair, cached)
        prompt = render_judge_prompt(doc, pair, self.rubric)
        try:
            report = self._complete_parsed(
                prompt, self.judge_temperature,
                lambda text: parse_judge_report(text, self.rubric, pair.pair_id),
                counter)
        except EvoQAError as exc:
            raise EvaluationFailed(f"evaluation of {pair.pair_id[:12]} failed: {exc}") from exc
        with self._cache_lock:
            self._cache[key] = report
        return ScoredCandidate(pair, report)

    def _generate_variations(self, parent: QAPair, generation: int,
                             counter: _Counter) -> List[QAPair]:
        prompt = render_variation_prompt(parent, self.cfg.n_variations)
        pairs = self._complete_parsed(
            prompt, self.creative_temperature,
            lambda text: parse_qa_batch(text, self.cfg.n_variations),
            counter)
        return [
            p.with_lineage(parent.lineage_id, generation=generation,
                           parent_id=parent.pair_id)
            for p in pairs
        ]

    def evolve_lineage(self, seed: QAPair, doc: SourceDocument) -> LineageOutcome:
        if seed.generation != 0:
            raise ValueError("lineage must start from a generation-0 seed")
        counter = _Counter()
        parent = seed
        history: List[float] = []
        best_so_far: Optional[ScoredCandidate] = None
        try:
            for round_no in range(1, self.cfg.max_rounds + 1):
                children = self._generate_variations(parent, round_no, counter)
                pool = list(children)
                if self.cfg.include_parent_in_pool:
                    pool.append(parent)
                scored = [self.evaluate_candidate(doc, p, counter) for p in pool]
                best = select_best(scored)
                history.append(best.report.overall)
                if best_so_far is None or best.report.overall > best_so_far.report.overall:
                    best_so_far = best
                if threshold_met(best.report.overall, self.cfg):
                    return LineageOutcome(
                        lineage_id=seed.lineage_id,
                        accepted=best,
                        status=STATUS_THRESHOLD_MET,
                        rounds_used=round_no,
                        history=tuple(history),
                        calls_made=counter.count,
                    )
                parent = best.pair
        except EvoQAError as exc:
            raise LineageFailed(f"lineage {seed.lineage_id} failed: {exc}") from exc
        return LineageOutcome(
            lineage_id=seed.lineage_id,
            accepted=best_so_far,
            status=STATUS_ROUND_CAP,
            rounds_used=self.cfg.max_rounds,
            history=tuple(history),
            calls_made=counter.count,
        )

    def run(self, doc: SourceDocument, sink=None,
            seeds: Optional[List[QAPair]] = None,
            precompleted: Optional[List[LineageOutcome]] = None,
            seeding_calls: int = 0) -> RunResult:
        """Evolve every lineage; collect outcomes in seed order.

        sink, when given, receives checkpoint(completed, pending, cache)
        after each finished lineage and finalize(...) at the end (also on
        abort, with aborted=True). seeds/precompleted support resume.
        """
        if seeds is None:
            seed_counter = _Counter()
            seeds = self.generate_seeds(doc, seed_counter)
            seeding_calls = seed_counter.count
        done: Dict[str, LineageOutcome] = {
            o.lineage_id: o for o in (precompleted or [])}
        pending = [s for s in seeds if s.lineage_id not in done]
        state_lock = threading.Lock()

        def checkpoint():
            if sink is None:
                return
            with state_lock:
                completed = [done[s.lineage_id] for s in seeds if s.lineage_id in done]
                still_pending = [s for s in seeds if s.lineage_id not in done]
            sink.checkpoint(completed, still_pending, self.cache_snapshot(),
                            seeding_calls=seeding_calls)

        abort = threading.Event()

        def work(seed: QAPair) -> None:
            if abort.is_set():
                return
            try:
                outcome = self.evolve_lineage(seed, doc)
            except Exception:
                abort.set()
                raise
            with state_lock:
                done[seed.lineage_id] = outcome
            checkpoint()

        failure: Optional[Exception] = None
        if pending:
            workers = min(self.cfg.max_concurrent_lineages, len(pending))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(work, s) for s in pending]
                for fut in futures:
                    try:
                        fut.result()
                    except Exception as exc:  # noqa: BLE001 - first failure aborts the run
                        if failure is None:
                            failure = exc

        completed = [done[s.lineage_id] for s in seeds if s.lineage_id in done]
        if failure is not None:
            if sink is not None:
                sink.finalize(doc, completed, seeding_calls=seeding_calls, aborted=True)
            raise RunFailed(f"run aborted: {failure}") from failure
        manifest = None
        if sink is not None:
            manifest = sink.finalize(doc, completed, seeding_calls=seeding_calls,
                                     aborted=False)
        return RunResult(doc_id=doc.doc_id, outcomes=tuple(completed), manifest=manifest)
