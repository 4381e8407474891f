"""Command-line entry point: generate / judge / compare / resume.

Exit codes: 0 success, 1 error, 3 run completed but some lineages never
cleared the threshold (round cap reached). Diagnostics go to stderr,
data to files; stdout carries a terse progress summary.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import store
from .engine import (
    STATUS_ROUND_CAP,
    EngineConfig,
    EvolutionEngine,
)
from .errors import EvoQAError
from .gateway import (
    CassetteRecorder,
    DEFAULT_CREATIVE_TEMPERATURE,
    DEFAULT_JUDGE_TEMPERATURE,
    Gateway,
    LiveBackend,
    RateLimiter,
    ReplayBackend,
    RetryPolicy,
    ScriptedBackend,
)
from .ingest import load_document
from .protocol import QAPair
from .rubric import default_rubric, load_rubric

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BELOW_THRESHOLD = 3


def _load_config(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _engine_config(cfg_file: dict, args) -> EngineConfig:
    section = dict(cfg_file.get("engine", {}))
    overrides = {
        "n_seeds": getattr(args, "seeds", None),
        "n_variations": getattr(args, "variations", None),
        "threshold": getattr(args, "threshold", None),
        "max_rounds": getattr(args, "max_rounds", None),
        "max_concurrent_lineages": getattr(args, "concurrency", None),
    }
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    allowed = {f for f in EngineConfig.__dataclass_fields__}
    unknown = set(section) - allowed
    if unknown:
        raise EvoQAError(f"unknown engine config keys: {sorted(unknown)}")
    return EngineConfig(**section)


def _build_gateway(cfg_file: dict, args, record_ok: bool = True) -> Gateway:
    section = dict(cfg_file.get("gateway", {}))
    backend_kind = getattr(args, "backend", None) or section.get("backend", "live")
    cassette = getattr(args, "cassette", None) or section.get("cassette")
    recorder = None
    if backend_kind == "live":
        backend = LiveBackend(endpoint=section.get("endpoint"))
        if cassette and record_ok:
            recorder = CassetteRecorder(cassette)
    elif backend_kind == "replay":
        if not cassette:
            raise EvoQAError("backend=replay requires --cassette")
        backend = ReplayBackend(cassette)
    elif backend_kind == "scripted":
        script_path = section.get("script")
        if not script_path:
            raise EvoQAError("backend=scripted requires gateway.script in the config")
        script = json.loads(Path(script_path).read_text(encoding="utf-8"))
        backend = ScriptedBackend(
            by_fingerprint=script.get("by_fingerprint"),
            by_role=script.get("by_role"),
        )
        if cassette and record_ok:
            recorder = CassetteRecorder(cassette)
    else:
        raise EvoQAError(f"unknown backend: {backend_kind}")
    limiter = None
    if section.get("rate_limit_per_sec"):
        limiter = RateLimiter(int(section["rate_limit_per_sec"]))
    return Gateway(
        backend,
        retry_policy=RetryPolicy(**section.get("retry", {})),
        rate_limiter=limiter,
        max_total_tokens=section.get("max_total_tokens"),
        recorder=recorder,
    )


def _build_engine(gateway: Gateway, rubric, engine_cfg: EngineConfig,
                  cfg_file: dict) -> EvolutionEngine:
    section = cfg_file.get("gateway", {})
    return EvolutionEngine(
        gateway, rubric, engine_cfg,
        model_name=section.get("model_name", "default"),
        creative_temperature=section.get("temperature_creative",
                                         DEFAULT_CREATIVE_TEMPERATURE),
        judge_temperature=section.get("temperature_judge", DEFAULT_JUDGE_TEMPERATURE),
    )


def _rubric_for(args, cfg_file: dict):
    path = getattr(args, "rubric", None) or cfg_file.get("rubric")
    return load_rubric(path) if path else default_rubric()


def _exit_code_for(outcomes) -> int:
    if any(o.status == STATUS_ROUND_CAP for o in outcomes):
        return EXIT_BELOW_THRESHOLD
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        cfg_file = _load_config(args.config)
        engine_cfg = _engine_config(cfg_file, args)
        rubric = _rubric_for(args, cfg_file)
        doc = load_document(args.doc)
        gateway = _build_gateway(cfg_file, args)
        engine = _build_engine(gateway, rubric, engine_cfg, cfg_file)
        run_id = f"run-{doc.doc_id[:8]}"
        sink = store.FileRunSink(
            args.out_dir, run_id, doc.doc_id, str(args.doc), engine_cfg,
            rubric.rubric_version, gateway.backend.kind, engine.model_name,
            gateway=gateway)
        result = engine.run(doc, sink=sink)
    except KeyboardInterrupt:
        print("interrupted; checkpoint saved", file=sys.stderr)
        return EXIT_ERROR
    except EvoQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{len(result.outcomes)} lineages done -> {sink.dataset_path}")
    return _exit_code_for(result.outcomes)


def cmd_judge(args) -> int:
    try:
        cfg_file = _load_config(args.config)
        engine_cfg = _engine_config(cfg_file, args)
        rubric = _rubric_for(args, cfg_file)
        doc = load_document(args.doc)
        gateway = _build_gateway(cfg_file, args)
        engine = _build_engine(gateway, rubric, engine_cfg, cfg_file)
    except EvoQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    reports = []
    failures = []
    for lineno, line in enumerate(
            Path(args.dataset).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            question = record["question"]
            answer = record["answer"]
            if not str(question).strip() or not str(answer).strip():
                raise EvoQAError("empty question or answer")
            pair = QAPair.create(str(question), str(answer))
            scored = engine.evaluate_candidate(doc, pair)
            reports.append(scored.report)
        except (EvoQAError, KeyError, ValueError) as exc:
            failures.append((lineno, exc))
            print(f"line {lineno}: {exc}", file=sys.stderr)
    store.write_scores_file(args.out, reports)
    print(f"{len(reports)} reports -> {args.out}")
    return EXIT_ERROR if failures else EXIT_OK


def cmd_compare(args) -> int:
    try:
        rubric = load_rubric(args.rubric) if args.rubric else default_rubric()
        reports_a = store.read_scores_file(args.scores_a)
        reports_b = store.read_scores_file(args.scores_b)
        report = store.compare_report(reports_a, reports_b, rubric)
    except (EvoQAError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    out.write_text(json.dumps(store.comparison_to_dict(report), indent=2,
                              sort_keys=True) + "\n", encoding="utf-8")
    table = store.comparison_table(report)
    out.with_suffix(".txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_resume(args) -> int:
    try:
        cfg_file = _load_config(args.config)
        engine_cfg = _engine_config(cfg_file, args)
        rubric = _rubric_for(args, cfg_file)
        gateway = _build_gateway(cfg_file, args)
        engine = _build_engine(gateway, rubric, engine_cfg, cfg_file)
        expected = store.config_digest(engine_cfg, rubric.rubric_version,
                                       gateway.backend.kind, engine.model_name)
        state = store.load_checkpoint(args.resume_from, expected)
        doc = load_document(state.doc_path)
        if doc.doc_id != state.doc_id:
            raise EvoQAError(
                f"document at {state.doc_path} changed since the checkpoint")
        engine.cache_restore(state.cache_entries)
        out_dir = Path(args.resume_from).parent
        sink = store.FileRunSink(
            out_dir, state.run_id, doc.doc_id, state.doc_path, engine_cfg,
            rubric.rubric_version, gateway.backend.kind, engine.model_name,
            gateway=gateway, journal_sequence=state.journal_sequence)
        seed_list = _checkpoint_seed_order(state)
        result = engine.run(doc, sink=sink, seeds=seed_list,
                            precompleted=list(state.completed),
                            seeding_calls=state.seeding_calls)
    except KeyboardInterrupt:
        print("interrupted; checkpoint saved", file=sys.stderr)
        return EXIT_ERROR
    except EvoQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{len(result.outcomes)} lineages done -> {sink.dataset_path}")
    return _exit_code_for(result.outcomes)


def _checkpoint_seed_order(state):
    """Full seed list in lineage-id order from the completed/pending partition."""
    seeds = {s.lineage_id: s for s in state.pending_seeds}
    for outcome in state.completed:
        seed = outcome.accepted.pair
        # the accepted pair may be a descendant; synthesize a stand-in seed entry
        seeds.setdefault(outcome.lineage_id, seed)
    return [seeds[lid] for lid in sorted(seeds, key=lambda lid: (len(lid), lid))]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoqa",
        description="Evolutionary QA dataset generation with LLM-judge scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--rubric", help="rubric JSON file (default: built-in 15 metrics)")
        p.add_argument("--backend", choices=["live", "scripted", "replay"])
        p.add_argument("--cassette", help="cassette path (replay source / record target)")
        p.add_argument("--max-rounds", type=int, dest="max_rounds")
        p.add_argument("--threshold", type=float)
        p.add_argument("--seeds", type=int)
        p.add_argument("--variations", type=int)
        p.add_argument("--concurrency", type=int)

    p = sub.add_parser("generate", help="run the full evolutionary pipeline")
    p.add_argument("--doc", required=True, help="source document (UTF-8 text/markdown)")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("judge", help="score an existing QA dataset with the rubric")
    p.add_argument("--doc", required=True)
    p.add_argument("--dataset", required=True, help="ndjson with question/answer fields")
    p.add_argument("--out", required=True, help="scores ndjson output")
    common(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("compare", help="per-metric comparison of two scores files")
    p.add_argument("--scores-a", required=True, dest="scores_a")
    p.add_argument("--scores-b", required=True, dest="scores_b")
    p.add_argument("--rubric")
    p.add_argument("--out", required=True, help="comparison JSON (table written alongside)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("resume", help="continue an interrupted run from its checkpoint")
    p.add_argument("--resume-from", required=True, dest="resume_from",
                   help="checkpoint.json of the interrupted run")
    common(p)
    p.set_defaults(func=cmd_resume)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
