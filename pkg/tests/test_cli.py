import json

import pytest

from evoqa import store
from evoqa.cli import main
from evoqa.engine import EngineConfig, EvolutionEngine
from evoqa.gateway import CassetteRecorder, Gateway
from evoqa.ingest import load_document
from evoqa.protocol import format_judge_payload
from evoqa.rubric import default_rubric

from conftest import DOC_TEXT, make_backend

RUBRIC = default_rubric()

ENGINE_FLAGS = ["--seeds", "3", "--variations", "2", "--max-rounds", "3",
                "--concurrency", "1"]
CFG = EngineConfig(n_seeds=3, n_variations=2, max_rounds=3,
                   max_concurrent_lineages=1)


@pytest.fixture
def doc_file(tmp_path):
    path = tmp_path / "doc.txt"
    path.write_text(DOC_TEXT, encoding="utf-8")
    return path


def build_cassette(tmp_path, doc_file, score_fn, name="cassette.ndjson"):
    """Run the pipeline in-process with a scripted backend, recording every call."""
    cassette = tmp_path / name
    gateway = Gateway(make_backend(score_fn), recorder=CassetteRecorder(cassette),
                      sleeper=lambda s: None)
    engine = EvolutionEngine(gateway, RUBRIC, CFG)
    doc = load_document(doc_file)
    result = engine.run(doc)
    return cassette, engine, doc, result


def test_generate_replay_happy_path(tmp_path, doc_file, capsys):
    cassette, _, _, _ = build_cassette(tmp_path, doc_file, lambda q, a: 9.0)
    out_dir = tmp_path / "out"
    code = main(["generate", "--doc", str(doc_file), "--out-dir", str(out_dir),
                 "--backend", "replay", "--cassette", str(cassette), *ENGINE_FLAGS])
    assert code == 0
    lines = (out_dir / "dataset.ndjson").read_text().splitlines()
    assert len(lines) == 3
    assert json.loads((out_dir / "manifest.json").read_text())["doc_id"]


def test_generate_replay_deterministic(tmp_path, doc_file):
    cassette, _, _, _ = build_cassette(tmp_path, doc_file, lambda q, a: 9.0)
    datasets = []
    for name in ("out1", "out2"):
        out_dir = tmp_path / name
        assert main(["generate", "--doc", str(doc_file), "--out-dir", str(out_dir),
                     "--backend", "replay", "--cassette", str(cassette),
                     *ENGINE_FLAGS]) == 0
        datasets.append((out_dir / "dataset.ndjson").read_bytes())
    assert datasets[0] == datasets[1]


def test_generate_round_cap_exit_code(tmp_path, doc_file):
    cassette, _, _, _ = build_cassette(tmp_path, doc_file, lambda q, a: 5.0)
    out_dir = tmp_path / "out"
    code = main(["generate", "--doc", str(doc_file), "--out-dir", str(out_dir),
                 "--backend", "replay", "--cassette", str(cassette), *ENGINE_FLAGS])
    assert code == 3
    records = [json.loads(l) for l in (out_dir / "dataset.ndjson").read_text().splitlines()]
    assert all(r["status"] == "round_cap_reached" for r in records)


def test_generate_live_without_key_makes_no_network_calls(tmp_path, doc_file,
                                                          monkeypatch):
    monkeypatch.delenv("EVOQA_API_KEY", raising=False)
    monkeypatch.delenv("EVOQA_ENDPOINT", raising=False)
    import requests
    monkeypatch.setattr(requests, "post",
                        lambda *a, **k: pytest.fail("network call attempted"))
    code = main(["generate", "--doc", str(doc_file),
                 "--out-dir", str(tmp_path / "out"), "--backend", "live",
                 *ENGINE_FLAGS])
    assert code == 1


def test_judge_command(tmp_path, doc_file):
    dataset = tmp_path / "pairs.ndjson"
    with open(dataset, "w") as fh:
        for i in range(5):
            fh.write(json.dumps({"question": f"Q{i}?", "answer": f"A{i}."}) + "\n")
    payload = format_judge_payload({mid: 7.0 for mid in RUBRIC.metric_ids()}, "ok")
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"by_role": {"judge": payload}}))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"gateway": {"backend": "scripted",
                                              "script": str(script)}}))
    out = tmp_path / "scores.ndjson"
    code = main(["judge", "--doc", str(doc_file), "--dataset", str(dataset),
                 "--config", str(config), "--out", str(out)])
    assert code == 0
    reports = store.read_scores_file(out)
    assert len(reports) == 5
    assert all(r.overall == 7.0 for r in reports)


def test_judge_command_bad_record(tmp_path, doc_file, capsys):
    dataset = tmp_path / "pairs.ndjson"
    dataset.write_text(json.dumps({"question": "Q?"}) + "\n")
    payload = format_judge_payload({mid: 7.0 for mid in RUBRIC.metric_ids()})
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"by_role": {"judge": payload}}))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"gateway": {"backend": "scripted",
                                              "script": str(script)}}))
    code = main(["judge", "--doc", str(doc_file), "--dataset", str(dataset),
                 "--config", str(config), "--out", str(tmp_path / "scores.ndjson")])
    assert code == 1
    assert "line 1" in capsys.readouterr().err


def write_scores(path, rows):
    from evoqa.protocol import parse_judge_report
    reports = [parse_judge_report(format_judge_payload(scores), RUBRIC, f"c{i}")
               for i, scores in enumerate(rows)]
    store.write_scores_file(path, reports)


def full(value):
    return {mid: value for mid in RUBRIC.metric_ids()}


def test_compare_command_and_antisymmetry(tmp_path, capsys):
    a = tmp_path / "a.ndjson"
    b = tmp_path / "b.ndjson"
    write_scores(a, [full(9.0), full(8.0)])
    write_scores(b, [full(7.0)])
    out = tmp_path / "cmp.json"
    assert main(["compare", "--scores-a", str(a), "--scores-b", str(b),
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["overall_mean_of_reports"] == {"a": 8.5, "b": 7.0}
    assert data["n_a"] == 2 and data["n_b"] == 1
    assert (tmp_path / "cmp.txt").exists()

    out2 = tmp_path / "cmp2.json"
    assert main(["compare", "--scores-a", str(b), "--scores-b", str(a),
                 "--out", str(out2)]) == 0
    swapped = json.loads(out2.read_text())
    assert swapped["overall_mean_of_reports"] == {"a": 7.0, "b": 8.5}
    for mid, means in data["per_metric"].items():
        assert swapped["per_metric"][mid] == {"mean_a": means["mean_b"],
                                              "mean_b": means["mean_a"]}


def test_compare_command_empty_side(tmp_path, capsys):
    a = tmp_path / "a.ndjson"
    b = tmp_path / "b.ndjson"
    a.write_text("")
    write_scores(b, [full(7.0)])
    assert main(["compare", "--scores-a", str(a), "--scores-b", str(b),
                 "--out", str(tmp_path / "cmp.json")]) == 1


# --- resume ---

def make_interrupted_checkpoint(tmp_path, doc_file, cassette, engine, doc, result,
                                n_completed=1):
    from evoqa.gateway import ReplayBackend
    replay_engine = EvolutionEngine(
        Gateway(ReplayBackend(cassette), sleeper=lambda s: None), RUBRIC, CFG)
    seeds = replay_engine.generate_seeds(doc)
    digest = store.config_digest(CFG, RUBRIC.rubric_version, "replay", "default")
    resume_dir = tmp_path / "resume"
    resume_dir.mkdir()
    state = store.Checkpoint(
        run_id=f"run-{doc.doc_id[:8]}",
        doc_id=doc.doc_id,
        doc_path=str(doc_file),
        config_digest=digest,
        completed=tuple(result.outcomes[:n_completed]),
        pending_seeds=tuple(seeds[n_completed:]),
        cache_entries={},
        seeding_calls=1,
        journal_sequence=n_completed,
    )
    store.save_checkpoint(state, resume_dir / "checkpoint.json")
    return resume_dir


def test_resume_after_interrupt_matches_full_run(tmp_path, doc_file):
    cassette, engine, doc, result = build_cassette(tmp_path, doc_file,
                                                   lambda q, a: 9.0)
    out_full = tmp_path / "full"
    assert main(["generate", "--doc", str(doc_file), "--out-dir", str(out_full),
                 "--backend", "replay", "--cassette", str(cassette),
                 *ENGINE_FLAGS]) == 0
    resume_dir = make_interrupted_checkpoint(tmp_path, doc_file, cassette,
                                             engine, doc, result)
    code = main(["resume", "--resume-from", str(resume_dir / "checkpoint.json"),
                 "--backend", "replay", "--cassette", str(cassette), *ENGINE_FLAGS])
    assert code == 0
    assert ((resume_dir / "dataset.ndjson").read_bytes()
            == (out_full / "dataset.ndjson").read_bytes())


def test_resume_complete_checkpoint_makes_no_calls(tmp_path, doc_file):
    cassette, engine, doc, result = build_cassette(tmp_path, doc_file,
                                                   lambda q, a: 9.0)
    resume_dir = make_interrupted_checkpoint(tmp_path, doc_file, cassette,
                                             engine, doc, result, n_completed=3)
    empty_cassette = tmp_path / "empty.ndjson"
    empty_cassette.write_text("")
    # any completion attempt would hit NoRecordedResponse and fail the run
    code = main(["resume", "--resume-from", str(resume_dir / "checkpoint.json"),
                 "--backend", "replay", "--cassette", str(empty_cassette),
                 *ENGINE_FLAGS])
    assert code == 0
    assert len((resume_dir / "dataset.ndjson").read_text().splitlines()) == 3


def test_resume_config_mismatch(tmp_path, doc_file, capsys):
    cassette, engine, doc, result = build_cassette(tmp_path, doc_file,
                                                   lambda q, a: 9.0)
    resume_dir = make_interrupted_checkpoint(tmp_path, doc_file, cassette,
                                             engine, doc, result)
    code = main(["resume", "--resume-from", str(resume_dir / "checkpoint.json"),
                 "--backend", "replay", "--cassette", str(cassette),
                 "--seeds", "3", "--variations", "2", "--max-rounds", "3",
                 "--threshold", "7.0"])
    assert code == 1
