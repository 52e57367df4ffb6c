import json

import pytest

from conftest import DATA
from convqa_gen.cli import EXIT_MISSING_FILE, EXIT_OK, EXIT_SCHEMA, EXIT_USAGE, main


@pytest.fixture
def prepared(tmp_path):
    out = tmp_path / "prep"
    assert main(["prepare-data", "--input", str(DATA / "coqa_sample.json"), "--in-domains", "wikipedia",
                 "--out-dir", str(out)]) == EXIT_OK
    return out / "outputs"


def test_prepare_data_layout(prepared):
    root = prepared.parent
    assert {p.name for p in root.iterdir()} >= {"config.json", "outputs", "report.json", "log.txt"}
    report = json.loads((root / "report.json").read_text())
    assert report["in_domain_passages"] == 1 and report["out_domain_passages"] == 2
    assert report["turns_out"] < report["turns_in"]


def test_stats(prepared, tmp_path, capsys):
    code = main(["stats", "--dataset", str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / "s")])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((tmp_path / "s" / "outputs" / "stats.json").read_text())
    assert printed["passages"] == 3


def test_generate_is_byte_identical(prepared, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"generation": {"k": 5, "max_turns": 4}, "seed": 3}))
    outs = []
    for name in ("a", "b"):
        code = main(["generate", "--config", str(cfg), "--backend", "mock", "--passages",
                     str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / name)])
        assert code == EXIT_OK
        outs.append((tmp_path / name / "outputs" / "synthetic.jsonl").read_bytes())
    assert outs[0] == outs[1] and outs[0]
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["seed"] == 3 and report["config"]["k"] == 5


def test_build_negatives_and_analyze(prepared, tmp_path):
    assert main(["build-negatives", "--dataset", str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / "n")]) == 0
    lines = (tmp_path / "n" / "outputs" / "revision_examples.jsonl").read_text().splitlines()
    assert lines and all("polarity" in json.loads(l) for l in lines)
    assert main(["generate", "--passages", str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / "g")]) == 0
    syn = tmp_path / "g" / "outputs" / "synthetic.jsonl"
    assert main(["analyze", "--synthetic", str(syn), "--out-dir", str(tmp_path / "an")]) == 0
    analysis = json.loads((tmp_path / "an" / "report.json").read_text())
    assert analysis["revision_types"]["Preservation"] == 1.0
    assert main(["export-ratings", "--synthetic", str(syn), "--per-domain", "2", "--out-dir", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r" / "report.json").read_text())["rows"] == 6


def test_evaluate_predictions(prepared, tmp_path):
    pred = tmp_path / "pred.jsonl"
    gold_ds = [json.loads(l) for l in (prepared / "all.jsonl").read_text().splitlines()]
    rows = [{"passage_id": rec["passage_id"], "turn": i, "answer": t["a"]}
            for rec in gold_ds for i, t in enumerate(rec["turns"], 1)]
    pred.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out = tmp_path / "e"
    assert main(["evaluate", "--pred", str(pred), "--gold", str(prepared / "all.jsonl"), "--out-dir", str(out)]) == 0
    report = json.loads((out / "outputs" / "evaluation.json").read_text())
    assert report["overall"]["em"] == 1.0
    assert len(report["per_domain"]) == 3


def test_error_codes(prepared, tmp_path, capsys):
    out = tmp_path / "err"
    assert main(["stats", "--dataset", str(tmp_path / "nope.jsonl"), "--out-dir", str(out)]) == EXIT_MISSING_FILE
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["kind"] == "missing_file"
    assert json.loads((out / "error.json").read_text()) == record
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"passage_id": 1}\n')
    assert main(["stats", "--dataset", str(bad), "--out-dir", str(out)]) == EXIT_SCHEMA
    assert main(["stats", "--bogus-flag"]) == EXIT_USAGE
    assert main(["evaluate", "--gold", str(prepared / "all.jsonl"), "--out-dir", str(out)]) == EXIT_USAGE
    bad_pred = tmp_path / "bad_pred.jsonl"
    bad_pred.write_text("{not json\n")
    assert main(["evaluate", "--gold", str(prepared / "all.jsonl"), "--pred", str(bad_pred),
                 "--out-dir", str(out)]) == EXIT_SCHEMA


def test_inputs_are_not_mutated(prepared, tmp_path):
    before = (prepared / "all.jsonl").read_bytes()
    main(["stats", "--dataset", str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / "x")])
    main(["generate", "--passages", str(prepared / "all.jsonl"), "--out-dir", str(tmp_path / "y")])
    assert (prepared / "all.jsonl").read_bytes() == before
