from __future__ import annotations

import json
import shutil

import pytest

from lingobf.cli import main
from lingobf.mockserver import MockModelServer


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_validate_clean_corpus(capsys, corpus_dir):
    code, out, err = run_cli(capsys, "validate", str(corpus_dir))
    assert code == 0
    assert json.loads(out)["problems_ok"] == 3


def test_validate_broken_corpus_exits_1(capsys, tmp_path, corpus_dir):
    shutil.copytree(corpus_dir, tmp_path / "corpus")
    problem = tmp_path / "corpus" / "birds-x" / "problem.txt"
    problem.write_text(
        problem.read_text(encoding="utf-8").replace("@@@pek@@@", "@@@pexk@@@"),
        encoding="utf-8",
    )
    code, out, err = run_cli(capsys, "validate", str(tmp_path / "corpus"))
    assert code == 1
    diag = json.loads(err.splitlines()[0])
    assert diag["problem"] == "birds-x"


def test_unknown_flag_exits_2(capsys, corpus_dir):
    with pytest.raises(SystemExit) as exc:
        main(["validate", str(corpus_dir), "--frobnicate"])
    assert exc.value.code == 2


def test_seed_is_mandatory_for_randomized_commands(capsys, corpus_dir, tmp_path):
    for argv in (
        ["sample", str(corpus_dir)],
        ["generate", str(corpus_dir), "--out", str(tmp_path / "d")],
        ["bootstrap", "--scores", "x.json", "--sets", "5"],
    ):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_sample_prints_maps(capsys, corpus_dir):
    code, out, err = run_cli(
        capsys, "sample", str(corpus_dir), "--per-problem", "2", "--seed", "3"
    )
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert {l["problem"] for l in lines} == {"birds-x", "rivers-z", "voicing-y"}
    assert all(l["pairs"] for l in lines)


def test_generate_is_deterministic(capsys, corpus_dir, tmp_path):
    for name in ("a", "b"):
        code, out, _ = run_cli(
            capsys,
            "generate",
            str(corpus_dir),
            "--out",
            str(tmp_path / name),
            "--per-problem",
            "6",
            "--seed",
            "7",
        )
        assert code == 0
        assert json.loads(out)["pairs"] == 48
    assert (tmp_path / "a" / "records.jsonl").read_bytes() == (
        tmp_path / "b" / "records.jsonl"
    ).read_bytes()
    manifest_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    manifest_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest_a["digests"] == manifest_b["digests"]


def test_full_pipeline_through_cli(capsys, corpus_dir, tmp_path):
    ds = tmp_path / "dataset"
    run_cli(capsys, "generate", str(corpus_dir), "--out", str(ds), "--seed", "7")
    code, out, _ = run_cli(
        capsys, "prompt", str(ds), "--out", str(tmp_path / "prompts.jsonl")
    )
    assert code == 0 and json.loads(out)["prompts"] == 31

    def reply(system, user):
        return json.dumps({"1": "nope", "2": "nope"})

    with MockModelServer(reply) as server:
        endpoint_cfg = tmp_path / "endpoint.json"
        endpoint_cfg.write_text(
            json.dumps({"name": "mock", "url": server.url, "retry_base_s": 0.0}),
            encoding="utf-8",
        )
        code, out, _ = run_cli(
            capsys,
            "run",
            "--prompts",
            str(tmp_path / "prompts.jsonl"),
            "--endpoint",
            str(endpoint_cfg),
            "--out",
            str(tmp_path / "run"),
            "--parallelism",
            "2",
        )
    assert code == 0
    assert json.loads(out)["ok"] == 31

    code, out, _ = run_cli(
        capsys,
        "score",
        "--run",
        str(tmp_path / "run"),
        "--dataset",
        str(ds),
        "--out",
        str(tmp_path / "scores.json"),
    )
    assert code == 0
    assert json.loads(out)["missing"] == 0

    code, out, _ = run_cli(
        capsys,
        "bootstrap",
        "--scores",
        str(tmp_path / "scores.json"),
        "--sets",
        "50",
        "--seed",
        "1",
        "--out",
        str(tmp_path / "hist.csv"),
    )
    assert code == 0
    assert (tmp_path / "hist.csv").read_text().startswith("bin_start")

    code, out, _ = run_cli(
        capsys,
        "report",
        "--scores",
        str(tmp_path / "scores.json"),
        "--out",
        str(tmp_path / "report"),
        "--run",
        str(tmp_path / "run"),
    )
    assert code == 0
    summary = json.loads((tmp_path / "report" / "summary.json").read_text())
    assert summary["m_og"] == 0.0  # the mock answers everything wrong
    assert (tmp_path / "report" / "per_problem.csv").exists()
    assert (tmp_path / "report" / "regression.csv").exists()
    assert "## Response errors" in (tmp_path / "report" / "summary.md").read_text()


def test_prompt_no_context_and_question_filter(capsys, corpus_dir, tmp_path):
    ds = tmp_path / "dataset"
    run_cli(capsys, "generate", str(corpus_dir), "--out", str(ds), "--seed", "7")
    code, out, _ = run_cli(
        capsys,
        "prompt",
        str(ds),
        "--out",
        str(tmp_path / "p.jsonl"),
        "--question",
        "0",
        "--no-context",
    )
    assert code == 0
    lines = (tmp_path / "p.jsonl").read_text().splitlines()
    assert all(json.loads(line)["no_context"] for line in lines)
    assert {json.loads(line)["question_index"] for line in lines} == {0}


def test_bad_endpoint_config_exits_1(capsys, tmp_path, corpus_dir):
    ds = tmp_path / "dataset"
    run_cli(capsys, "generate", str(corpus_dir), "--out", str(ds), "--seed", "7")
    run_cli(capsys, "prompt", str(ds), "--out", str(tmp_path / "p.jsonl"))
    cfg = tmp_path / "endpoint.json"
    cfg.write_text(json.dumps({"name": "x", "url": "http://x", "tempreture": 1}))
    code, out, err = run_cli(
        capsys,
        "run",
        "--prompts",
        str(tmp_path / "p.jsonl"),
        "--endpoint",
        str(cfg),
        "--out",
        str(tmp_path / "run"),
    )
    assert code == 1
    assert "error" in json.loads(err.splitlines()[-1])


def test_data_error_exits_1_with_json_diag(capsys, tmp_path):
    code, out, err = run_cli(
        capsys, "score", "--run", str(tmp_path / "nope"), "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "s.json")
    )
    assert code == 1
    diag = json.loads(err.splitlines()[-1])
    assert "error" in diag


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
