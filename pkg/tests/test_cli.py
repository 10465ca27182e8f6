from __future__ import annotations

import json
from pathlib import Path

import pytest

from trajrecon.cli import EXIT_CONFIG, EXIT_MISSING_PRIOR, EXIT_OK, main, run_subcommand
from trajrecon.config import ConfigInvalidError, load_config, parse_override
from trajrecon.evalreport import read_csv

SMALL = ["--simulate.n_flights=6", "--llm.endpoint=mock:oracle"]


def tree(root: Path, exclude=("manifest.json",)) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in exclude}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["all", "-q", "--out", str(out), "--seed", "42", *SMALL]) == EXIT_OK
    return out


def test_all_produces_every_artifact(run_dir):
    for rel in ("windows/train.jsonl", "windows/val.jsonl", "windows/test.jsonl", "windows/split.json",
                "prompts/test.jsonl", "results/linear.jsonl", "results/llm.jsonl",
                "reports/eval_windows.csv", "reports/eval_points.csv", "reports/summary.csv", "manifest.json"):
        assert (run_dir / rel).is_file(), rel
    assert len(list((run_dir / "trajectories").iterdir())) == 6


def test_oracle_llm_has_zero_error(run_dir):
    summary = {r["method"]: r for r in read_csv(run_dir / "reports" / "summary.csv")}
    assert set(summary) == {"linear", "kalman", "kalman_rts", "llm"}
    llm = summary["llm"]
    assert llm["n_windows"] > 0 and llm["n_failed"] == 0
    assert llm["h_mean_m"] == 0.0 and llm["v_mean_ft"] == 0.0
    assert summary["linear"]["h_mean_m"] > 0.0


def test_manifest(run_dir):
    man = json.loads((run_dir / "manifest.json").read_text())
    assert man["seed"] == 42
    stages = {"simulate", "degrade", "build-dataset", "evaluate", "plot"}
    stages |= {f"reconstruct:{m}" for m in ("linear", "kalman", "kalman_rts", "llm")}
    assert set(man["stages"]) == stages
    for st in man["stages"].values():
        assert st["config_hash"] and st["output_digest"]
    assert "auth_token" not in json.dumps(man)


def test_rerun_is_a_no_op(run_dir, caplog):
    before = tree(run_dir)
    stamp = json.loads((run_dir / "manifest.json").read_text())["stages"]
    caplog.set_level("INFO", logger="trajrecon")
    assert run_subcommand("all", overrides=[f"--output_dir={run_dir}", "--seed=42", *SMALL]) == EXIT_OK
    assert tree(run_dir) == before
    assert json.loads((run_dir / "manifest.json").read_text())["stages"] == stamp
    assert caplog.text.count("up to date") == 9


def test_identical_runs_are_byte_identical(run_dir, tmp_path):
    assert main(["all", "-q", "--out", str(tmp_path), "--seed", "42", "--jobs", "2", *SMALL]) == EXIT_OK
    assert tree(tmp_path) == tree(run_dir)


def test_changing_evaluate_section_reruns_only_evaluate(run_dir, tmp_path):
    import shutil

    copy = tmp_path / "c"
    shutil.copytree(run_dir, copy)
    windows = (copy / "windows" / "test.jsonl").read_bytes()
    over = [f"--output_dir={copy}", "--seed=42", *SMALL, "--evaluate.radius_m=10"]
    assert run_subcommand("evaluate", overrides=over) == EXIT_OK
    assert (copy / "windows" / "test.jsonl").read_bytes() == windows
    assert (copy / "reports" / "summary.csv").read_bytes() != (run_dir / "reports" / "summary.csv").read_bytes()


def test_missing_prior_stage(tmp_path):
    assert main(["reconstruct", "-q", "--method", "kalman", "--out", str(tmp_path)]) == EXIT_MISSING_PRIOR
    assert main(["evaluate", "-q", "--out", str(tmp_path)]) == EXIT_MISSING_PRIOR


def test_bad_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulate:\n  n_flightz: 3\n")
    assert main(["simulate", "-q", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "-q", "--out", str(tmp_path), "--dataset.ratios=[0.5,0.5,0.5]"]) == EXIT_CONFIG
    assert main(["simulate", "-q", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    assert run_subcommand("fly") == EXIT_CONFIG


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 2


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 7\nsimulate:\n  n_flights: 3\nllm:\n  client:\n    retries: 5\n")
    cfg = load_config(path, ["--simulate.n_flights=4", "--evaluate.radius_m=75.5"])
    assert (cfg.seed, cfg.simulate.n_flights, cfg.llm.client.retries) == (7, 4, 5)
    assert cfg.evaluate.radius_m == 75.5
    assert parse_override("--a.b=[1, 2]") == (["a", "b"], [1, 2])
    with pytest.raises(ConfigInvalidError):
        parse_override("a.b")


def test_seeds_and_hashes_are_derived_deterministically():
    a, b = load_config(None, ["--seed=1"]), load_config(None, ["--seed=1"])
    assert a.derive_seed("degrade", 3) == b.derive_seed("degrade", 3)
    assert a.derive_seed("degrade", 3) != a.derive_seed("degrade", 4)
    assert a.derive_seed("degrade", 3) != load_config(None, ["--seed=2"]).derive_seed("degrade", 3)
    assert a.section_hash("evaluate") != load_config(None, ["--evaluate.radius_m=1"]).section_hash("evaluate")
    assert a.section_hash("simulate") == load_config(None, ["--evaluate.radius_m=1"]).section_hash("simulate")


def test_token_never_written(tmp_path, monkeypatch, capsys):
    secret = "tok-abc-123-secret"
    monkeypatch.setenv("TRAJRECON_LLM_TOKEN", secret)
    over = ["--simulate.n_flights=3", "--llm.endpoint=mock:oracle", "--plot.method=llm", "-m", "llm"]
    assert main(["all", "-v", "--out", str(tmp_path), *over]) == EXIT_OK
    captured = capsys.readouterr()
    assert secret not in captured.err + captured.out
    for blob in tree(tmp_path, exclude=()).values():
        assert secret.encode() not in blob
