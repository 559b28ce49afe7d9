import json

import pytest

from hubdispatch import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_usage_error_is_config_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == cli.EXIT_CONFIG


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "generate", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "g"))
    assert code == cli.EXIT_CONFIG
    assert "config error" in err


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("demand:\n  totl: 5\n")
    code, _, err = run(capsys, "generate", "--config", str(cfg), "--out", str(tmp_path / "g"))
    assert code == cli.EXIT_CONFIG
    assert "totl" in err


def test_generate(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--out", str(tmp_path / "g"))
    assert code == cli.EXIT_OK
    manifest = json.loads((tmp_path / "g" / "manifest.json").read_text())
    assert manifest["disrupted_demand"] == 1767
    assert (tmp_path / "g" / "groups.csv").exists()


def test_oracle_search_and_sequence(capsys):
    code, out, _ = run(capsys, "oracle", "--scenario", "one-train")
    assert code == cli.EXIT_OK
    assert json.loads(out)["sequence"] == [0, 0, 0, 0, 1]
    code, out, _ = run(capsys, "oracle", "--scenario", "two-routes", "--sequence", "1,0,3")
    assert code == cli.EXIT_OK


def test_missing_model_is_config_error(capsys, tmp_path):
    code, _, _ = run(capsys, "evaluate", "--model", str(tmp_path / "none.bin"), "--episodes", "1")
    assert code == cli.EXIT_CONFIG


def test_runtime_error(capsys, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    code, _, err = run(capsys, "evaluate", "--model", str(bad), "--episodes", "1")
    assert code == cli.EXIT_RUNTIME
    assert "runtime error" in err


def test_failed_check_exit_code(capsys, tmp_path):
    # a handful of episodes cannot satisfy the convergence checks
    code, out, _ = run(capsys, "train", "--episodes", "3", "--out", str(tmp_path / "run"), "--check")
    assert code == cli.EXIT_CHECK
    assert "FAIL" in out


def test_train_evaluate_report(capsys, tmp_path):
    run_dir = tmp_path / "run"
    assert run(capsys, "train", "--episodes", "2", "--out", str(run_dir))[0] == cli.EXIT_OK
    code, out, _ = run(capsys, "evaluate", "--model", str(run_dir / "model.bin"), "--episodes", "2",
                       "--out", str(tmp_path / "ev"))
    assert code == cli.EXIT_OK
    assert json.loads((tmp_path / "ev" / "stats.json").read_text())["n"] == 2
    code, out, _ = run(capsys, "report", "--run", str(run_dir), "--out", str(tmp_path / "rep"))
    assert code == cli.EXIT_OK
    assert (tmp_path / "rep" / "timetable.csv").exists()


def test_transfer_check_needs_train_run(capsys, tmp_path):
    code, _, _ = run(capsys, "transfer", "--policy", "null", "--episodes", "1", "--check")
    assert code == cli.EXIT_CONFIG


def test_report_missing_run(capsys, tmp_path):
    assert run(capsys, "report", "--run", str(tmp_path / "x"), "--out", str(tmp_path / "r"))[0] == cli.EXIT_CONFIG


def test_shipped_config_matches_defaults():
    from hubdispatch.scenario import RunConfig, config_to_dict, data_dir, load_config

    assert config_to_dict(load_config(data_dir("default.yaml"))) == config_to_dict(RunConfig())
