import json

import pytest
import yaml

from src.cli import build_parser, main
from src.lib.error.handler import ConfigValidationError


def _write_config(tmp_path, **fields):
    document = {
        "name": "cli",
        "methods": ["zf-csit", "proposed"],
        "m": 8,
        "k_users": [2],
        "l_pilots": [4],
        "b_bits": [10],
        "test_size": 20,
        "seed": 1,
    }
    document.update(fields)
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(document))
    return str(path)


def test_baseline_command_writes_results(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["baseline", "--config", _write_config(tmp_path), "--out", str(out), "--log-level", "WARNING"])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["command"] == "baseline"
    assert result["rows"] == 1
    assert result["csv"] == str(out / "cli.csv")
    assert (out / "cli.manifest.json").exists()


def test_invalid_config_exits_with_field_list(tmp_path, capsys):
    path = _write_config(tmp_path, b_bits=[0], methods=["unknown"])
    code = main(["sweep", "--config", path, "--out", str(tmp_path)])
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigValidationError"
    assert {"b_bits", "methods"} <= {entry["field"] for entry in error["details"]["errors"]}


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    assert main(["baseline", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_eval_without_checkpoints_exits_with_checkpoint_code(tmp_path, capsys):
    path = _write_config(tmp_path, methods=["proposed"])
    code = main(["eval", "--config", path, "--out", str(tmp_path / "out")])
    assert code == 3
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "CheckpointError"


def test_parser_requires_a_known_command():
    with pytest.raises(ConfigValidationError):
        build_parser().parse_args(["plot", "--config", "x.yaml"])
    args = build_parser().parse_args(["eval", "--config", "x.yaml", "--seed", "4", "--workers", "2"])
    assert (args.command, args.seed, args.workers) == ("eval", 4, 2)


def test_unknown_flag_reports_json_error(tmp_path, capsys):
    code = main(["baseline", "--config", _write_config(tmp_path), "--bogus"])
    assert code == 2
    captured = capsys.readouterr()
    assert captured.out == ""
    error = json.loads(captured.err.strip().splitlines()[-1])
    assert error["error"] == "ConfigValidationError"
    assert "--bogus" in error["message"]
    assert error["details"]["errors"][0]["field"] == "argv"


def test_missing_command_reports_json_error(capsys):
    assert main([]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigValidationError"
