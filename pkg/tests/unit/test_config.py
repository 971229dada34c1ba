import json

import pytest
from pydantic import ValidationError

from src.config.loader import ConfigLoader, load_document
from src.lib.error.handler import ConfigValidationError
from src.models.experiment import CSV_HEADER, ExperimentConfig, ResultRow, expand_grid
from src.models.system import ChannelDistribution, SystemConfig, TrainingSchedule


def test_default_loader_has_presets_and_logging():
    loader = ConfigLoader()
    assert loader.get("logging", "level") == "INFO"
    assert loader.preset("desk")["m"] == 16
    assert loader.preset("paper")["m"] == 64
    assert loader.get("missing", default=3) == 3
    with pytest.raises(ConfigValidationError):
        loader.preset("laptop")


def test_loader_tolerates_missing_file(tmp_path):
    loader = ConfigLoader(str(tmp_path / "absent.yaml"))
    assert loader.config == {}
    assert loader.get("logging", "level", "WARNING") == "WARNING"


def test_loader_env_override(tmp_path, monkeypatch):
    path = tmp_path / "custom.yaml"
    path.write_text("logging:\n  level: DEBUG\n")
    monkeypatch.setenv("DSC_CONFIG_PATH", str(path))
    assert ConfigLoader().get("logging", "level") == "DEBUG"


def test_load_document_json_and_yaml(tmp_path):
    json_path = tmp_path / "run.json"
    json_path.write_text(json.dumps({"name": "a", "b_bits": [10]}))
    yaml_path = tmp_path / "run.yaml"
    yaml_path.write_text("name: b\nb_bits: [20]\n")
    assert load_document(str(json_path))["b_bits"] == [10]
    assert load_document(str(yaml_path))["name"] == "b"


def test_load_document_errors(tmp_path):
    with pytest.raises(ConfigValidationError):
        load_document(str(tmp_path / "none.yaml"))
    bad = tmp_path / "list.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigValidationError):
        load_document(str(bad))
    broken = tmp_path / "broken.yaml"
    broken.write_text("name: [unclosed\n")
    with pytest.raises(ConfigValidationError):
        load_document(str(broken))


def test_system_config_invariants():
    system = SystemConfig(m=16, k_users=2, snr_db=10.0)
    assert system.total_power == pytest.approx(10.0)
    assert SystemConfig(m=16, power=3.0).total_power == 3.0
    with pytest.raises(ValidationError):
        SystemConfig(m=4, k_users=4)
    with pytest.raises(ValidationError):
        ChannelDistribution(aod_low_deg=10.0, aod_high_deg=-10.0)
    assert ChannelDistribution(lp_set=[3, 1, 3]).admissible_lp == [1, 3]


def test_schedule_validation():
    schedule = TrainingSchedule()
    assert schedule.next_alpha(schedule.alpha_cap) == schedule.alpha_cap
    assert schedule.decayed_lr(schedule.lr_floor) == schedule.lr_floor
    with pytest.raises(ValidationError):
        TrainingSchedule(lr_start=1e-6, lr_floor=1e-5)
    with pytest.raises(ValidationError):
        TrainingSchedule(learning_rate=0.1)


def test_experiment_config_lists_every_offending_field():
    with pytest.raises(ValidationError) as info:
        ExperimentConfig(methods=["magic"], k_users=[], b_bits=[0])
    fields = {error["loc"][0] for error in info.value.errors()}
    assert {"methods", "k_users", "b_bits"} <= fields
    wrapped = ConfigValidationError.from_pydantic(info.value)
    assert {"methods", "k_users", "b_bits"} <= {error["field"] for error in wrapped.errors}


def test_experiment_config_cross_checks():
    with pytest.raises(ValidationError):
        ExperimentConfig(m=4, k_users=[4])
    with pytest.raises(ValidationError):
        ExperimentConfig(methods=["proposed-two-step-B"], b_bits=[25])
    with pytest.raises(ValidationError):
        ExperimentConfig(schedule={"patience": 0})
    with pytest.raises(ValidationError):
        ExperimentConfig(unknown_key=1)


def test_parametric_feedback_needs_three_bits_per_assumed_path():
    with pytest.raises(ValidationError) as info:
        ExperimentConfig(methods=["zf-csit", "zf-csir-quantized"], b_bits=[5, 10])
    assert "zf-csir-quantized" in str(info.value)
    with pytest.raises(ValidationError):
        ExperimentConfig(methods=["mrt-omp-quantized"], b_bits=[9], assumed_lp=4)
    ExperimentConfig(methods=["zf-csir-quantized"], b_bits=[5], assumed_lp=1)
    ExperimentConfig(methods=["mrt-omp-quantized"], b_bits=[6])
    ExperimentConfig(methods=["zf-csit", "proposed"], b_bits=[5])


def test_grid_expansion_order_and_count():
    config = ExperimentConfig(methods=["zf-csit", "mrt-csit"], b_bits=[5, 10, 15, 20, 25, 30], snr_db=[0.0, 10.0])
    points = expand_grid(config, 16)
    assert len(points) == 2 * 6 * 2
    assert [p.index for p in points] == list(range(24))
    assert points[0].method == "zf-csit" and points[0].system.b_bits == 5 and points[0].system.snr_db == 0.0
    assert points[1].system.snr_db == 10.0
    assert sum(1 for p in points if p.method == "mrt-csit" and p.system.snr_db == 10.0) == 6


def test_test_path_counts():
    assert ExperimentConfig(lp=3).test_lp_values() == [3]
    assert ExperimentConfig(lp_set=[1, 4]).test_lp_values() == [4]
    assert ExperimentConfig(test_lp=[1, 2]).test_lp_values() == [1, 2]
    assert ExperimentConfig(lp_set=[1, 4]).distribution().admissible_lp == [1, 4]
    assert ExperimentConfig(lp_set=[1, 4]).distribution(2).admissible_lp == [2]


def test_result_row_csv_record_reparses():
    row = ResultRow(
        method="zf-csit",
        m=16,
        k_users=2,
        l_pilots=8,
        b_bits=30,
        lp=2,
        snr_db=10.0,
        seed=7,
        sum_rate=9.123456789012345,
        sum_rate_stderr=0.01,
        per_user_rates=[4.5, 4.623456789012345],
        test_size=100,
    )
    record = dict(zip(CSV_HEADER, row.to_csv_record()))
    assert ResultRow.from_csv_record(record) == row
    assert CSV_HEADER[:9] == ("method", "M", "K", "L", "B", "Lp", "snr_db", "seed", "sum_rate")
