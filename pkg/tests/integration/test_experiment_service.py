import json

import numpy as np
import pytest

from src.lib.error.handler import CheckpointError, ConfigValidationError
from src.models.experiment import CSV_HEADER, expand_grid
from src.services.dsc import evaluate
from src.services.experiment_service import ExperimentService, git_describe
from src.services.experiment_service import test_set_for as fixed_test_set
from src.tools.baselines import CsitPipeline

TINY_NETWORK = {"encoder": {"hidden": [16, 8]}, "decoder": {"hidden": [16, 16]}}
TINY_SCHEDULE = {"batch_size": 32, "batches_per_epoch": 2, "patience": 1, "max_epochs": 2, "validation_size": 32}


@pytest.fixture
def service():
    return ExperimentService()


def _baseline_document(tmp_path, **overrides):
    document = {
        "name": "csit",
        "methods": ["mrt-csit", "zf-csit"],
        "m": 8,
        "k_users": [2],
        "l_pilots": [4],
        "b_bits": [5, 10, 15, 20, 25, 30],
        "snr_db": [10.0],
        "test_size": 50,
        "seed": 3,
        "output_dir": str(tmp_path),
    }
    document.update(overrides)
    return document


def _learned_document(tmp_path, **overrides):
    document = {
        "name": "learned",
        "methods": ["proposed"],
        "m": 8,
        "k_users": [2],
        "l_pilots": [4],
        "b_bits": [6],
        "test_size": 40,
        "seed": 5,
        "network": TINY_NETWORK,
        "schedule": TINY_SCHEDULE,
        "output_dir": str(tmp_path),
    }
    document.update(overrides)
    return document


def test_csit_sweep_matches_direct_evaluation(service, tmp_path):
    config = service.validate(_baseline_document(tmp_path))
    summary = service.run(config)
    assert len(summary.rows) == 12
    assert [row.method for row in summary.rows] == ["mrt-csit"] * 6 + ["zf-csit"] * 6
    assert [row.b_bits for row in summary.rows[:6]] == [5, 10, 15, 20, 25, 30]

    context = service.build_context(config)
    for point, row in zip(expand_grid(config, context.m), summary.rows):
        expected = evaluate(CsitPipeline(point.method[:-5], point.system.total_power), fixed_test_set(point, context))
        assert row.sum_rate == expected.sum_rate
        assert row.per_user_rates == expected.per_user_rates

    # B does not reach a CSIT precoder
    assert len({row.sum_rate for row in summary.rows if row.method == "zf-csit"}) == 1


def test_rerun_gives_identical_csv(service, tmp_path):
    first = service.run(service.validate(_baseline_document(tmp_path / "a")))
    second = service.run(service.validate(_baseline_document(tmp_path / "b")))
    with open(first.csv_path, "rb") as f, open(second.csv_path, "rb") as g:
        assert f.read() == g.read()
    assert first.config_hash != service.run(service.validate(_baseline_document(tmp_path / "c", seed=4))).config_hash


def test_csv_reparses_and_manifest_records_run(service, tmp_path):
    summary = service.run(service.validate(_baseline_document(tmp_path, b_bits=[10])))
    rows = ExperimentService.read_csv(summary.csv_path)
    assert [row.model_dump(exclude={"wall_time"}) for row in rows] == [
        row.model_dump(exclude={"wall_time"}) for row in summary.rows
    ]
    with open(summary.manifest_path) as f:
        manifest = json.load(f)
    assert manifest["config_hash"] == summary.config_hash
    assert manifest["git_describe"] == git_describe()
    assert manifest["checkpoints"] == []
    assert all(row["wall_time"] >= 0.0 for row in manifest["rows"])


def test_empty_rows_give_header_only_csv(tmp_path):
    path = ExperimentService.emit_csv([], str(tmp_path / "empty.csv"))
    with open(path) as f:
        assert f.read() == ",".join(CSV_HEADER) + "\n"
    assert ExperimentService.read_csv(path) == []


def test_validation_lists_every_field(service, tmp_path):
    with pytest.raises(ConfigValidationError) as info:
        service.validate(_baseline_document(tmp_path, methods=["nope"], k_users=[0], test_size=1))
    fields = {error["field"] for error in info.value.errors}
    assert {"methods", "k_users", "test_size"} <= fields


def test_overrides_take_precedence(service, tmp_path):
    config = service.validate(_baseline_document(tmp_path), {"seed": 9, "workers": None})
    assert config.seed == 9 and config.workers == 1


def test_preset_supplies_antennas(service, tmp_path):
    document = _baseline_document(tmp_path)
    del document["m"]
    context = service.build_context(service.validate(document))
    assert context.m == 16
    with pytest.raises(ConfigValidationError):
        service.validate(_baseline_document(tmp_path, m=None, k_users=[16]))


def test_baselines_only_drops_trained_methods(service, tmp_path):
    config = service.validate(_baseline_document(tmp_path, methods=["proposed", "zf-csit"]))
    assert service.baselines_only(config).methods == ["zf-csit"]
    with pytest.raises(ConfigValidationError):
        service.baselines_only(config.model_copy(update={"methods": ["proposed"]}))


def test_parallel_workers_give_same_rows(service, tmp_path):
    serial = service.run(service.validate(_baseline_document(tmp_path / "serial")))
    parallel = service.run(service.validate(_baseline_document(tmp_path / "parallel", workers=2)))
    assert [row.sum_rate for row in serial.rows] == [row.sum_rate for row in parallel.rows]


def test_fit_quantizers_exports_codecs(service, tmp_path):
    config = service.validate(_baseline_document(tmp_path, b_bits=[12, 18], codec_samples=1000))
    paths = service.fit_quantizers(config)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["codec-Lp2-B12.json", "codec-Lp2-B18.json"]
    with open(tmp_path / "quantizers" / "allocation-Lp2-B18.json") as f:
        assert sum(json.load(f)["bits_per_param"]) == 18


def test_eval_only_without_checkpoint_fails(service, tmp_path):
    config = service.validate(_learned_document(tmp_path, eval_only=True))
    with pytest.raises(CheckpointError):
        service.run(config)


def test_trained_checkpoints_are_reused(service, tmp_path):
    config = service.validate(_learned_document(tmp_path))
    checkpoints = service.train(config)
    assert len(checkpoints) == 1

    first = service.run(config.model_copy(update={"eval_only": True}))
    assert first.checkpoints == checkpoints
    second = service.run(config.model_copy(update={"eval_only": True, "name": "again"}))
    assert first.rows[0].sum_rate == second.rows[0].sum_rate
    assert np.isfinite(first.rows[0].sum_rate) and first.rows[0].sum_rate > 0.0
