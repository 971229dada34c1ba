"""
Desk-scale gates for the learned systems. Each one trains networks for hours on a CPU, so they
only run with ``--runslow``.
"""
import json

import pytest

from src.services.experiment_service import ExperimentService

pytestmark = pytest.mark.slow

DESK = {"preset": "desk", "m": 16, "k_users": [2], "l_pilots": [8], "snr_db": [10.0], "seed": 1}


def _run(tmp_path, **fields):
    service = ExperimentService()
    document = {**DESK, "output_dir": str(tmp_path), **fields}
    summary = service.run(service.validate(document))
    return {(row.method, row.b_bits, row.k_users): row for row in summary.rows}, summary


def test_training_improves_on_initial_rate(tmp_path):
    service = ExperimentService()
    config = service.validate({**DESK, "methods": ["proposed"], "b_bits": [10], "output_dir": str(tmp_path)})
    (stem,) = service.train(config)
    with open(f"{stem}.history.json") as f:
        history = json.load(f)
    initial = history[0]["validation"]
    best = max(entry["validation"] for entry in history[:51])
    assert best > 1.2 * initial


def test_learned_feedback_beats_omp_baselines(tmp_path):
    methods = ["proposed", "zf-omp-quantized", "mrt-omp-infinite", "zf-dnn-mse"]
    rows, _ = _run(tmp_path, name="ordering", methods=methods, b_bits=[10, 20, 30])
    proposed = rows[("proposed", 30, 2)].sum_rate
    assert proposed > rows[("zf-omp-quantized", 30, 2)].sum_rate
    assert proposed > rows[("mrt-omp-infinite", 30, 2)].sum_rate
    assert proposed >= rows[("zf-dnn-mse", 30, 2)].sum_rate

    by_bits = [rows[("proposed", b, 2)] for b in (10, 20, 30)]
    for lower, higher in zip(by_bits, by_bits[1:]):
        assert higher.sum_rate >= lower.sum_rate - higher.sum_rate_stderr


def test_two_step_bits_degrades_gracefully(tmp_path):
    rows, _ = _run(
        tmp_path,
        name="two_step_bits",
        methods=["proposed-two-step-B", "proposed"],
        b_bits=[10, 20, 30],
        network={"soft_outputs": 10},
    )
    q1, q2, q3 = (rows[("proposed-two-step-B", b, 2)].sum_rate for b in (10, 20, 30))
    assert q1 <= q2 <= q3
    assert q3 >= 0.85 * rows[("proposed", 30, 2)].sum_rate


def test_single_user_encoder_serves_two_users(tmp_path):
    rows, _ = _run(tmp_path, name="two_step_users", methods=["proposed-two-step-K", "proposed"], b_bits=[30])
    assert rows[("proposed-two-step-K", 30, 2)].sum_rate >= 0.9 * rows[("proposed", 30, 2)].sum_rate


def test_single_user_system_beats_omp_mrt(tmp_path):
    rows, _ = _run(tmp_path, name="single_user", methods=["proposed", "mrt-omp-quantized"], k_users=[1], b_bits=[30])
    assert rows[("proposed", 30, 1)].sum_rate > rows[("mrt-omp-quantized", 30, 1)].sum_rate
