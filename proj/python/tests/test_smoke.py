import json
import math

import pytest

import sharekd


def test_softmax_rows_sum_to_one():
    rows = sharekd.softmax([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    for row in rows:
        assert math.isclose(sum(row), 1.0, abs_tol=1e-15)
    assert all(math.isclose(p, 1 / 3, abs_tol=1e-15) for p in rows[1])


def test_unit_temperature_is_plain_softmax():
    z = [[0.3, -1.2, 2.5]]
    assert sharekd.temperature_softmax(z, 1.0) == sharekd.softmax(z)


def test_kd_loss_identities():
    z = [[0.5, -0.25, 1.0], [2.0, 0.0, -1.0]]
    labels = [2, 0]
    plain = sharekd.kd_loss(z, [[0.0, 0.0, 0.0]] * 2, labels, alpha=0.0)
    probs = sharekd.softmax(z)
    ce = -sum(math.log(probs[i][y]) for i, y in enumerate(labels)) / len(labels)
    assert math.isclose(plain["total"], ce, abs_tol=1e-12)
    same = sharekd.kd_loss(z, z, labels, alpha=1.0, temperature=1.0)
    assert abs(same["total"]) <= 1e-12


def test_ptp_labels_follow_strict_threshold():
    assert sharekd.assign_ptp_label(True, 0.95, 0.9) == "confidently_correct"
    assert sharekd.assign_ptp_label(True, 0.9, 0.9) == "unconfidently_correct"
    assert sharekd.assign_ptp_label(False, 0.7, 0.9, "CorrectOnly2") == "wrong"


def test_sharing_keeps_parameter_count():
    counts = {m: sharekd.count_parameters(3, m, 768, 12, 3072) for m in ("Plain", "SPS1", "SPS2")}
    assert set(counts.values()) == {21263616}
    assert [s for s, _ in sharekd.sharing_plan(1, "SPS2")] == [0, 0]
    assert [r for _, r in sharekd.sharing_plan(1, "SPS2")] == ["identity", "swap_qk"]


def test_config_errors_name_the_field():
    with pytest.raises(sharekd.ConfigError, match="kd.alpha"):
        sharekd.normalize_config("kd.alpha = 2\n")


def test_tiny_pipeline_and_report(tmp_path):
    cfg = "\n".join([
        f"out = {tmp_path / 'run'}",
        "task.train_size = 60",
        "task.dev_size = 20",
        "task.test_size = 20",
        "teacher.epochs = 1",
        "ptp.max_epochs = 1",
        "kd.epochs = 1",
    ])
    sharekd.run_pipeline(cfg)
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["task"] == "pair-equivalence"
    assert 0.0 <= summary["test_acc"] <= 1.0
    table = json.loads(sharekd.report([tmp_path / "run"], as_json=True))
    assert table["rows"][0]["task"] == "pair-equivalence"
