import math

import pytest

from app.attack import NOT_FOUND, RECOVERED, AttackOutcome
from app.exceptions import ParameterError, ReductionError
from app.experiment import (PUBLISHED_TABLES, ExperimentConfig, TrialRecord, calibrate, derive_trial_seed,
                            run_experiment, run_trial, scaling_from_calibration, summarize)
from app.poly import IntegerPoly
from app.report import format_summary
from app.utils import read_jsonl


def small_config(**overrides):
    base = dict(params="toy31", k1=10, k2=20, algorithm=2, trials=2, seed=3, reducer="internal", workers=1)
    base.update(overrides)
    return ExperimentConfig(**base)


def test_percentage():
    assert math.isclose(ExperimentConfig(params="ntruhps2048509", k1=425).percentage, 425 / 509 * 100)
    cfg = ExperimentConfig(params="ntruhps2048509", k1=300, k2=135, algorithm=2)
    assert math.isclose(cfg.percentage, 435 / 1018 * 100)


def test_config_validation():
    with pytest.raises(ParameterError):
        ExperimentConfig(params="toy31", k1=10, trials=0)
    with pytest.raises(ParameterError):
        ExperimentConfig(params="toy31", k1=10, k2=3)
    with pytest.raises(ParameterError):
        ExperimentConfig(params="toy31", k1=10, algorithm=3)
    with pytest.raises(ParameterError):
        ExperimentConfig(params="toy31", k1=40)


def test_scale_defaults_and_overrides():
    assert ExperimentConfig(params="toy31", k1=10).scale().N2 == 128 ** 2
    cfg = ExperimentConfig(params="ntruhps2048509", k1=425)
    assert (cfg.scale().N1, cfg.scale().N2) == (9, 2048 ** 8)
    assert ExperimentConfig(params="toy31", k1=10, N1=3, x="3").scale().N2 == 128 ** 3


def test_published_rows():
    assert len(PUBLISHED_TABLES["message"]) == 3 and len(PUBLISHED_TABLES["combined"]) == 21
    cfg = ExperimentConfig.from_published("combined", 3)
    assert (cfg.params, cfg.k1, cfg.k2, cfg.N1, cfg.x, cfg.algorithm) == ("ntruhps2048509", 300, 135, 9, "8", 2)
    assert ExperimentConfig.from_published("message", 1, trials=3).trials == 3
    assert [row.highlighted for row in PUBLISHED_TABLES["combined"]].count(True) == 3
    with pytest.raises(ParameterError):
        ExperimentConfig.from_published("combined", 0)
    with pytest.raises(ParameterError):
        ExperimentConfig.from_published("message", 4)
    with pytest.raises(ParameterError):
        ExperimentConfig.from_published("nonce", 1)


def test_trial_seeds():
    assert derive_trial_seed(7, 0) == derive_trial_seed(7, 0)
    assert derive_trial_seed(7, 0) != derive_trial_seed(7, 1)
    assert derive_trial_seed(7, 0) != derive_trial_seed(8, 0)
    assert 0 <= derive_trial_seed(0, 5) < 2 ** 64


def test_trial_succeeds():
    record = run_trial(small_config(), 0)
    assert record.status == RECOVERED and record.success
    assert record.dim == 31 - 20 + 10 + 1
    assert record.hits >= 1 and record.candidates >= 1
    assert set(record.timings) == {"build", "reduce", "extract"}


def test_runs_are_reproducible():
    first = run_experiment(small_config(), progress=False)
    second = run_experiment(small_config(), progress=False)
    assert [r.fingerprint() for r in first.records] == [r.fingerprint() for r in second.records]
    assert first.successes == first.trials == 2


def test_experiment_golden_summary(golden):
    summary = run_experiment(small_config(), progress=False)
    golden("experiment_toy31_seed3.json", {
        "summary": {k: v for k, v in summary.to_dict().items() if k not in ("mean_times", "std_times")},
        "fingerprints": [r.fingerprint() for r in summary.records],
    })


def test_parallel_run_matches_serial():
    serial = run_experiment(small_config(), progress=False)
    parallel = run_experiment(small_config(workers=2), progress=False)
    assert [r.fingerprint() for r in parallel.records] == [r.fingerprint() for r in serial.records]


def test_jsonl_output(tmp_path):
    out = tmp_path / "run.jsonl"
    summary = run_experiment(small_config(), out_path=str(out), label="toy", progress=False)
    records = read_jsonl(str(out))
    assert [r["type"] for r in records] == ["header", "trial", "trial", "summary"]
    assert records[0]["config"]["k1"] == 10
    assert "SeedSequence" in records[0]["seed_derivation"]
    assert [r["index"] for r in records[1:3]] == [0, 1]
    assert records[-1]["successes"] == summary.successes
    assert records[-1]["label"] == "toy"


def test_errors_become_records(monkeypatch):
    def broken(cfg, instance, reducer=None):
        raise ReductionError("row 3 is linearly dependent on the previous rows")

    monkeypatch.setattr("app.experiment.recover_message_alt", broken)
    summary = run_experiment(small_config(), progress=False)
    assert summary.errors == 2 and summary.successes == 0
    assert all(r.status == "error" and "dependent" in r.error for r in summary.records)
    assert summary.mean_times["total"] == 0.0


def test_summary_statistics():
    cfg = small_config()
    records = [
        TrialRecord(0, 1, RECOVERED, True, timings={"build": 1.0, "reduce": 2.0, "extract": 0.0}),
        TrialRecord(1, 2, NOT_FOUND, False, timings={"build": 3.0, "reduce": 4.0, "extract": 0.0}),
        TrialRecord(2, 3, "error", False, error="boom"),
    ]
    summary = summarize(cfg, records)
    assert (summary.trials, summary.successes, summary.errors) == (3, 1, 1)
    assert summary.mean_times["reduce"] == 3.0
    assert summary.std_times["build"] == 1.0
    assert summary.mean_times["total"] == 5.0
    assert math.isclose(summary.rate, 1 / 3)


def test_summary_reports_the_gap_to_the_proven_scaling():
    summary = summarize(small_config(N1=1, x="2"), [TrialRecord(0, 1, RECOVERED, True)])
    assert math.isclose(summary.theorem_gap_bits, 3.5, abs_tol=0.01)
    assert summary.to_dict()["theorem_gap_bits"] == 3.5
    assert "Gap to proven N2: >= 3.5 bits" in format_summary(summary)


def fake_recovery(succeeding_N1):
    def recover(cfg, instance, reducer=None):
        if cfg.scale.N1 != succeeding_N1:
            return AttackOutcome(status=NOT_FOUND, algorithm=1)
        return AttackOutcome(status=RECOVERED, algorithm=1, r=instance.ct.r,
                             m=IntegerPoly(instance.ct.m.coeffs), accepted_row=0)
    return recover


def test_calibration_picks_the_successful_point(monkeypatch, tmp_path):
    monkeypatch.setattr("app.experiment.recover_message", fake_recovery(2))
    out = tmp_path / "calibration.csv"
    result = calibrate("toy31", 10, N1_grid=[1, 2, 3], x_grid=[2, 3], trials=2, out_csv=str(out))
    assert result.best == (2, 2)
    assert len(result.table) == 6
    assert list(result.table["rate"][:2]) == [1.0, 1.0]
    assert scaling_from_calibration(str(out), "toy31", 10) == (2, 2)
    assert scaling_from_calibration(str(out), "toy31", 11) is None


def test_calibration_without_success(monkeypatch):
    monkeypatch.setattr("app.experiment.recover_message", fake_recovery(99))
    result = calibrate("toy31", 10, N1_grid=[1], x_grid=[2, 3], trials=1)
    assert result.best is None
    assert list(result.table["successes"]) == [0, 0]


def test_calibration_skips_inadmissible_points(monkeypatch):
    monkeypatch.setattr("app.experiment.recover_message", fake_recovery(1))
    # q^1 = 128 is not above N1 = 200
    result = calibrate("toy31", 10, N1_grid=[200, 1], x_grid=[1], trials=1)
    assert list(result.table["N1"]) == [1]
    assert result.best == (1, 1)


def test_scaling_from_missing_calibration():
    with pytest.raises(FileNotFoundError):
        scaling_from_calibration("/nonexistent/calibration.csv", "toy31", 10)
