# -*- encoding: utf-8 -*-
import copy
import sys
from pathlib import Path

import pandas as pd
import pytest

cur_dir = Path(__file__).resolve().parent
root_dir = cur_dir.parent

sys.path.append(str(root_dir))

from churnlab.causal import REPORT_KEYS
from churnlab.main import main
from churnlab.synth import DRIVER_FEATURES
from churnlab.utils import load_json, save_json

test_file_dir = cur_dir / "test_files"
STAGES = ("synth", "prepare", "train", "evaluate", "explain", "causal")


def write_config(tmp_dir: Path, **overrides) -> Path:
    data = load_json(test_file_dir / "pipeline_config.json")
    data["output_dir"] = str(tmp_dir / "out")
    data["causal"]["graph_path"] = str(test_file_dir / "churn_graph.txt")
    for section, values in overrides.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values

    config_path = tmp_dir / "config.json"
    save_json(config_path, data)
    return config_path


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    tmp_dir = tmp_path_factory.mktemp("pipeline")
    config_path = write_config(tmp_dir)
    codes = {stage: main([stage, "-c", str(config_path)]) for stage in STAGES}
    return tmp_dir / "out", codes


def test_every_stage_succeeds(pipeline_run):
    out, codes = pipeline_run
    assert codes == {stage: 0 for stage in STAGES}

    expected = [
        "corpus/monthly.csv",
        "corpus/static.csv",
        "corpus/ground_truth.json",
        "scm/scm.csv",
        "scm/scm_truth.json",
        "prepared/snapshot.csv",
        "prepared/train.csv",
        "prepared/test.csv",
        "prepared/scaler.json",
        "prepared/encoder.json",
        "prepared/ranking.json",
        "prepared/stage_log.json",
        "models/logistic.json",
        "models/ensemble_ann.json",
        "models/hard_vote.json",
        "reports/metrics.json",
        "reports/comparison.csv",
        "reports/roc_logistic.csv",
        "reports/train_log.json",
        "reports/causal_report.json",
        "explain/pdp.csv",
        "explain/importances.json",
        "explain/shortlist.json",
        "audit/synth_config.json",
    ]
    missing = [p for p in expected if not (out / p).exists()]
    assert not missing


def test_prepare_outputs(pipeline_run):
    out, _ = pipeline_run
    train = pd.read_csv(out / "prepared" / "train.csv")
    test = pd.read_csv(out / "prepared" / "test.csv")
    assert train.columns.tolist() == test.columns.tolist()
    assert train.shape[1] == 8 + 2

    counts = train["label"].value_counts()
    assert counts[0] == counts[1]

    stages = [entry["stage"] for entry in load_json(out / "prepared" / "stage_log.json")]
    assert stages[0] == "snapshot" and stages[-1] == "final_test"
    assert "smote_train" in stages and "rfe_train" in stages


def test_evaluate_reports(pipeline_run):
    out, _ = pipeline_run
    metrics = load_json(out / "reports" / "metrics.json")
    assert metrics["threshold"] == 0.5
    assert set(metrics["models"]) == {"logistic", "naive_bayes", "ensemble_ann", "hard_vote"}
    assert max(m["auc"] for m in metrics["models"].values()) > 0.6
    assert 0.5 < metrics["oracle_auc"] <= 1.0

    table = pd.read_csv(out / "reports" / "comparison.csv")
    assert table.columns.tolist() == ["model", "test_acc", "auc", "cohen_kappa", "mcc"]
    assert table["test_acc"].is_monotonic_decreasing


def test_ensemble_tracks_oracle_and_drivers_rank_high(pipeline_run):
    out, _ = pipeline_run
    metrics = load_json(out / "reports" / "metrics.json")
    assert abs(metrics["models"]["ensemble_ann"]["auc"] - metrics["oracle_auc"]) <= 0.05

    kept = pd.read_csv(out / "prepared" / "train.csv", nrows=1).columns
    drivers = {DRIVER_FEATURES[k] for k in ("sg_recency", "account_growth", "balance")} & set(kept)
    assert drivers

    importances = load_json(out / "explain" / "importances.json")
    top5 = [f["name"] for f in sorted(importances, key=lambda f: -f["mean_drop"])[:5]]
    assert drivers <= set(top5)
    shortlist = load_json(out / "explain" / "shortlist.json")
    assert drivers <= {c["name"] for c in shortlist["candidates"]}


def test_smote_rows_never_reach_test_split(pipeline_run):
    out, _ = pipeline_run
    train = pd.read_csv(out / "prepared" / "train.csv", dtype={"member_id": str})
    test = pd.read_csv(out / "prepared" / "test.csv", dtype={"member_id": str})
    assert train["member_id"].str.startswith("smote:").any()
    assert not test["member_id"].str.startswith("smote:").any()

    snapshot = pd.read_csv(out / "prepared" / "snapshot.csv", dtype={"member_id": str})
    assert set(test["member_id"]) <= set(snapshot["member_id"])


def test_explain_and_causal_reports(pipeline_run):
    out, _ = pipeline_run
    shortlist = load_json(out / "explain" / "shortlist.json")
    assert shortlist["model"] == "logistic"
    assert 1 <= len(shortlist["candidates"]) <= 5
    assert len(shortlist["queries"]) == len(shortlist["candidates"])

    report = load_json(out / "reports" / "causal_report.json")
    assert [row["causal_variable"] for row in report["rows"]] == [
        "high_sg_recency",
        "low_balance_change_ratio",
    ]
    assert all(tuple(row) == REPORT_KEYS for row in report["rows"])
    assert report["audit"][1]["adjustment_set"] == ["balance_last", "sg_recency"]
    assert all(len(a["refuter_trials"]) == 5 for a in report["audit"])


def test_causal_recovers_planted_driver_effects(pipeline_run):
    out, _ = pipeline_run
    audit = load_json(out / "reports" / "causal_report.json")["audit"]
    assert audit[0]["true_effect"] > 0.05
    for entry in audit:
        assert abs(entry["estimate_effect"] - entry["true_effect"]) <= 0.03


def test_synth_is_byte_identical(tmp_path):
    outputs = []
    for run in ("a", "b"):
        run_dir = tmp_path / run
        run_dir.mkdir()
        config_path = write_config(run_dir, synth={"n_members": 200, "scm_samples": 1000})
        assert main(["synth", "-c", str(config_path)]) == 0
        outputs.append(run_dir / "out")

    for name in ("corpus/monthly.csv", "corpus/static.csv", "corpus/hazards.csv", "scm/scm.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_full_chain_is_byte_identical(tmp_path):
    outputs = []
    for run in ("a", "b"):
        run_dir = tmp_path / run
        run_dir.mkdir()
        config_path = write_config(run_dir, synth={"n_members": 800, "scm_samples": 1000})
        assert [main([stage, "-c", str(config_path)]) for stage in STAGES] == [0] * len(STAGES)
        outputs.append(run_dir / "out")

    def artifacts(root):
        return sorted(
            p.relative_to(root)
            for p in root.rglob("*")
            if p.is_file() and p.relative_to(root).parts[0] not in ("logs", "audit")
        )

    names = artifacts(outputs[0])
    assert names == artifacts(outputs[1])
    assert Path("reports/causal_report.json") in names
    different = [str(n) for n in names if (outputs[0] / n).read_bytes() != (outputs[1] / n).read_bytes()]
    assert not different


def test_prepare_without_smote_or_rfe_keeps_shape(tmp_path):
    config_path = write_config(
        tmp_path, synth={"n_members": 600}, smote={"enabled": False}, rfe={"enabled": False}
    )
    assert main(["synth", "-c", str(config_path)]) == 0
    assert main(["prepare", "-c", str(config_path)]) == 0

    prepared = tmp_path / "out" / "prepared"
    log = {entry["stage"]: entry for entry in load_json(prepared / "stage_log.json")}
    assert "smote_train" not in log and "rfe_train" not in log

    train = pd.read_csv(prepared / "train.csv")
    test = pd.read_csv(prepared / "test.csv")
    assert len(train) == log["split_train"]["rows"]
    assert len(test) == log["split_test"]["rows"] == log["final_test"]["rows"]
    assert len(train) + len(test) == log["snapshot"]["rows"]
    assert train.shape[1] - 2 == test.shape[1] - 2 == log["one_hot"]["columns"]
    assert {int(k): v for k, v in train["label"].value_counts().items()} == {
        int(k): v for k, v in log["split_train"]["class_counts"].items() if v
    }


@pytest.mark.parametrize(
    "causal",
    [{"refuter_fraction": 1.5}, {"refuter_fraction": 0.0}, {"refuter_trials": 0}, {"clip": 0.5}],
)
def test_causal_rejects_bad_refuter_settings(tmp_path, causal):
    config_path = write_config(tmp_path, causal=causal)
    assert main(["causal", "-c", str(config_path)]) == 1
    assert not (tmp_path / "out").exists()


def test_synth_rejects_empty_corpus(tmp_path):
    config_path = write_config(tmp_path, synth={"n_members": 0})
    assert main(["synth", "-c", str(config_path)]) == 1
    assert not (tmp_path / "out").exists()


def test_causal_on_scm_sample(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(
        tmp_path,
        synth={"n_members": 200},
        causal={
            "graph_path": str(test_file_dir / "scm_graph.txt"),
            "data_path": str(out / "scm" / "scm.csv"),
            "outcome": "outcome",
            "queries": [{"treatment": "treatment", "rule": {"kind": "threshold", "value": 0.5}}],
        },
    )
    assert main(["synth", "-c", str(config_path)]) == 0
    assert main(["causal", "-c", str(config_path)]) == 0

    row = load_json(out / "reports" / "causal_report.json")["rows"][0]
    assert row["causal_variable"] == "high_treatment"
    assert abs(row["estimate_effect"] - 0.40) <= 0.02
    assert row["probability_of_churn"] == "increased by ~40%"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(unknown_section={}),
        lambda d: d.pop("seed"),
        lambda d: d["window"].update(length=3),
    ],
)
def test_bad_config_exits_nonzero(tmp_path, mutate):
    data = copy.deepcopy(load_json(test_file_dir / "pipeline_config.json"))
    data["output_dir"] = str(tmp_path / "out")
    mutate(data)
    config_path = tmp_path / "config.json"
    save_json(config_path, data)
    assert main(["synth", "-c", str(config_path)]) == 1


def test_missing_inputs_exit_nonzero(tmp_path):
    config_path = write_config(tmp_path)
    assert main(["train", "-c", str(config_path)]) == 1
    assert main(["synth", "-c", str(tmp_path / "absent.json")]) == 1
