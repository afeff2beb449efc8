# -*- encoding: utf-8 -*-
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

cur_dir = Path(__file__).resolve().parent
root_dir = cur_dir.parent

sys.path.append(str(root_dir))

from churnlab.dataset import WindowSpec, read_member_records
from churnlab.synth import (
    ChurnCorpusConfig,
    Confounder,
    OutcomeModel,
    ScmConfig,
    SynthError,
    corpus_config_from_truth,
    generate_churn_corpus,
    generate_scm,
    naive_difference,
    oracle_churn_probability,
    read_corpus_truth,
    save_scm,
    true_ate,
    true_driver_effect,
    write_corpus,
)
from churnlab.utils import load_json


def canonical_scm():
    return ScmConfig(
        confounders=[Confounder("Z", "bernoulli", p=0.5)],
        treatment_assignment={"intercept": -math.log(4), "Z": 2 * math.log(4)},
        outcome_model=OutcomeModel(
            {
                "intercept": -math.log(4),
                "Z": math.log(4),
                "treatment": math.log(6),
                "treatment:Z": math.log(1.5),
            }
        ),
        noise_seed=11,
    )


def test_true_ate_canonical():
    assert true_ate(canonical_scm()) == pytest.approx(0.40, abs=1e-12)


@pytest.mark.parametrize(
    "coefficients, link, expected",
    [
        ({"treatment": 1.0}, "linear", 1.0),
        ({"intercept": 0.3, "Z": 2.0}, "logistic", 0.0),
        ({"treatment": 0.5, "treatment:Z": 1.0}, "linear", 0.5 + 0.3),
    ],
)
def test_true_ate_closed_forms(coefficients, link, expected):
    config = ScmConfig(
        confounders=[Confounder("Z", "bernoulli", p=0.3)],
        treatment_assignment={"Z": 1.0},
        outcome_model=OutcomeModel(coefficients, link=link, noise_std=0.0),
    )
    assert true_ate(config) == pytest.approx(expected, abs=1e-12)


def test_true_ate_gaussian_linear():
    config = ScmConfig(
        confounders=[Confounder("W", "gaussian", mu=2.0, sigma=1.0)],
        treatment_assignment={"W": 0.5},
        outcome_model=OutcomeModel({"treatment": 0.2, "treatment:W": 0.1, "W": 3.0}, link="linear"),
    )
    assert true_ate(config) == pytest.approx(0.2 + 0.1 * 2.0)


def test_true_ate_monte_carlo_for_logistic_gaussian():
    config = ScmConfig(
        confounders=[Confounder("W", "gaussian", mu=0.0, sigma=1.0)],
        treatment_assignment={"W": 1.0},
        outcome_model=OutcomeModel({"treatment": 1.0, "W": 1.0}, link="logistic"),
    )
    ate = true_ate(config)
    assert 0.15 < ate < 0.25


@pytest.mark.parametrize(
    "assignment, outcome",
    [
        ({"X": 1.0}, {"treatment": 1.0}),
        ({"Z": 1.0}, {"treatment:X": 1.0}),
        ({"Z": 1.0}, {"outcome": 1.0}),
    ],
)
def test_unresolvable_coefficient_names(assignment, outcome):
    with pytest.raises(SynthError) as exc_info:
        ScmConfig(
            confounders=[Confounder("Z")],
            treatment_assignment=assignment,
            outcome_model=OutcomeModel(outcome),
        )
    assert "does not resolve" in str(exc_info.value)


def test_scm_config_validation():
    with pytest.raises(SynthError):
        Confounder("Z", "bernoulli", p=1.5)
    with pytest.raises(SynthError):
        Confounder("Z", "poisson")
    with pytest.raises(SynthError):
        OutcomeModel({"treatment": 1.0}, link="probit")
    with pytest.raises(SynthError):
        ScmConfig([Confounder("Z"), Confounder("Z")], {}, OutcomeModel({}))
    with pytest.raises(SynthError):
        ScmConfig([Confounder("treatment")], {}, OutcomeModel({}))


def test_scm_config_json():
    config = canonical_scm()
    restored = ScmConfig.from_json(config.to_json())
    assert restored == config

    with pytest.raises(SynthError):
        ScmConfig.from_json({"confounders": [], "treatment_assignment": {}})


def test_generate_scm_is_deterministic():
    config = canonical_scm()
    a = generate_scm(config, 2000)
    b = generate_scm(config, 2000)
    pd.testing.assert_frame_equal(a, b)
    assert a.columns.tolist() == ["Z", "treatment", "outcome"]
    assert set(a["treatment"]) <= {0, 1} and set(a["outcome"]) <= {0, 1}

    c = generate_scm(config, 2000, seed=12)
    assert not a.equals(c)

    with pytest.raises(SynthError):
        generate_scm(config, 0)


def test_generate_scm_assignment_rates():
    frame = generate_scm(canonical_scm(), 100_000, seed=0)
    by_z = frame.groupby("Z")["treatment"].mean()
    assert by_z[0] == pytest.approx(0.2, abs=0.01)
    assert by_z[1] == pytest.approx(0.8, abs=0.01)
    assert naive_difference(frame, "treatment", "outcome") == pytest.approx(0.58, abs=0.02)


def test_save_scm(tmp_path):
    config = canonical_scm()
    frame = generate_scm(config, 500)
    save_scm(frame, config, tmp_path, 500, 11)

    truth = load_json(tmp_path / "scm_truth.json")
    assert truth["true_ate"] == pytest.approx(0.40)
    assert ScmConfig.from_json(truth["config"]) == config
    assert len(pd.read_csv(tmp_path / "scm.csv")) == 500


@pytest.fixture(scope="module")
def corpus():
    return generate_churn_corpus(ChurnCorpusConfig(n_members=1000, seed=3))


def test_churn_corpus_shape(corpus):
    assert len(corpus.records) == 1000
    assert corpus.records[0].member_id == "m0000"
    assert 0.05 <= corpus.ground_truth["churn_rate"] <= 0.5

    for record in corpus.records[:50]:
        months = sorted(record.monthly_attributes)
        assert months[0] == record.account_open_month
        if record.account_close_month is not None:
            assert months[-1] == record.account_close_month - 1
        assert record.static_attributes["gender"] in ("F", "M")

    assert corpus.hazards["hazard"].between(0, 1, inclusive="neither").all()


def test_churn_corpus_is_deterministic(corpus):
    again = generate_churn_corpus(ChurnCorpusConfig(n_members=1000, seed=3))
    assert again.records == corpus.records
    pd.testing.assert_frame_equal(again.hazards, corpus.hazards)

    other = generate_churn_corpus(ChurnCorpusConfig(n_members=1000, seed=4))
    assert other.records != corpus.records


def test_churn_corpus_config_validation():
    for kwargs in (dict(n_members=0), dict(months=1), dict(open_window=30), dict(coefficients={"age": 1.0})):
        with pytest.raises(SynthError):
            ChurnCorpusConfig(**kwargs)


def test_recency_drives_hazard():
    quiet = generate_churn_corpus(ChurnCorpusConfig(n_members=500, coefficients={}))
    noisy = generate_churn_corpus(ChurnCorpusConfig(n_members=500, coefficients={"sg_recency": 3.0}))
    assert quiet.hazards["hazard"].nunique() == 1
    assert noisy.ground_truth["churn_rate"] > quiet.ground_truth["churn_rate"]


def test_oracle_churn_probability():
    hazards = pd.DataFrame(
        {"member_id": ["a", "a", "b"], "month": [5, 6, 5], "hazard": [0.1, 0.2, 0.5]}
    )
    probs = oracle_churn_probability(hazards, ["a", "b", "c"], anchor_month=5, outcome_len=2)
    np.testing.assert_allclose(probs[:2], [1 - 0.9**2, 1 - 0.5**2])
    assert np.isnan(probs[2])


def test_write_and_read_corpus(tmp_path, corpus):
    paths = write_corpus(corpus, tmp_path)
    assert all(p.exists() for p in paths.values())

    hazards, truth = read_corpus_truth(tmp_path)
    assert truth["churn_rate"] == corpus.ground_truth["churn_rate"]
    assert len(hazards) == len(corpus.hazards)
    assert len(read_member_records(paths["monthly"], paths["static"])) == 1000

    with pytest.raises(SynthError):
        read_corpus_truth(tmp_path / "missing")


def test_corpus_config_from_truth(corpus):
    assert corpus_config_from_truth(corpus.ground_truth) == ChurnCorpusConfig(n_members=1000, seed=3)

    truth = dict(corpus.ground_truth)
    truth.pop("open_window")
    with pytest.raises(SynthError):
        corpus_config_from_truth(truth)


def test_true_driver_effect_is_zero_without_hazard_drivers():
    config = ChurnCorpusConfig(n_members=800, seed=5, coefficients={})
    for driver in ("sg_recency", "balance_change_ratio", "balance_last", "account_tenure"):
        assert true_driver_effect(config, driver, WindowSpec(17)) == 0.0


@pytest.mark.parametrize(
    "driver, direction, sign",
    [
        ("sg_recency", "high", 1),
        ("balance_change_ratio", "low", 1),
        ("balance_last", "high", -1),
    ],
)
def test_true_driver_effect_signs(driver, direction, sign):
    config = ChurnCorpusConfig(n_members=2000, seed=1)
    effect = true_driver_effect(config, driver, WindowSpec(17), direction, n_replicates=10)
    assert sign * effect > 0.01
    assert effect == true_driver_effect(config, driver, WindowSpec(17), direction, n_replicates=10)


def test_true_driver_effect_rejects_bad_input():
    config = ChurnCorpusConfig(n_members=200)
    with pytest.raises(SynthError) as exc_info:
        true_driver_effect(config, "gender", WindowSpec(17))
    assert "not a planted driver" in str(exc_info.value)

    with pytest.raises(SynthError):
        true_driver_effect(config, "sg_recency", WindowSpec(20, outcome_len=6))
