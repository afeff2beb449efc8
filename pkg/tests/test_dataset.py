# -*- encoding: utf-8 -*-
import sys
from pathlib import Path

import numpy as np
import pytest

cur_dir = Path(__file__).resolve().parent
root_dir = cur_dir.parent

sys.path.append(str(root_dir))

from churnlab.dataset import (
    DatasetError,
    FeatureSpec,
    LabeledDataset,
    MemberRecord,
    WindowSpec,
    aggregate,
    apply_inclusion_filters,
    build_snapshot,
    label_outcome,
    pool_windows,
    read_labeled_csv,
    read_member_records,
    schema_path,
    slide_windows,
    train_test_split,
    write_member_records,
)

RECIPE = {"balance": ["last", "change_amount"], "sg": ["recency", "sum"]}


def make_record(member_id="a", open_month=0, close_month=None, months=range(0, 13), balance=2000.0, sg=100.0, **static):
    monthly = {m: {"balance": balance + 10 * m, "sg": sg} for m in months}
    return MemberRecord(member_id, open_month, close_month, monthly, static)


def make_dataset(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return LabeledDataset(
        rng.normal(size=(n, 2)),
        np.arange(n) % 2,
        [FeatureSpec("x0"), FeatureSpec("x1")],
        [f"m{i}" for i in range(n)],
    )


def test_member_record_rejects_attributes_outside_lifetime():
    with pytest.raises(DatasetError) as exc_info:
        make_record(open_month=3, months=range(0, 5))
    assert "outside the account lifetime" in str(exc_info.value)

    with pytest.raises(DatasetError):
        MemberRecord("b", account_open_month=5, account_close_month=4)


@pytest.mark.parametrize(
    "record, kept",
    [
        (make_record(open_month=0), True),
        (make_record(open_month=6, months=range(6, 13)), False),
        (make_record(open_month=5, months=range(5, 13)), True),
        (make_record(balance=1499.0 - 120.0), False),
        (make_record(balance=1500.0 - 120.0), True),
        (make_record(close_month=12), False),
        (make_record(months=range(0, 12)), False),
    ],
)
def test_inclusion_filters(record, kept):
    window = WindowSpec(anchor_month=12)
    assert (apply_inclusion_filters([record], window) == [record]) is kept


@pytest.mark.parametrize(
    "close_month, label",
    [(None, 0), (13, 1), (18, 1), (19, 0)],
)
def test_label_outcome(close_month, label):
    record = make_record(close_month=close_month)
    assert label_outcome(record, WindowSpec(anchor_month=12, outcome_len=6)) == label


def test_label_outcome_closed_before_window():
    record = make_record(close_month=12)
    with pytest.raises(DatasetError) as exc_info:
        label_outcome(record, WindowSpec(anchor_month=12))
    assert "closed before outcome window" in str(exc_info.value)


@pytest.mark.parametrize(
    "agg, expected",
    [
        ("last", 4.0),
        ("mean", 3.0),
        ("sum", 9.0),
        ("change_amount", 2.0),
        ("change_ratio", 1.0),
        ("recency", 0.0),
    ],
)
def test_aggregate(agg, expected):
    window = WindowSpec(anchor_month=12)
    assert aggregate([10, 11, 12], [2.0, 3.0, 4.0], agg, window) == pytest.approx(expected)


def test_aggregate_edge_cases():
    window = WindowSpec(anchor_month=12, observation_len=12)
    assert aggregate([10, 11, 12], [5.0, 0.0, 0.0], "recency", window) == 2.0
    assert aggregate([], [], "recency", window) == 12.0
    assert aggregate([], [], "mean", window) == 0.0
    assert aggregate([1, 2], [0.0, 3.0], "change_ratio", window) == pytest.approx(3.0 / 1e-9)

    with pytest.raises(DatasetError):
        aggregate([1], [1.0], "median", window)


def test_build_snapshot_columns_and_values():
    records = [
        make_record("a", gender="F"),
        make_record("b", close_month=15, sg=0.0, gender="M"),
    ]
    ds = build_snapshot(records, WindowSpec(anchor_month=12), RECIPE)

    assert ds.feature_names == [
        "balance_last",
        "balance_change_amount",
        "sg_recency",
        "sg_sum",
        "account_tenure",
        "gender",
    ]
    assert ds.labels.tolist() == [0, 1]
    assert ds.column("balance_last").tolist() == [2120.0, 2120.0]
    assert ds.column("balance_change_amount").tolist() == [110.0, 110.0]
    assert ds.column("sg_recency").tolist() == [0.0, 12.0]
    assert ds.column("account_tenure").tolist() == [12.0, 12.0]

    gender = ds.specs[ds.index_of("gender")]
    assert gender.is_nominal and gender.categories == ("F", "M")
    assert ds.column("gender").tolist() == [0.0, 1.0]


def test_build_snapshot_empty_window():
    record = make_record(months=range(0, 3))
    with pytest.raises(DatasetError) as exc_info:
        build_snapshot([record], WindowSpec(anchor_month=20), RECIPE)
    assert "empty observation window" in str(exc_info.value)


def test_slide_windows_count_and_error_tag():
    records = [make_record(str(i), months=range(0, 30)) for i in range(3)]
    datasets = slide_windows(records, WindowSpec(anchor_month=12), 6, 3, RECIPE)
    assert len(datasets) == 3
    assert [d.column("account_tenure")[0] for d in datasets] == [12.0, 18.0, 24.0]

    with pytest.raises(DatasetError) as exc_info:
        slide_windows(records, WindowSpec(anchor_month=12), 6, 2, {"balance": ["median"]})
    assert "window 0" in str(exc_info.value)


def test_train_test_split():
    ds = make_dataset(10)
    train, test = train_test_split(ds, 0.8, seed=3)
    assert (len(train), len(test)) == (8, 2)
    assert set(train.member_ids).isdisjoint(test.member_ids)
    assert set(train.member_ids) | set(test.member_ids) == set(ds.member_ids)

    again, _ = train_test_split(ds, 0.8, seed=3)
    assert again.member_ids == train.member_ids

    with pytest.raises(DatasetError):
        train_test_split(ds, 1.0)


def test_labeled_dataset_invariants():
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((2, 1)), [0, 2], [FeatureSpec("x")], ["a", "b"])
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((2, 2)), [0, 1], [FeatureSpec("x"), FeatureSpec("x")], ["a", "b"])
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((2, 1)), [0, 1, 1], [FeatureSpec("x")], ["a", "b"])


def test_labeled_csv_keeps_ids_and_categories(tmp_path):
    records = [make_record("a", gender="F"), make_record("b", close_month=15, gender="M")]
    ds = build_snapshot(records, WindowSpec(anchor_month=12), RECIPE)
    csv_path = tmp_path / "snapshot.csv"
    ds.to_csv(csv_path)

    loaded = read_labeled_csv(csv_path)
    assert loaded.member_ids == ("a", "b")
    assert loaded.feature_names == ds.feature_names
    assert loaded.specs[-1].categories == ("F", "M")
    np.testing.assert_array_equal(loaded.features, ds.features)


def test_member_records_files(tmp_path):
    records = [make_record("a", gender="F"), make_record("b", close_month=15, gender="M")]
    write_member_records(records, tmp_path / "monthly.csv", tmp_path / "static.csv")
    loaded = {r.member_id: r for r in read_member_records(tmp_path / "monthly.csv", tmp_path / "static.csv")}

    assert loaded["a"].account_close_month is None
    assert loaded["b"].account_close_month == 15
    assert loaded["b"].static_attributes == {"gender": "M"}
    assert loaded["a"].value_at("balance", 12) == 2120.0


def test_pool_windows_tags_member_ids():
    records = [make_record(str(i), months=range(0, 30), gender="F" if i else "M") for i in range(3)]
    datasets = slide_windows(records, WindowSpec(anchor_month=12), 6, 2, RECIPE)
    pooled = pool_windows(datasets, [12, 18])

    assert len(pooled) == 6
    assert pooled.member_ids[0] == "0@12" and pooled.member_ids[-1] == "2@18"
    assert pooled.specs[pooled.index_of("gender")].categories == ("F", "M")


def test_labeled_csv_keeps_numeric_looking_categories(tmp_path):
    ds = LabeledDataset(
        np.array([[0.0, 1.5], [1.0, 2.5], [0.0, 3.5]]),
        [0, 1, 0],
        [FeatureSpec("plan", "nominal", ("01", "2")), FeatureSpec("x")],
        ["a", "b", "c"],
    )
    csv_path = tmp_path / "train.csv"
    ds.to_csv(csv_path)
    assert schema_path(csv_path).exists()

    loaded = read_labeled_csv(csv_path)
    assert loaded.specs == ds.specs
    np.testing.assert_array_equal(loaded.features, ds.features)

    schema_path(csv_path).unlink()
    assert not read_labeled_csv(csv_path).specs[0].is_nominal


def test_train_test_split_keeps_member_windows_together():
    records = [make_record(str(i), months=range(0, 30), gender="F") for i in range(10)]
    pooled = pool_windows(slide_windows(records, WindowSpec(anchor_month=12), 6, 2, RECIPE), [12, 18])
    train, test = train_test_split(pooled, 0.8, seed=1)

    train_members = {m.split("@")[0] for m in train.member_ids}
    test_members = {m.split("@")[0] for m in test.member_ids}
    assert train_members.isdisjoint(test_members)
    assert (len(train), len(test)) == (16, 4)


def test_train_test_split_needs_two_members():
    ds = LabeledDataset(np.zeros((2, 1)), [0, 1], [FeatureSpec("x")], ["a@12", "a@18"])
    with pytest.raises(DatasetError) as exc_info:
        train_test_split(ds, 0.5)
    assert "distinct members" in str(exc_info.value)
