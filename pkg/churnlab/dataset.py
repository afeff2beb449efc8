# -*- encoding: utf-8 -*-
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .logger import logger
from .utils import ChurnLabError, load_json, mkdir, save_json

AGGREGATIONS = ("last", "mean", "sum", "change_amount", "change_ratio", "recency")
CHANGE_RATIO_EPS = 1e-9
TENURE_FEATURE = "account_tenure"
LABEL_COLUMN = "label"
ID_COLUMN = "member_id"
WINDOW_TAG = "@"
OPEN_ATTR = "account_open_month"
CLOSE_ATTR = "account_close_month"
MISSING_CATEGORY = "unknown"


@dataclass(frozen=True)
class MemberRecord:
    member_id: str
    account_open_month: int
    account_close_month: Optional[int] = None
    monthly_attributes: Mapping[int, Mapping[str, float]] = field(default_factory=dict)
    static_attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        close = self.account_close_month
        if close is not None and close < self.account_open_month:
            raise DatasetError(
                f"{self.member_id}: account_close_month {close} "
                f"< account_open_month {self.account_open_month}"
            )

        for month in self.monthly_attributes:
            if month < self.account_open_month or (close is not None and month > close):
                raise DatasetError(
                    f"{self.member_id}: monthly attributes at month {month} "
                    "outside the account lifetime"
                )

    def tenure_at(self, month: int) -> int:
        return month - self.account_open_month

    def value_at(self, attr: str, month: int) -> Optional[float]:
        return self.monthly_attributes.get(month, {}).get(attr)


@dataclass(frozen=True)
class WindowSpec:
    anchor_month: int
    observation_len: int = 12
    outcome_len: int = 6

    def __post_init__(self):
        if self.observation_len < 1:
            raise DatasetError(f"observation_len must be >= 1, got {self.observation_len}")
        if self.outcome_len < 1:
            raise DatasetError(f"outcome_len must be >= 1, got {self.outcome_len}")

    @property
    def observation_months(self) -> range:
        return range(self.anchor_month - self.observation_len + 1, self.anchor_month + 1)

    def in_outcome(self, month: int) -> bool:
        return self.anchor_month < month <= self.anchor_month + self.outcome_len


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = "numeric"
    categories: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("numeric", "nominal"):
            raise DatasetError(f"Unknown feature kind {self.kind!r} for {self.name}")

    @property
    def is_nominal(self) -> bool:
        return self.kind == "nominal"


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix, binary churn labels and per-column metadata.

    Nominal columns hold integer codes into ``FeatureSpec.categories``.
    """

    features: np.ndarray
    labels: np.ndarray
    specs: Tuple[FeatureSpec, ...]
    member_ids: Tuple[str, ...]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(len(self.member_ids), 0)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "member_ids", tuple(str(v) for v in self.member_ids))

        if features.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {features.shape}")

        n_rows, n_cols = features.shape
        if len(labels) != n_rows or len(self.member_ids) != n_rows:
            raise DatasetError(
                f"Row count mismatch: features {n_rows}, labels {len(labels)}, "
                f"member_ids {len(self.member_ids)}"
            )

        if n_cols != len(self.specs):
            raise DatasetError(f"Column count {n_cols} != {len(self.specs)} feature specs")

        names = self.feature_names
        if len(set(names)) != len(names):
            raise DatasetError("Feature names must be unique within a dataset.")

        if n_rows and not np.isin(labels, (0, 1)).all():
            raise DatasetError("Every label must be 0 or 1.")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_names(self) -> List[str]:
        return [s.name for s in self.specs]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.index_of(name)]

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError as exc:
            raise DatasetError(f"Unknown feature {name!r}") from exc

    def take_rows(self, idx: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            features=self.features[idx],
            labels=self.labels[idx],
            specs=self.specs,
            member_ids=tuple(self.member_ids[i] for i in idx),
        )

    def select_columns(self, names: Sequence[str]) -> "LabeledDataset":
        idx = [self.index_of(n) for n in names]
        return LabeledDataset(
            features=self.features[:, idx],
            labels=self.labels,
            specs=tuple(self.specs[i] for i in idx),
            member_ids=self.member_ids,
        )

    def class_counts(self) -> Dict[int, int]:
        return {c: int(np.sum(self.labels == c)) for c in (0, 1)}

    def to_frame(self, decode_nominal: bool = True) -> pd.DataFrame:
        data = {ID_COLUMN: list(self.member_ids)}
        for j, spec in enumerate(self.specs):
            col = self.features[:, j]
            if spec.is_nominal and decode_nominal:
                data[spec.name] = [spec.categories[int(c)] for c in col]
            else:
                data[spec.name] = col
        data[LABEL_COLUMN] = self.labels
        return pd.DataFrame(data)

    def to_csv(self, save_path: Union[str, Path]) -> None:
        """Write the CSV plus a ``.schema.json`` sidecar naming the nominal columns."""
        save_path = Path(save_path)
        mkdir(save_path.parent)
        self.to_frame().to_csv(save_path, index=False, float_format="%.17g")
        save_json(schema_path(save_path), {"nominal": self.nominal_categories()})
        logger.info(f"[Dataset] {len(self)} rows x {self.n_features} features -> {save_path}")

    def nominal_categories(self) -> Dict[str, List[str]]:
        return {s.name: list(s.categories) for s in self.specs if s.is_nominal}


def schema_path(csv_path: Union[str, Path]) -> Path:
    return Path(csv_path).with_suffix(".schema.json")


def read_labeled_csv(csv_path: Union[str, Path]) -> LabeledDataset:
    """Inverse of ``LabeledDataset.to_csv``.

    Nominal columns come from the sidecar when one exists; without it every
    non-numeric column becomes nominal.
    """
    sidecar = schema_path(csv_path)
    nominal = load_json(sidecar)["nominal"] if sidecar.exists() else None
    dtype = {ID_COLUMN: str, **{name: str for name in nominal or {}}}
    frame = pd.read_csv(csv_path, dtype=dtype, keep_default_na=False)
    if LABEL_COLUMN not in frame.columns:
        raise DatasetError(f"{csv_path} has no {LABEL_COLUMN!r} column")
    return dataset_from_frame(frame, nominal)


def dataset_from_frame(
    frame: pd.DataFrame, nominal: Optional[Mapping[str, Sequence[str]]] = None
) -> LabeledDataset:
    """Columns named in ``nominal`` are coded against the given categories;
    other non-numeric columns get their sorted distinct values."""
    feature_cols = [c for c in frame.columns if c not in (ID_COLUMN, LABEL_COLUMN)]
    if ID_COLUMN in frame.columns:
        member_ids = tuple(frame[ID_COLUMN].astype(str))
    else:
        member_ids = tuple(str(i) for i in range(len(frame)))

    nominal = nominal or {}
    unknown = set(nominal) - set(feature_cols)
    if unknown:
        raise DatasetError(f"nominal columns {sorted(unknown)} are not in the frame")

    specs, columns = [], []
    for name in feature_cols:
        col = frame[name]
        if name not in nominal and pd.api.types.is_numeric_dtype(col):
            specs.append(FeatureSpec(name, "numeric"))
            columns.append(col.to_numpy(dtype=np.float64))
            continue

        values = col.astype(str)
        if name in nominal:
            categories = tuple(str(c) for c in nominal[name])
            missing = set(values) - set(categories)
            if missing:
                raise DatasetError(f"{name}: values {sorted(missing)} outside categories {categories}")
        else:
            categories = tuple(sorted(set(values)))
        lookup = {c: i for i, c in enumerate(categories)}
        specs.append(FeatureSpec(name, "nominal", categories))
        columns.append(np.array([lookup[v] for v in values], dtype=np.float64))

    features = np.column_stack(columns) if columns else np.zeros((len(frame), 0))
    return LabeledDataset(features, frame[LABEL_COLUMN].to_numpy(), specs, member_ids)


def pool_windows(datasets: Sequence[LabeledDataset], anchors: Sequence[int]) -> LabeledDataset:
    """Stack per-window snapshots; member ids become ``<id>@<anchor>``.

    Nominal vocabularies are merged, so windows may have seen different categories.
    """
    if len(datasets) != len(anchors) or not datasets:
        raise DatasetError("pool_windows needs one anchor per dataset")
    if len(datasets) == 1:
        return datasets[0]

    names = datasets[0].feature_names
    frames = []
    vocab: Dict[str, set] = {}
    for ds, anchor in zip(datasets, anchors):
        if ds.feature_names != names:
            raise DatasetError(f"window at anchor {anchor} has different columns")
        frame = ds.to_frame()
        frame[ID_COLUMN] = [f"{m}{WINDOW_TAG}{anchor}" for m in ds.member_ids]
        frames.append(frame)
        for name, categories in ds.nominal_categories().items():
            vocab.setdefault(name, set()).update(categories)

    nominal = {name: sorted(categories) for name, categories in vocab.items()}
    return dataset_from_frame(pd.concat(frames, ignore_index=True), nominal)


def base_member_id(member_id: str) -> str:
    """``m17@12`` -> ``m17``; untagged ids come back unchanged."""
    return member_id.rsplit(WINDOW_TAG, 1)[0]


def apply_inclusion_filters(
    records: Sequence[MemberRecord],
    window: WindowSpec,
    min_tenure_months: int = 6,
    min_balance: float = 1500.0,
    balance_attr: str = "balance",
) -> List[MemberRecord]:
    """Keep members active at the anchor month with tenure > min_tenure_months
    and balance >= min_balance there.

    Accounts closed at or before the anchor month are not active and are dropped,
    as are records with no balance observed at the anchor month.
    """
    if min_tenure_months < 0:
        raise DatasetError(f"min_tenure_months must be >= 0, got {min_tenure_months}")
    if min_balance < 0:
        raise DatasetError(f"min_balance must be >= 0, got {min_balance}")

    anchor = window.anchor_month
    kept = []
    for record in records:
        close = record.account_close_month
        if close is not None and close <= anchor:
            continue

        if record.tenure_at(anchor) <= min_tenure_months:
            continue

        balance = record.value_at(balance_attr, anchor)
        if balance is None or balance < min_balance:
            continue
        kept.append(record)
    return kept


def label_outcome(record: MemberRecord, window: WindowSpec) -> int:
    close = record.account_close_month
    if close is None:
        return 0

    if close <= window.anchor_month:
        raise DatasetError(
            f"{record.member_id}: closed before outcome window "
            f"(close {close} <= anchor {window.anchor_month})"
        )
    return int(window.in_outcome(close))


def label_outcomes(records: Sequence[MemberRecord], window: WindowSpec) -> List[int]:
    return [label_outcome(r, window) for r in records]


def aggregate(
    months: Sequence[int], values: Sequence[float], aggregation: str, window: WindowSpec
) -> float:
    """One aggregation over the observed (month, value) pairs of a window.

    An attribute never observed inside the window aggregates to 0, and its
    recency is the full observation length.
    """
    if aggregation not in AGGREGATIONS:
        raise DatasetError(f"Unknown aggregation {aggregation!r}")

    if aggregation == "recency":
        nonzero = [m for m, v in zip(months, values) if v != 0]
        if not nonzero:
            return float(window.observation_len)
        return float(window.anchor_month - max(nonzero))

    if not values:
        return 0.0

    first, last = values[0], values[-1]
    if aggregation == "last":
        return float(last)
    if aggregation == "mean":
        return float(np.mean(values))
    if aggregation == "sum":
        return float(np.sum(values))
    if aggregation == "change_amount":
        return float(last - first)
    return float((last - first) / max(abs(first), CHANGE_RATIO_EPS))


def _observed_series(
    record: MemberRecord, attr: str, window: WindowSpec
) -> Tuple[List[int], List[float]]:
    months, values = [], []
    for month in window.observation_months:
        value = record.value_at(attr, month)
        if value is None or (isinstance(value, float) and math.isnan(value)):
            continue
        months.append(month)
        values.append(float(value))
    return months, values


def build_snapshot(
    records: Sequence[MemberRecord],
    window: WindowSpec,
    recipe: Mapping[str, Sequence[str]],
    include_tenure: bool = True,
) -> LabeledDataset:
    """Aggregate each member's observation window into one feature row.

    Derived columns are named ``<attr>_<aggregation>`` in recipe order, followed
    by ``account_tenure`` and then every static attribute (nominal) by name.
    """
    for attr, aggs in recipe.items():
        for agg in aggs:
            if agg not in AGGREGATIONS:
                raise DatasetError(f"Unknown aggregation {agg!r} for attribute {attr!r}")

    specs = [FeatureSpec(f"{attr}_{agg}") for attr, aggs in recipe.items() for agg in aggs]
    if include_tenure:
        specs.append(FeatureSpec(TENURE_FEATURE))

    static_names = sorted({k for r in records for k in r.static_attributes})
    vocab = {
        name: tuple(
            sorted({str(r.static_attributes.get(name, MISSING_CATEGORY)) for r in records})
        )
        for name in static_names
    }
    specs.extend(FeatureSpec(name, "nominal", vocab[name]) for name in static_names)

    rows = []
    for record in records:
        observed = [m for m in window.observation_months if record.monthly_attributes.get(m)]
        if not observed:
            raise DatasetError(f"{record.member_id}: empty observation window")

        row = []
        for attr, aggs in recipe.items():
            months, values = _observed_series(record, attr, window)
            row.extend(aggregate(months, values, agg, window) for agg in aggs)

        if include_tenure:
            row.append(float(record.tenure_at(window.anchor_month)))

        for name in static_names:
            category = str(record.static_attributes.get(name, MISSING_CATEGORY))
            row.append(float(vocab[name].index(category)))
        rows.append(row)

    features = np.array(rows, dtype=np.float64).reshape(len(records), len(specs))
    labels = label_outcomes(records, window)
    return LabeledDataset(features, labels, specs, tuple(r.member_id for r in records))


def slide_windows(
    records: Sequence[MemberRecord],
    base_window: WindowSpec,
    step_months: int,
    count: int,
    recipe: Mapping[str, Sequence[str]],
    min_tenure_months: int = 6,
    min_balance: float = 1500.0,
    balance_attr: str = "balance",
) -> List[LabeledDataset]:
    if step_months < 1:
        raise DatasetError(f"step_months must be >= 1, got {step_months}")
    if count < 1:
        raise DatasetError(f"count must be >= 1, got {count}")

    datasets = []
    for i in range(count):
        window = replace(base_window, anchor_month=base_window.anchor_month + i * step_months)
        try:
            kept = apply_inclusion_filters(
                records, window, min_tenure_months, min_balance, balance_attr
            )
            datasets.append(build_snapshot(kept, window, recipe))
        except DatasetError as exc:
            raise DatasetError(f"window {i} (anchor {window.anchor_month}): {exc}") from exc

        logger.info(
            f"[Dataset] window {i}: anchor {window.anchor_month}, "
            f"{len(datasets[-1])} members, churn {datasets[-1].class_counts()[1]}"
        )
    return datasets


def train_test_split(
    dataset: LabeledDataset, train_fraction: float = 0.8, seed: int = 0
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle split over members; the train side gets floor(train_fraction * m)
    of the m distinct members.

    Pooled window rows of one member (``<id>@<anchor>``) land on the same side,
    and both sides keep the input row order.
    """
    if not 0 < train_fraction < 1:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")

    codes, members = pd.factorize(pd.Series([base_member_id(m) for m in dataset.member_ids]))
    n = len(members)
    if n < 2:
        raise DatasetError(f"Cannot split a dataset with {n} distinct members")

    n_train = min(max(int(math.floor(train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    in_train = np.isin(codes, perm[:n_train])
    if n != len(dataset):
        logger.info(f"[Dataset] split {len(dataset)} window rows by {n} members")
    return dataset.take_rows(np.flatnonzero(in_train)), dataset.take_rows(np.flatnonzero(~in_train))


def read_member_records(
    monthly_path: Union[str, Path], static_path: Union[str, Path]
) -> List[MemberRecord]:
    """Load members from the long-format monthly CSV and the static CSV.

    The static CSV carries ``account_open_month`` and (for closed accounts)
    ``account_close_month`` as reserved attributes.
    """
    monthly = pd.read_csv(monthly_path, dtype={ID_COLUMN: str}, encoding="utf-8")
    static = pd.read_csv(
        static_path, dtype={ID_COLUMN: str, "value": str}, keep_default_na=False
    )
    for frame, path, cols in (
        (monthly, monthly_path, (ID_COLUMN, "month", "attr", "value")),
        (static, static_path, (ID_COLUMN, "attr", "value")),
    ):
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise DatasetError(f"{path} is missing columns {missing}")

    statics: Dict[str, Dict[str, str]] = {}
    for member_id, attr, value in static[[ID_COLUMN, "attr", "value"]].itertuples(index=False):
        statics.setdefault(member_id, {})[attr] = value

    months: Dict[str, Dict[int, Dict[str, float]]] = {}
    for member_id, month, attr, value in monthly[[ID_COLUMN, "month", "attr", "value"]].itertuples(
        index=False
    ):
        months.setdefault(member_id, {}).setdefault(int(month), {})[attr] = float(value)

    records = []
    for member_id, attrs in statics.items():
        attrs = dict(attrs)
        if OPEN_ATTR not in attrs:
            raise DatasetError(f"{member_id}: missing {OPEN_ATTR}")
        open_month = int(attrs.pop(OPEN_ATTR))
        close_raw = attrs.pop(CLOSE_ATTR, "")
        close_month = int(close_raw) if close_raw != "" else None
        records.append(
            MemberRecord(
                member_id=member_id,
                account_open_month=open_month,
                account_close_month=close_month,
                monthly_attributes=months.get(member_id, {}),
                static_attributes=attrs,
            )
        )
    logger.info(f"[Dataset] Loaded {len(records)} member records from {monthly_path}")
    return records


def write_member_records(
    records: Sequence[MemberRecord],
    monthly_path: Union[str, Path],
    static_path: Union[str, Path],
) -> None:
    monthly_rows, static_rows = [], []
    for r in records:
        static_rows.append((r.member_id, OPEN_ATTR, str(r.account_open_month)))
        if r.account_close_month is not None:
            static_rows.append((r.member_id, CLOSE_ATTR, str(r.account_close_month)))
        for attr in sorted(r.static_attributes):
            static_rows.append((r.member_id, attr, str(r.static_attributes[attr])))

        for month in sorted(r.monthly_attributes):
            for attr, value in r.monthly_attributes[month].items():
                monthly_rows.append((r.member_id, month, attr, value))

    for path in (monthly_path, static_path):
        mkdir(Path(path).parent)

    pd.DataFrame(monthly_rows, columns=[ID_COLUMN, "month", "attr", "value"]).to_csv(
        monthly_path, index=False, float_format="%.17g"
    )
    pd.DataFrame(static_rows, columns=[ID_COLUMN, "attr", "value"]).to_csv(
        static_path, index=False
    )
    logger.info(f"[Dataset] Wrote {len(records)} member records to {Path(monthly_path).parent}")


class DatasetError(ChurnLabError):
    pass
