# -*- encoding: utf-8 -*-
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .dataset import FeatureSpec, LabeledDataset
from .logger import logger
from .utils import ChurnLabError

MATCH_MAJORITY = "match-majority"


@dataclass(frozen=True)
class ScalerParams:
    names: Tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def to_json(self) -> Dict:
        return {
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": [n for n, c in zip(self.names, self.constant) if c],
        }

    @classmethod
    def from_json(cls, data: Dict) -> "ScalerParams":
        return cls(
            tuple(data["names"]),
            np.asarray(data["mean"], dtype=np.float64),
            np.asarray(data["std"], dtype=np.float64),
        )


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_minority_count: Union[int, str] = MATCH_MAJORITY
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise PreprocessError(f"k_neighbors must be >= 1, got {self.k_neighbors}")

        target = self.target_minority_count
        if target != MATCH_MAJORITY and not (isinstance(target, int) and target > 0):
            raise PreprocessError(
                f"target_minority_count must be a positive int or {MATCH_MAJORITY!r}"
            )


def standardize_fit(matrix: np.ndarray, names: Sequence[str] = ()) -> ScalerParams:
    """Per-column mean and population standard deviation."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise PreprocessError("Cannot fit a scaler on an empty matrix.")

    names = tuple(names) or tuple(f"x{j}" for j in range(matrix.shape[1]))
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    # float noise on an all-equal column must still read as constant
    std[np.all(matrix == matrix[0], axis=0)] = 0.0
    return ScalerParams(names, mean, std)


def standardize_apply(matrix: np.ndarray, params: ScalerParams) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.size == 0:
        raise PreprocessError("Cannot standardize an empty matrix.")

    safe_std = np.where(params.constant, 1.0, params.std)
    out = (matrix - params.mean) / safe_std
    out[:, params.constant] = 0.0
    return out


def standardize_invert(matrix: np.ndarray, params: ScalerParams) -> np.ndarray:
    return np.asarray(matrix, dtype=np.float64) * params.std + params.mean


def numeric_columns(dataset: LabeledDataset) -> List[int]:
    return [j for j, s in enumerate(dataset.specs) if not s.is_nominal]


def fit_scaler(dataset: LabeledDataset) -> ScalerParams:
    cols = numeric_columns(dataset)
    return standardize_fit(dataset.features[:, cols], [dataset.specs[j].name for j in cols])


def scale_dataset(dataset: LabeledDataset, params: ScalerParams) -> LabeledDataset:
    """Standardize the numeric columns named in ``params``; others pass through."""
    cols = [dataset.index_of(n) for n in params.names]
    features = dataset.features.copy()
    features[:, cols] = standardize_apply(features[:, cols], params)
    return LabeledDataset(features, dataset.labels, dataset.specs, dataset.member_ids)


def one_hot_fit(matrix: np.ndarray, specs: Sequence[FeatureSpec]) -> Dict[str, List[str]]:
    """Observed categories of every nominal column, lexicographically sorted."""
    matrix = np.asarray(matrix, dtype=np.float64)
    vocab = {}
    for j, spec in enumerate(specs):
        if spec.is_nominal:
            seen = {spec.categories[int(c)] for c in matrix[:, j]}
            vocab[spec.name] = sorted(seen)
    return vocab


def one_hot_apply(
    matrix: np.ndarray, specs: Sequence[FeatureSpec], vocab: Dict[str, List[str]]
) -> Tuple[np.ndarray, List[FeatureSpec]]:
    """Replace each nominal column in place by ``<attr>=<category>`` indicators."""
    matrix = np.asarray(matrix, dtype=np.float64)
    columns, out_specs = [], []
    for j, spec in enumerate(specs):
        if not spec.is_nominal:
            columns.append(matrix[:, j : j + 1])
            out_specs.append(spec)
            continue

        if spec.name not in vocab:
            raise PreprocessError(f"No fitted categories for nominal column {spec.name!r}")

        categories = vocab[spec.name]
        labels = [spec.categories[int(c)] for c in matrix[:, j]]
        unknown = sorted(set(labels) - set(categories))
        if unknown:
            raise PreprocessError(f"unknown category {unknown} in column {spec.name!r}")

        block = np.zeros((matrix.shape[0], len(categories)))
        index = {c: k for k, c in enumerate(categories)}
        for i, label in enumerate(labels):
            block[i, index[label]] = 1.0
        columns.append(block)
        out_specs.extend(FeatureSpec(f"{spec.name}={c}") for c in categories)

    out = np.hstack(columns) if columns else np.zeros((matrix.shape[0], 0))
    return out, out_specs


def one_hot(
    matrix: np.ndarray, specs: Sequence[FeatureSpec]
) -> Tuple[np.ndarray, List[FeatureSpec]]:
    return one_hot_apply(matrix, specs, one_hot_fit(matrix, specs))


def encode_dataset(dataset: LabeledDataset, vocab: Dict[str, List[str]]) -> LabeledDataset:
    features, specs = one_hot_apply(dataset.features, dataset.specs, vocab)
    return LabeledDataset(features, dataset.labels, specs, dataset.member_ids)


def interpolate(x: np.ndarray, x_nn: np.ndarray, u: float) -> np.ndarray:
    return x + u * (x_nn - x)


def minority_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points (Euclidean, exact, ties by index)."""
    sq = np.sum(points**2, axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def smote(dataset: LabeledDataset, config: SmoteConfig) -> LabeledDataset:
    """Append synthetic minority rows until the minority reaches the target count.

    Synthetic sample j interpolates from minority row j mod n_minority towards one
    of its k nearest minority neighbors. Its random draws come from (seed, j) only.
    """
    counts = dataset.class_counts()
    if min(counts.values()) == 0:
        raise PreprocessError(f"SMOTE needs both classes, got counts {counts}")

    minority = 1 if counts[1] <= counts[0] else 0
    majority_count = counts[1 - minority]
    minority_idx = np.flatnonzero(dataset.labels == minority)
    n_min = len(minority_idx)
    k = config.k_neighbors
    if n_min <= k:
        raise PreprocessError(
            f"too few minority samples for k: {n_min} minority rows, k_neighbors={k}"
        )

    if config.target_minority_count == MATCH_MAJORITY:
        target = majority_count
    else:
        target = int(config.target_minority_count)

    n_new = target - n_min
    if n_new <= 0:
        logger.info(f"[SMOTE] minority already has {n_min} >= {target} rows, nothing to do")
        return dataset

    points = dataset.features[minority_idx]
    neighbors = minority_neighbors(points, k)

    synthetic = np.empty((n_new, dataset.n_features))
    new_ids = []
    for j in range(n_new):
        base = j % n_min
        rng = np.random.default_rng([config.seed, j])
        nn = neighbors[base, rng.integers(k)]
        synthetic[j] = interpolate(points[base], points[nn], rng.random())
        new_ids.append(f"smote:{dataset.member_ids[minority_idx[base]]}:{j}")

    logger.info(
        f"[SMOTE] class {minority}: {n_min} -> {target} rows ({n_new} synthetic, k={k})"
    )
    return LabeledDataset(
        features=np.vstack([dataset.features, synthetic]),
        labels=np.concatenate([dataset.labels, np.full(n_new, minority)]),
        specs=dataset.specs,
        member_ids=dataset.member_ids + tuple(new_ids),
    )


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise PreprocessError(f"pearson needs equal-length vectors, got {x.shape}, {y.shape}")
    if len(x) < 2:
        raise PreprocessError("pearson needs at least 2 values")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise PreprocessError("zero variance")

    dx = x - x.mean()
    dy = y - y.mean()
    r = np.sum(dx * dy) / np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    return float(np.clip(r, -1.0, 1.0))


def correlation_pairs(
    matrix: np.ndarray, names: Sequence[str], threshold: float = 0.0
) -> Tuple[List[Tuple[str, str, float]], List[str]]:
    """All column pairs with |r| >= threshold, strongest first.

    Returns the pairs and the names of the constant columns that were skipped.
    """
    if not 0 <= threshold <= 1:
        raise PreprocessError(f"threshold must be in [0, 1], got {threshold}")

    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise PreprocessError(f"correlation needs a non-empty 2-D matrix, got shape {matrix.shape}")
    constant = [j for j in range(matrix.shape[1]) if np.all(matrix[:, j] == matrix[0, j])]
    if constant:
        logger.warning(f"[Correlation] skipped constant columns {[names[j] for j in constant]}")

    live = [j for j in range(matrix.shape[1]) if j not in constant]
    pairs = []
    for a, b in combinations(live, 2):
        r = pearson(matrix[:, a], matrix[:, b])
        if abs(r) >= threshold:
            pairs.append((a, b, r))

    pairs.sort(key=lambda p: (-abs(p[2]), p[0], p[1]))
    return [(names[a], names[b], r) for a, b, r in pairs], [names[j] for j in constant]


class PreprocessError(ChurnLabError):
    pass
