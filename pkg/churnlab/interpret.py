# -*- encoding: utf-8 -*-
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .dataset import LabeledDataset
from .logger import logger
from .metrics import MetricsError, accuracy, auc, confusion
from .models import Classifier
from .utils import ChurnLabError, mkdir

FLAT_TOL = 1e-12

Curve = List[Tuple[float, float]]


@dataclass(frozen=True)
class FeatureImportance:
    name: str
    mean_drop: float
    std: float


@dataclass(frozen=True)
class Candidate:
    name: str
    importance: float
    direction: str


def partial_dependence(
    model: Classifier, dataset: LabeledDataset, feature: str, grid_size: int = 20
) -> Curve:
    """Mean predicted churn probability with ``feature`` pinned at each grid value."""
    if grid_size < 2:
        raise InterpretError(f"grid_size must be >= 2, got {grid_size}")

    j = dataset.index_of(feature)
    column = dataset.features[:, j]
    lo, hi = float(column.min()), float(column.max())
    if lo == hi:
        logger.warning(f"[PDP] {feature} is constant, single-point curve")
        grid = np.array([lo])
    else:
        grid = np.linspace(lo, hi, grid_size)

    work = dataset.features.copy()
    curve = []
    for value in grid:
        work[:, j] = value
        curve.append((float(value), float(np.mean(model.predict_proba(work)))))
    return curve


def _score(metric: str, labels: np.ndarray, probas: np.ndarray) -> float:
    try:
        if metric == "auc":
            return auc(probas, labels)
        if metric == "accuracy":
            return accuracy(confusion(labels, probas))
    except MetricsError as exc:
        raise InterpretError(f"metric {metric} failed: {exc}") from exc
    raise InterpretError(f"Unknown metric {metric!r}")


def permutation_importance(
    model: Classifier,
    dataset: LabeledDataset,
    metric: str = "auc",
    n_repeats: int = 5,
    seed: int = 0,
    verbose: bool = False,
) -> List[FeatureImportance]:
    """Drop in ``metric`` after shuffling one column, ranked by mean drop."""
    if n_repeats < 1:
        raise InterpretError(f"n_repeats must be >= 1, got {n_repeats}")

    x, y = dataset.features, dataset.labels
    baseline = _score(metric, y, model.predict_proba(x))

    results = []
    work = x.copy()
    names = dataset.feature_names
    for j in tqdm(range(dataset.n_features), desc="[Importance]", disable=not verbose):
        drops = []
        for r in range(n_repeats):
            rng = np.random.default_rng([seed, j, r])
            work[:, j] = x[rng.permutation(len(x)), j]
            drops.append(baseline - _score(metric, y, model.predict_proba(work)))
        work[:, j] = x[:, j]
        results.append(FeatureImportance(names[j], float(np.mean(drops)), float(np.std(drops))))

    return sorted(results, key=lambda f: -f.mean_drop)


def curve_direction(curve: Curve, tol: float = FLAT_TOL) -> str:
    means = np.array([m for _, m in curve])
    diffs = np.diff(means)
    if diffs.size == 0 or np.all(np.abs(diffs) <= tol):
        return "flat"
    if np.all(diffs >= -tol):
        return "increasing"
    if np.all(diffs <= tol):
        return "decreasing"
    return "non-monotone"


def shortlist_candidates(
    importances: Sequence[FeatureImportance], curves: Mapping[str, Curve], top_k: int
) -> List[Candidate]:
    ranked = sorted(importances, key=lambda f: -f.mean_drop)
    if top_k > len(ranked):
        logger.warning(f"[Shortlist] top_k {top_k} > {len(ranked)} features, clamped")
        top_k = len(ranked)

    out = []
    for imp in ranked[:top_k]:
        curve = curves.get(imp.name)
        direction = curve_direction(curve) if curve else "non-monotone"
        out.append(Candidate(imp.name, imp.mean_drop, direction))
    return out


def shortlist_to_queries(candidates: Sequence[Candidate]) -> List[Dict]:
    """Causal-config ``queries`` entries; decreasing drivers are binarized low."""
    return [
        {
            "treatment": c.name,
            "rule": {
                "kind": "median",
                "direction": "low" if c.direction == "decreasing" else "high",
            },
        }
        for c in candidates
    ]


def save_pdp_csv(curves: Mapping[str, Curve], save_path: Union[str, Path]) -> None:
    rows = [(name, v, m) for name, curve in curves.items() for v, m in curve]
    save_path = Path(save_path)
    mkdir(save_path.parent)
    frame = pd.DataFrame(rows, columns=["feature", "grid_value", "mean_proba"])
    frame.to_csv(save_path, index=False, float_format="%.17g")


class InterpretError(ChurnLabError):
    pass
