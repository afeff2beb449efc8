# -*- encoding: utf-8 -*-
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .dataset import LabeledDataset
from .logger import logger
from .models import LinearModel, fit_linear_discriminant
from .utils import ChurnLabError

Trainer = Callable[[LabeledDataset], LinearModel]

@dataclass(frozen=True)
class FeatureRanking:
    elimination_order: Tuple[str, ...]
    criterion_trace: Tuple[Dict[str, float], ...]
    kept: Tuple[str, ...]

    def to_json(self) -> Dict:
        return {
            "kept": list(self.kept),
            "elimination_order": list(self.elimination_order),
            "criterion_trace": [dict(t) for t in self.criterion_trace],
        }

    @classmethod
    def from_json(cls, data: Dict) -> "FeatureRanking":
        return cls(
            tuple(data["elimination_order"]),
            tuple(dict(t) for t in data["criterion_trace"]),
            tuple(data["kept"]),
        )

def criterion(weights: np.ndarray, hessian_diag: Optional[np.ndarray] = None) -> np.ndarray:
    """Second-order cost increase from zeroing each weight: 0.5 * h_ii * w_i**2.

    With ``hessian_diag`` omitted every h_ii is 1, which is the standardized
    least-squares case where the ranking reduces to w_i**2.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if hessian_diag is None:
        hessian_diag = np.ones_like(weights)
    hessian_diag = np.asarray(hessian_diag, dtype=np.float64)

    if weights.shape != hessian_diag.shape:
        raise FeatSelError(
            f"length mismatch: {weights.shape[0]} weights, {hessian_diag.shape[0]} hessian terms"
        )
    if np.any(hessian_diag < 0):
        raise FeatSelError("hessian_diag entries must be >= 0")
    return 0.5 * hessian_diag * weights**2

def _hessian_diag(features: np.ndarray, mode: str) -> Optional[np.ndarray]:
    if mode == "unit":
        return None
    if mode == "diag":
        # J = sum |w.x - y|^2  =>  d2J/dw_i^2 = 2 * sum x_i^2
        return 2.0 * np.sum(features**2, axis=0)
    raise FeatSelError(f"Unknown hessian mode {mode!r}")

def rfe(
    dataset: LabeledDataset,
    n_keep: int,
    step: int = 1,
    trainer: Trainer = fit_linear_discriminant,
    hessian: str = "unit",
    verbose: bool = False,
) -> Tuple[FeatureRanking, LabeledDataset]:
    """Recursive feature elimination on a standardized dataset.

    Each round refits the linear model on the surviving columns and drops the
    ``step`` lowest-criterion features (fewer on the last round so exactly
    ``n_keep`` remain). Equal criteria drop the later column first.
    """
    n_features = dataset.n_features
    if not 1 <= n_keep <= n_features:
        raise FeatSelError(f"n_keep must be in [1, {n_features}], got {n_keep}")
    if step < 1:
        raise FeatSelError(f"step must be >= 1, got {step}")

    names = dataset.feature_names
    active = list(range(n_features))
    eliminated: List[str] = []
    trace: List[Dict[str, float]] = []

    n_rounds = int(np.ceil((n_features - n_keep) / step))
    for it in tqdm(range(n_rounds), desc="[RFE]", disable=not verbose):
        subset = dataset.select_columns([names[j] for j in active])
        try:
            model = trainer(subset)
        except ChurnLabError as exc:
            raise FeatSelError(f"trainer failed at iteration {it}: {exc}") from exc

        scores = criterion(model.w, _hessian_diag(subset.features, hessian))
        trace.append({names[j]: float(s) for j, s in zip(active, scores)})

        n_remove = min(step, len(active) - n_keep)
        order = sorted(range(len(active)), key=lambda i: (scores[i], -active[i]))
        drop = [active[i] for i in order[:n_remove]]
        eliminated.extend(names[j] for j in drop)
        active = [j for j in active if j not in drop]

    kept = tuple(names[j] for j in active)
    logger.info(f"[RFE] kept {len(kept)} of {n_features} features after {n_rounds} rounds")
    ranking = FeatureRanking(tuple(eliminated), tuple(trace), kept)
    return ranking, dataset.select_columns(kept)

def apply_ranking(dataset: LabeledDataset, ranking: FeatureRanking) -> LabeledDataset:
    return dataset.select_columns(ranking.kept)

class FeatSelError(ChurnLabError):
    pass
