# -*- encoding: utf-8 -*-
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .dataset import LabeledDataset
from .logger import logger
from .nnet import DEEP_ANN_1, DEEP_ANN_2, AnnPreset, NeuralNetwork, NNetError, train
from .utils import ChurnLabError, derive_seed, load_json, save_json, sigmoid

RIDGE_EPS = 1e-8
NB_VAR_FLOOR = 1e-9


class Classifier(ABC):
    """Anything fitted that maps a feature matrix to P(churn) per row."""

    kind = "classifier"

    @abstractmethod
    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        pass

    def predict(self, matrix: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(matrix) > threshold).astype(np.int64)

    @abstractmethod
    def to_json(self) -> Dict:
        pass


Classifier.register(NeuralNetwork)


def least_squares(design: np.ndarray, target: np.ndarray, ridge: float = RIDGE_EPS) -> np.ndarray:
    """Solve (A^T A + ridge*I) theta = A^T y."""
    gram = design.T @ design + ridge * np.eye(design.shape[1])
    return np.linalg.solve(gram, design.T @ target)


class LinearModel(Classifier):
    """D(x) = w.x + b, read through an identity (clipped) or logistic link."""

    kind = "linear"

    def __init__(self, w: np.ndarray, b: float, link: str = "identity") -> None:
        if link not in ("identity", "logistic"):
            raise ModelError(f"Unknown link {link!r}")
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        self.link = link

    def decision(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.w.shape[0]:
            raise ModelError(f"expected {self.w.shape[0]} features, got shape {matrix.shape}")
        return matrix @ self.w + self.b

    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        score = self.decision(matrix)
        if self.link == "logistic":
            return sigmoid(score)
        return np.clip(score, 0.0, 1.0)

    def to_json(self) -> Dict:
        return {"type": self.kind, "link": self.link, "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_json(cls, data: Dict) -> "LinearModel":
        return cls(data["w"], data["b"], data["link"])


def fit_linear_discriminant(dataset: LabeledDataset, ridge: float = RIDGE_EPS) -> LinearModel:
    """Least-squares fit of D(x) = w.x + b to the 0/1 labels."""
    if len(dataset) < 2:
        raise ModelError(f"Need at least 2 rows, got {len(dataset)}")

    design = np.hstack([dataset.features, np.ones((len(dataset), 1))])
    theta = least_squares(design, dataset.labels.astype(np.float64), ridge)
    return LinearModel(theta[:-1], theta[-1], "identity")


def fit_logistic(
    dataset: LabeledDataset,
    lr: float = 0.5,
    epochs: int = 2000,
    tol: float = 1e-7,
) -> LinearModel:
    """Full-batch gradient descent on the mean BCE from a zero start.

    Stops early once every gradient component is below ``tol``.
    """
    x = dataset.features
    y = dataset.labels.astype(np.float64)
    n = len(dataset)
    if n == 0:
        raise ModelError("Cannot fit logistic regression on an empty dataset.")

    w = np.zeros(x.shape[1])
    b = 0.0
    for epoch in range(epochs):
        p = sigmoid(x @ w + b)
        err = p - y
        grad_w = x.T @ err / n
        grad_b = float(err.mean())
        if not (np.all(np.isfinite(grad_w)) and np.isfinite(grad_b)):
            raise ModelError(f"logistic regression diverged at epoch {epoch}")

        if max(np.max(np.abs(grad_w), initial=0.0), abs(grad_b)) < tol:
            break
        w = w - lr * grad_w
        b = b - lr * grad_b
    return LinearModel(w, b, "logistic")


class GaussianNaiveBayes(Classifier):
    kind = "gaussian_nb"

    def __init__(self, means: np.ndarray, variances: np.ndarray, priors: np.ndarray) -> None:
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.asarray(variances, dtype=np.float64)
        self.priors = np.asarray(priors, dtype=np.float64)

    def joint_log_likelihood(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        out = np.empty((matrix.shape[0], 2))
        for c in (0, 1):
            var = self.variances[c]
            ll = -0.5 * np.sum(np.log(2 * np.pi * var) + (matrix - self.means[c]) ** 2 / var, axis=1)
            out[:, c] = np.log(self.priors[c]) + ll
        return out

    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        jll = self.joint_log_likelihood(matrix)
        return sigmoid(jll[:, 1] - jll[:, 0])

    def to_json(self) -> Dict:
        return {
            "type": self.kind,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_json(cls, data: Dict) -> "GaussianNaiveBayes":
        return cls(data["means"], data["variances"], data["priors"])


def fit_gaussian_nb(dataset: LabeledDataset) -> GaussianNaiveBayes:
    counts = dataset.class_counts()
    if min(counts.values()) == 0:
        raise ModelError(f"Naive Bayes needs both classes, got counts {counts}")

    means, variances = [], []
    for c in (0, 1):
        rows = dataset.features[dataset.labels == c]
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), NB_VAR_FLOOR))
    priors = np.array([counts[0], counts[1]], dtype=np.float64) / len(dataset)
    return GaussianNaiveBayes(np.array(means), np.array(variances), priors)


class HardVote(Classifier):
    """Majority of member votes at 0.5; ties resolve to churn.

    ``predict_proba`` is the smoothed vote share (votes + 1) / (n + 1), which is
    above 0.5 exactly when class 1 has at least half the votes.
    """

    kind = "hard_vote"

    def __init__(self, members: Sequence[Classifier]) -> None:
        if not members:
            raise ModelError("empty ensemble")
        self.members = list(members)

    def votes(self, matrix: np.ndarray) -> np.ndarray:
        return np.sum([m.predict(matrix, 0.5) for m in self.members], axis=0)

    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return (self.votes(matrix) + 1.0) / (len(self.members) + 1.0)

    def to_json(self) -> Dict:
        return {"type": self.kind, "members": [m.to_json() for m in self.members]}

    @classmethod
    def from_json(cls, data: Dict) -> "HardVote":
        return cls([model_from_json(m) for m in data["members"]])


class SoftVote(Classifier):
    kind = "soft_vote"

    def __init__(
        self, members: Sequence[Classifier], weights: Optional[Sequence[float]] = None
    ) -> None:
        if not members:
            raise ModelError("empty ensemble")

        weights = np.ones(len(members)) if weights is None else np.asarray(weights, float)
        if weights.shape != (len(members),):
            raise ModelError(f"{len(members)} members but {weights.shape[0]} weights")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ModelError("weights must be >= 0 and not all zero")

        self.members = list(members)
        self.weights = weights

    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        probas = np.array([m.predict_proba(matrix) for m in self.members])
        return self.weights @ probas / self.weights.sum()

    def to_json(self) -> Dict:
        return {
            "type": self.kind,
            "weights": self.weights.tolist(),
            "members": [m.to_json() for m in self.members],
        }

    @classmethod
    def from_json(cls, data: Dict) -> "SoftVote":
        return cls([model_from_json(m) for m in data["members"]], data["weights"])


def hard_vote(classifiers: Sequence[Classifier]) -> HardVote:
    return HardVote(classifiers)


def soft_vote(
    classifiers: Sequence[Classifier], weights: Optional[Sequence[float]] = None
) -> SoftVote:
    return SoftVote(classifiers, weights)


def ensemble_ann(
    dataset: LabeledDataset,
    preset_1: AnnPreset = DEEP_ANN_1,
    preset_2: AnnPreset = DEEP_ANN_2,
    seed: int = 0,
    verbose: bool = False,
) -> SoftVote:
    """Train both networks and average their probabilities with equal weight."""
    members = []
    for i, preset in enumerate((preset_1, preset_2), start=1):
        config = preset.train_config(derive_seed(seed, i))
        try:
            members.append(train(dataset, preset.layers(), config, verbose=verbose))
        except NNetError as exc:
            raise ModelError(f"Deep ANN-{i}: {exc}") from exc
        logger.info(f"[Ensemble] Deep ANN-{i} done (lr={preset.learning_rate})")
    return SoftVote(members, [1.0, 1.0])


MODEL_TYPES = {
    LinearModel.kind: LinearModel,
    GaussianNaiveBayes.kind: GaussianNaiveBayes,
    HardVote.kind: HardVote,
    SoftVote.kind: SoftVote,
    NeuralNetwork.kind: NeuralNetwork,
}


def model_from_json(data: Dict) -> Classifier:
    kind = data.get("type")
    if kind not in MODEL_TYPES:
        raise ModelError(f"Unknown model type {kind!r}")
    return MODEL_TYPES[kind].from_json(data)


def save_model(
    model: Classifier, save_path: Union[str, Path], metadata: Optional[Dict] = None
) -> None:
    save_json(save_path, {"metadata": metadata or {}, "model": model.to_json()})
    logger.info(f"[Model] {model.kind} saved to {save_path}")


def load_model(model_path: Union[str, Path]) -> Classifier:
    model_path = Path(model_path)
    if not model_path.exists():
        raise ModelError(f"{model_path} does not exist.")
    return model_from_json(load_json(model_path)["model"])


def load_metadata(model_path: Union[str, Path]) -> Dict:
    return load_json(model_path).get("metadata", {})


def list_models(model_dir: Union[str, Path]) -> List[Path]:
    return sorted(Path(model_dir).glob("*.json"))


class ModelError(ChurnLabError):
    pass
