# -*- encoding: utf-8 -*-
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .dataset import LabeledDataset
from .logger import logger
from .utils import ChurnLabError, mkdir, sigmoid

ACTIVATIONS = ("tanh", "relu", "sigmoid")
PROBA_CLIP = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.width < 1:
            raise NNetError(f"Layer width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise NNetError(f"Unknown activation {self.activation!r}")
        if not 0 <= self.dropout_rate < 1:
            raise NNetError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


OUTPUT_LAYER = LayerSpec(1, "sigmoid", 0.0)


@dataclass(frozen=True)
class NetworkParams:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def flat(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_flat(cls, arrays: Sequence[np.ndarray]) -> "NetworkParams":
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 512
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise NNetError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise NNetError("epochs and batch_size must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise NNetError("Adam betas must lie in (0, 1)")


@dataclass(frozen=True)
class AdamState:
    m: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    t: int = 0

    @classmethod
    def zeros(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(
            tuple(np.zeros_like(p, dtype=np.float64) for p in params),
            tuple(np.zeros_like(p, dtype=np.float64) for p in params),
            0,
        )


@dataclass
class ForwardPass:
    inputs: np.ndarray
    pre_activations: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)

    @property
    def probabilities(self) -> np.ndarray:
        return self.activations[-1][:, 0]


def build_layers(
    hidden_widths: Sequence[int],
    activations: Sequence[str],
    dropout: Union[float, Sequence[float]] = 0.0,
) -> List[LayerSpec]:
    """Hidden layers followed by the single sigmoid output unit."""
    if len(hidden_widths) != len(activations):
        raise NNetError("hidden_widths and activations must have the same length")

    if isinstance(dropout, (int, float)):
        dropout = [float(dropout)] * len(hidden_widths)
    if len(dropout) != len(hidden_widths):
        raise NNetError("one dropout rate per hidden layer expected")

    layers = [LayerSpec(w, a, d) for w, a, d in zip(hidden_widths, activations, dropout)]
    layers.append(OUTPUT_LAYER)
    return layers


def _check_layers(layers: Sequence[LayerSpec]) -> None:
    if not layers:
        raise NNetError("A network needs at least one layer.")

    out = layers[-1]
    if out.width != 1 or out.activation != "sigmoid" or out.dropout_rate != 0:
        raise NNetError(f"Output layer must be a width-1 sigmoid without dropout, got {out}")


def init(input_dim: int, layers: Sequence[LayerSpec], seed: int = 0) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    _check_layers(layers)
    if input_dim < 1:
        raise NNetError(f"input_dim must be >= 1, got {input_dim}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = input_dim
    for spec in layers:
        limit = np.sqrt(6.0 / (fan_in + spec.width))
        weights.append(rng.uniform(-limit, limit, size=(spec.width, fan_in)))
        biases.append(np.zeros(spec.width))
        fan_in = spec.width
    return NetworkParams(tuple(weights), tuple(biases))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return sigmoid(z)


def _activation_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - h**2
    if name == "relu":
        return (z > 0).astype(np.float64)
    return h * (1.0 - h)


def forward(
    params: NetworkParams,
    layers: Sequence[LayerSpec],
    batch: np.ndarray,
    mode: str = "infer",
    mask_seed: Optional[Union[int, Sequence[int]]] = None,
) -> ForwardPass:
    """Run the network; train mode applies inverted dropout to hidden outputs."""
    if mode not in ("train", "infer"):
        raise NNetError(f"mode must be 'train' or 'infer', got {mode!r}")

    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise NNetError(
            f"dimension mismatch: batch {batch.shape}, network input_dim {params.input_dim}"
        )

    rng = np.random.default_rng(mask_seed) if mode == "train" else None
    fp = ForwardPass(inputs=batch)
    a = batch
    for w, b, spec in zip(params.weights, params.biases, layers):
        z = a @ w.T + b
        h = _activate(spec.activation, z)
        mask = None
        if rng is not None and spec.dropout_rate > 0:
            keep = 1.0 - spec.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            a = h * mask
        else:
            a = h

        fp.pre_activations.append(z)
        fp.outputs.append(h)
        fp.masks.append(mask)
        fp.activations.append(a)
    return fp


def bce_loss(probas: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(np.asarray(probas, dtype=np.float64), PROBA_CLIP, 1 - PROBA_CLIP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def backward(
    params: NetworkParams,
    layers: Sequence[LayerSpec],
    labels: np.ndarray,
    fp: ForwardPass,
) -> NetworkParams:
    """Gradients of the mean binary cross-entropy, shaped like ``params``."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    n = y.shape[0]
    if fp.activations[-1].shape[0] != n:
        raise NNetError("labels do not match the forward pass batch")

    n_layers = len(params.weights)
    grad_w: List[np.ndarray] = [None] * n_layers
    grad_b: List[np.ndarray] = [None] * n_layers

    # sigmoid output + BCE
    delta = (fp.activations[-1] - y) / n
    for i in range(n_layers - 1, -1, -1):
        a_prev = fp.inputs if i == 0 else fp.activations[i - 1]
        grad_w[i] = delta.T @ a_prev
        grad_b[i] = delta.sum(axis=0)
        if i == 0:
            break

        da = delta @ params.weights[i]
        if fp.masks[i - 1] is not None:
            da = da * fp.masks[i - 1]
        spec = layers[i - 1]
        delta = da * _activation_grad(spec.activation, fp.pre_activations[i - 1], fp.outputs[i - 1])
    return NetworkParams(tuple(grad_w), tuple(grad_b))


def adam_update(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam step; returns new arrays and state, inputs untouched."""
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(tuple(new_m), tuple(new_v), t)


class NeuralNetwork:
    """A trained feed-forward network; ``predict_proba`` runs in infer mode."""

    kind = "neural_network"

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        params: NetworkParams,
        loss_trace: Sequence[float] = (),
        config: Optional[TrainConfig] = None,
    ) -> None:
        self.layers = tuple(layers)
        self.params = params
        self.loss_trace = tuple(loss_trace)
        self.config = config

    def predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return forward(self.params, self.layers, matrix, mode="infer").probabilities

    def predict(self, matrix: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(matrix) > threshold).astype(np.int64)

    def to_json(self) -> Dict:
        return {
            "type": self.kind,
            "layers": [asdict(s) for s in self.layers],
            "weights": [w.tolist() for w in self.params.weights],
            "biases": [b.tolist() for b in self.params.biases],
            "train_config": asdict(self.config) if self.config else None,
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_json(cls, data: Dict) -> "NeuralNetwork":
        params = NetworkParams(
            tuple(np.asarray(w, dtype=np.float64) for w in data["weights"]),
            tuple(np.asarray(b, dtype=np.float64) for b in data["biases"]),
        )
        config = TrainConfig(**data["train_config"]) if data.get("train_config") else None
        layers = [LayerSpec(**s) for s in data["layers"]]
        return cls(layers, params, data.get("loss_trace", ()), config)

    def save_loss_trace(self, save_path: Union[str, Path]) -> None:
        save_path = Path(save_path)
        mkdir(save_path.parent)
        frame = pd.DataFrame(
            {"epoch": range(1, len(self.loss_trace) + 1), "loss": self.loss_trace}
        )
        frame.to_csv(save_path, index=False, float_format="%.17g")


def train(
    dataset: LabeledDataset,
    layers: Sequence[LayerSpec],
    config: TrainConfig,
    verbose: bool = False,
) -> NeuralNetwork:
    """Mini-batch Adam on BCE. Shuffles and dropout masks derive from ``config.seed``."""
    x = dataset.features
    y = dataset.labels.astype(np.float64)
    n = x.shape[0]
    if n == 0:
        raise NNetError("Cannot train on an empty dataset.")

    params = init(x.shape[1], layers, config.seed)
    state = AdamState.zeros(params.flat())
    shuffler = np.random.default_rng([config.seed, 1])

    loss_trace = []
    for epoch in tqdm(range(config.epochs), desc="[ANN] epochs", disable=not verbose):
        perm = shuffler.permutation(n)
        for batch_i, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            fp = forward(params, layers, x[idx], "train", [config.seed, 2, epoch, batch_i])
            loss = bce_loss(fp.probabilities, y[idx])
            if not np.isfinite(loss):
                raise NNetError(f"diverged at epoch {epoch}, batch {batch_i}")

            grads = backward(params, layers, y[idx], fp)
            flat, state = adam_update(params.flat(), grads.flat(), state, config)
            params = NetworkParams.from_flat(flat)

        full = forward(params, layers, x, "infer").probabilities
        loss_trace.append(bce_loss(full, y))
        if not np.isfinite(loss_trace[-1]):
            raise NNetError(f"diverged at epoch {epoch}, batch {batch_i}")

    logger.info(
        f"[ANN] trained {len(layers)} layers for {config.epochs} epochs, "
        f"final loss {loss_trace[-1]:.6f}"
    )
    return NeuralNetwork(layers, params, loss_trace, config)


@dataclass(frozen=True)
class AnnPreset:
    hidden_widths: Tuple[int, ...] = (64, 32, 16, 8)
    activations: Tuple[str, ...] = ("tanh", "relu", "relu", "relu")
    dropout: float = 0.2
    learning_rate: float = 0.000474718
    epochs: int = 100
    batch_size: int = 512
    seed: Optional[int] = None

    def layers(self) -> List[LayerSpec]:
        return build_layers(self.hidden_widths, self.activations, self.dropout)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed if self.seed is None else self.seed,
        )

    @classmethod
    def from_json(cls, data: Dict) -> "AnnPreset":
        data = dict(data)
        for key in ("hidden_widths", "activations"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


DEEP_ANN_1 = AnnPreset(dropout=0.2, learning_rate=0.000474718)
DEEP_ANN_2 = AnnPreset(dropout=0.4, learning_rate=0.000012)


class NNetError(ChurnLabError):
    pass
