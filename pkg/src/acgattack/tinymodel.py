"""Small dense ReLU classifier written directly in numpy.

Provides logits and exact input gradients so the attacks can run without a
deep learning framework. Also ships the seeded toy datasets and a JSON model
format.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import make_rng

ACTIVATIONS = ("relu", "identity")


class ModelFormatError(ValueError):
    """Raised when a model file is malformed or inconsistent."""


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        W = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).ravel()
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"bias of length {b.shape} does not match weights {W.shape}")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)


class MlpClassifier:
    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ValueError("a classifier needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].weights.shape[1] != layers[i - 1].weights.shape[0]:
                raise ValueError(
                    f"layer {i} expects {layers[i].weights.shape[1]} inputs, "
                    f"previous layer gives {layers[i - 1].weights.shape[0]}"
                )
        self.layers = list(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def arch(self) -> list[int]:
        return [self.input_dim] + [layer.weights.shape[0] for layer in self.layers]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},), got {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check(x)
        for layer in self.layers:
            h = layer.weights @ h + layer.bias
            if layer.activation == "relu":
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x) -> int:
        return int(np.argmax(self.forward(x)))

    def value_and_input_gradient(self, x, loss, c: int) -> tuple[float, np.ndarray]:
        """Loss value and its gradient w.r.t. the input.

        ``loss(logits, c)`` returns ``(value, d value / d logits)``. ReLU'(0) = 0.
        """
        h = self._check(x)
        masks = []
        for layer in self.layers:
            pre = layer.weights @ h + layer.bias
            if layer.activation == "relu":
                mask = pre > 0.0
                h = np.where(mask, pre, 0.0)
            else:
                mask = None
                h = pre
            masks.append(mask)
        value, delta = loss(h, c)
        delta = np.asarray(delta, dtype=np.float64)
        for layer, mask in zip(reversed(self.layers), reversed(masks)):
            if mask is not None:
                delta = np.where(mask, delta, 0.0)
            delta = layer.weights.T @ delta
        return float(value), delta

    def input_gradient(self, x, loss, c: int) -> np.ndarray:
        return self.value_and_input_gradient(x, loss, c)[1]

    def predict_batch(self, X) -> np.ndarray:
        return np.argmax(_forward_batch(self.layers, np.asarray(X, dtype=np.float64))[-1], axis=1)


def forward(model: MlpClassifier, x) -> np.ndarray:
    return model.forward(x)


def input_gradient(model: MlpClassifier, x, loss, c: int) -> np.ndarray:
    return model.input_gradient(x, loss, c)


# --- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray  # (n, m), inside [0, 1]^m
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        X = np.array(self.points, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("points and labels disagree in length")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("points must lie in the unit box")
        if y.size and y.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.points[idx], self.labels[idx])


def _to_unit_box(X: np.ndarray, margin: float = 0.1) -> np.ndarray:
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip(margin + (1.0 - 2 * margin) * (X - lo) / span, 0.0, 1.0)


def make_moons(n: int = 400, noise: float = 0.1, seed: int = 0) -> LabeledDataset:
    from sklearn.datasets import make_moons as _moons

    X, y = _moons(n_samples=n, noise=noise, random_state=seed)
    return LabeledDataset(_to_unit_box(X), y)


def make_blobs(n: int = 400, centers: int = 2, std: float = 0.6, seed: int = 0) -> LabeledDataset:
    from sklearn.datasets import make_blobs as _blobs

    X, y = _blobs(n_samples=n, centers=centers, n_features=2, cluster_std=std, random_state=seed)
    return LabeledDataset(_to_unit_box(X), y)


DATASETS = {"moons": make_moons, "blobs": make_blobs}


# --- training ---------------------------------------------------------------

def init_model(arch: list[int], seed: int) -> MlpClassifier:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, ReLU between layers."""
    if len(arch) < 2:
        raise ValueError("arch needs an input and an output size")
    rng = make_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(arch[:-1], arch[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        act = "identity" if i == len(arch) - 2 else "relu"
        layers.append(DenseLayer(W, b, act))
    return MlpClassifier(layers)


def _forward_batch(layers, X):
    acts = [X]
    h = X
    for layer in layers:
        h = h @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def cross_entropy(model: MlpClassifier, data: LabeledDataset) -> float:
    logits = _forward_batch(model.layers, data.points)[-1]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(data)), data.labels].mean())


def accuracy(model: MlpClassifier, data: LabeledDataset) -> float:
    return float(np.mean(model.predict_batch(data.points) == data.labels))


def _sgd_step(weights, biases, activations, X, y, lr):
    acts = [X]
    h = X
    for W, b, act in zip(weights, biases, activations):
        h = h @ W.T + b
        if act == "relu":
            h = np.maximum(h, 0.0)
        acts.append(h)
    z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    delta = p
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    for i in reversed(range(len(weights))):
        if activations[i] == "relu":
            delta = delta * (acts[i + 1] > 0.0)
        gW = delta.T @ acts[i]
        gb = delta.sum(axis=0)
        delta = delta @ weights[i]
        weights[i] -= lr * gW
        biases[i] -= lr * gb


def train_toy(
    dataset: LabeledDataset,
    arch: list[int],
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int | None = 32,
    history: list | None = None,
) -> MlpClassifier:
    """Mini-batch gradient descent on softmax cross-entropy.

    ``batch_size=None`` trains full-batch. When ``history`` is given the
    training loss after each epoch is appended to it.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if arch[0] != dataset.points.shape[1]:
        raise ValueError(f"arch input size {arch[0]} != data dimension {dataset.points.shape[1]}")
    if dataset.num_classes > arch[-1]:
        raise ValueError(f"data has {dataset.num_classes} classes, arch outputs {arch[-1]}")
    model = init_model(arch, seed)
    if epochs == 0:
        return model
    weights = [layer.weights.copy() for layer in model.layers]
    biases = [layer.bias.copy() for layer in model.layers]
    activations = [layer.activation for layer in model.layers]
    rng = make_rng(seed + 1)
    n = len(dataset)
    bs = n if batch_size is None else min(batch_size, n)
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            _sgd_step(weights, biases, activations, dataset.points[idx], dataset.labels[idx], lr)
        if history is not None:
            cur = MlpClassifier([DenseLayer(W, b, a) for W, b, a in zip(weights, biases, activations)])
            history.append(cross_entropy(cur, dataset))
    return MlpClassifier([DenseLayer(W, b, a) for W, b, a in zip(weights, biases, activations)])


# --- persistence ------------------------------------------------------------

def model_to_dict(model: MlpClassifier) -> dict:
    return {
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [
            {
                "rows": int(layer.weights.shape[0]),
                "cols": int(layer.weights.shape[1]),
                "weights": [float(v) for v in layer.weights.ravel()],
                "bias": [float(v) for v in layer.bias],
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
    }


def save_model(model: MlpClassifier, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def _field(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ModelFormatError(f"{where}.{key}: expected integer, got {val!r}")
    if kind is list and not isinstance(val, list):
        raise ModelFormatError(f"{where}.{key}: expected a list")
    if kind is str and not isinstance(val, str):
        raise ModelFormatError(f"{where}.{key}: expected a string")
    return val


def _floats(values, where) -> np.ndarray:
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: non-numeric entry") from exc
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{where}: expected a flat list of finite floats")
    return arr


def model_from_dict(doc) -> MlpClassifier:
    input_dim = _field(doc, "input_dim", int, "model")
    num_classes = _field(doc, "num_classes", int, "model")
    raw_layers = _field(doc, "layers", list, "model")
    if not raw_layers:
        raise ModelFormatError("model.layers: must not be empty")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"layers[{i}]"
        rows = _field(raw, "rows", int, where)
        cols = _field(raw, "cols", int, where)
        w = _floats(_field(raw, "weights", list, where), f"{where}.weights")
        b = _floats(_field(raw, "bias", list, where), f"{where}.bias")
        act = _field(raw, "activation", str, where)
        if act not in ACTIVATIONS:
            raise ModelFormatError(f"{where}.activation: unknown activation {act!r}")
        if rows <= 0 or cols <= 0:
            raise ModelFormatError(f"{where}: rows and cols must be positive")
        if w.shape[0] != rows * cols:
            raise ModelFormatError(f"{where}.weights: expected {rows * cols} values, got {w.shape[0]}")
        if b.shape[0] != rows:
            raise ModelFormatError(f"{where}.bias: expected {rows} values, got {b.shape[0]}")
        if layers and cols != layers[-1].weights.shape[0]:
            raise ModelFormatError(f"{where}.cols: {cols} does not chain with previous rows {layers[-1].weights.shape[0]}")
        layers.append(DenseLayer(w.reshape(rows, cols), b, act))
    if layers[0].weights.shape[1] != input_dim:
        raise ModelFormatError(f"model.input_dim: declared {input_dim}, first layer has {layers[0].weights.shape[1]} cols")
    if layers[-1].weights.shape[0] != num_classes:
        raise ModelFormatError(f"model.num_classes: declared {num_classes}, last layer has {layers[-1].weights.shape[0]} rows")
    return MlpClassifier(layers)


def load_model(path) -> MlpClassifier:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return model_from_dict(doc)
