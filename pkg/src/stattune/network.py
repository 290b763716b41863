"""Single-hidden-layer feedforward network: forward pass, SGD training,
hidden-activation extraction, analytic input gradients, and file round-trip.

The model is y = g(b0 + B @ psi(a0 + A @ x)) with psi the hidden activation
and g the output activation (softmax for classification). Everything is
float64 numpy and deterministic given the training seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, _frozen


class ShapeError(ValueError):
    """Raised when array dimensions do not match the model architecture."""


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed or validated."""


HIDDEN_ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
OUTPUT_ACTIVATIONS = ("softmax", "identity")


def _hidden_forward(pre: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return np.maximum(pre, 0.0)
    if tag == "tanh":
        return np.tanh(pre)
    if tag == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    if tag == "identity":
        return pre
    raise ValueError(f"unknown hidden activation {tag!r}")


def _hidden_derivative(pre: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return (pre > 0.0).astype(np.float64)
    if tag == "tanh":
        return 1.0 - np.tanh(pre) ** 2
    if tag == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-pre))
        return s * (1.0 - s)
    if tag == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown hidden activation {tag!r}")


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for overflow safety."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class NetworkModel:
    """Weights, biases, and activation tags of a one-hidden-layer network.

    Immutable; training produces a new instance.
    """

    hidden_weights: np.ndarray  # (k, d)
    hidden_biases: np.ndarray  # (k,)
    output_weights: np.ndarray  # (p, k)
    output_biases: np.ndarray  # (p,)
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    def __post_init__(self):
        A = np.asarray(self.hidden_weights, dtype=np.float64)
        a0 = np.asarray(self.hidden_biases, dtype=np.float64)
        B = np.asarray(self.output_weights, dtype=np.float64)
        b0 = np.asarray(self.output_biases, dtype=np.float64)
        if A.ndim != 2:
            raise ShapeError(f"hidden_weights must be 2-D, got shape {A.shape}")
        k, d = A.shape
        if a0.shape != (k,):
            raise ShapeError(f"hidden_biases must have shape ({k},), got {a0.shape}")
        if B.ndim != 2 or B.shape[1] != k:
            raise ShapeError(f"output_weights must have shape (p, {k}), got {B.shape}")
        if b0.shape != (B.shape[0],):
            raise ShapeError(f"output_biases must have shape ({B.shape[0]},), got {b0.shape}")
        for name, arr in (("hidden_weights", A), ("hidden_biases", a0),
                          ("output_weights", B), ("output_biases", b0)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "hidden_weights", _frozen(A))
        object.__setattr__(self, "hidden_biases", _frozen(a0))
        object.__setattr__(self, "output_weights", _frozen(B))
        object.__setattr__(self, "output_biases", _frozen(b0))

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.output_weights.shape[0]

    def parameter_count(self) -> int:
        """(d*k + k) + (k*p + p) trainable parameters."""
        d, k, p = self.input_dim, self.hidden_dim, self.output_dim
        return (d * k + k) + (k * p + p)


@dataclass(frozen=True)
class ActivationMatrix:
    """n x k matrix of hidden-neuron outputs with the true class labels."""

    values: np.ndarray
    labels: np.ndarray
    neuron_names: tuple[str, ...]

    def __post_init__(self):
        H = np.asarray(self.values, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if H.ndim != 2:
            raise ShapeError(f"activation matrix must be 2-D, got shape {H.shape}")
        if y.shape != (H.shape[0],):
            raise ShapeError("labels length must match activation rows")
        if len(self.neuron_names) != H.shape[1]:
            raise ShapeError("neuron_names length must match activation columns")
        object.__setattr__(self, "values", _frozen(H))
        object.__setattr__(self, "labels", _frozen(y))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for seeded mini-batch SGD."""

    epochs: int = 300
    learning_rate: float = 0.05
    batch_size: int = 16
    seed: int = 0
    l2_penalty: float = 0.0
    init_scale: float | None = None  # None = per-layer sqrt(6 / (fan_in + fan_out))

    def __post_init__(self):
        # epochs == 0 is legal only for continue_train (no-op retraining)
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_penalty < 0.0:
            raise ValueError(f"l2_penalty must be >= 0, got {self.l2_penalty}")


def forward(model: NetworkModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass for one sample; returns (hidden k-vector, output p-vector)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"input must have shape ({model.input_dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    hidden = _hidden_forward(model.hidden_biases + model.hidden_weights @ x, model.hidden_activation)
    z = model.output_biases + model.output_weights @ hidden
    output = softmax(z) if model.output_activation == "softmax" else z
    return hidden, output


def forward_batch(model: NetworkModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward pass; returns (hidden n x k, output n x p)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeError(f"inputs must have shape (n, {model.input_dim}), got {X.shape}")
    H = _hidden_forward(X @ model.hidden_weights.T + model.hidden_biases, model.hidden_activation)
    Z = H @ model.output_weights.T + model.output_biases
    OUT = softmax(Z) if model.output_activation == "softmax" else Z
    return H, OUT


def predict(model: NetworkModel, X: np.ndarray) -> np.ndarray:
    """Argmax class predictions, ties broken toward the lowest index."""
    _, out = forward_batch(model, X)
    return np.argmax(out, axis=1)


def accuracy(model: NetworkModel, data: Dataset) -> float:
    """Fraction of correct argmax predictions on the dataset."""
    return float(np.mean(predict(model, data.X) == data.y))


def extract_hidden(model: NetworkModel, data: Dataset) -> ActivationMatrix:
    """Hidden-layer outputs for every row of the dataset, labels carried over."""
    H, _ = forward_batch(model, data.X)
    names = tuple(f"neuron_{i}" for i in range(model.hidden_dim))
    return ActivationMatrix(H, data.y, names)


def input_gradient(model: NetworkModel, x: np.ndarray, out_index: int) -> np.ndarray:
    """Analytic gradient of output[out_index] with respect to the input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"input must have shape ({model.input_dim},), got {x.shape}")
    if not 0 <= out_index < model.output_dim:
        raise ShapeError(f"out_index must be in [0, {model.output_dim}), got {out_index}")
    pre = model.hidden_biases + model.hidden_weights @ x
    hidden = _hidden_forward(pre, model.hidden_activation)
    z = model.output_biases + model.output_weights @ hidden
    if model.output_activation == "softmax":
        s = softmax(z)
        v = -s[out_index] * s
        v[out_index] += s[out_index]
    else:
        v = np.zeros(model.output_dim)
        v[out_index] = 1.0
    w = (model.output_weights.T @ v) * _hidden_derivative(pre, model.hidden_activation)
    return model.hidden_weights.T @ w


def output_probability_gradients(model: NetworkModel, x: np.ndarray) -> np.ndarray:
    """Jacobian (p x d) of all outputs with respect to the input."""
    return np.stack([input_gradient(model, x, c) for c in range(model.output_dim)])


def cross_entropy(model: NetworkModel, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0) -> float:
    """Mean softmax cross-entropy plus the L2 weight penalty."""
    loss, _ = training_loss_and_gradients(model, X, y, l2_penalty)
    return loss


def training_loss_and_gradients(
    model: NetworkModel, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and backprop gradients of the softmax cross-entropy objective.

    Returns (loss, {"hidden_weights": dA, "hidden_biases": da0,
    "output_weights": dB, "output_biases": db0}).
    """
    if model.output_activation != "softmax":
        raise ValueError("training objective is defined for softmax output only")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    pre = X @ model.hidden_weights.T + model.hidden_biases
    H = _hidden_forward(pre, model.hidden_activation)
    Z = H @ model.output_weights.T + model.output_biases
    # log-sum-exp form keeps the loss finite for extreme logits
    zmax = Z.max(axis=1)
    lse = zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))
    loss = float(np.mean(lse - Z[np.arange(n), y]))
    loss += 0.5 * l2_penalty * (float(np.sum(model.hidden_weights**2)) + float(np.sum(model.output_weights**2)))

    S = softmax(Z)
    dZ = S.copy()
    dZ[np.arange(n), y] -= 1.0
    dZ /= n
    dB = dZ.T @ H + l2_penalty * model.output_weights
    db0 = dZ.sum(axis=0)
    dH = dZ @ model.output_weights
    dPre = dH * _hidden_derivative(pre, model.hidden_activation)
    dA = dPre.T @ X + l2_penalty * model.hidden_weights
    da0 = dPre.sum(axis=0)
    return loss, {
        "hidden_weights": dA,
        "hidden_biases": da0,
        "output_weights": dB,
        "output_biases": db0,
    }


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, scale: float | None) -> np.ndarray:
    s = scale if scale is not None else np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_out, fan_in))


def initialize(
    input_dim: int,
    hidden_dim: int,
    output_dim: int,
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "softmax",
    init_scale: float | None = None,
) -> NetworkModel:
    """Seeded uniform initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    A = _glorot_uniform(rng, hidden_dim, input_dim, init_scale)
    B = _glorot_uniform(rng, output_dim, hidden_dim, init_scale)
    return NetworkModel(
        hidden_weights=A,
        hidden_biases=np.zeros(hidden_dim),
        output_weights=B,
        output_biases=np.zeros(output_dim),
        hidden_activation=hidden_activation,
        output_activation=output_activation,
    )


def _sgd(model: NetworkModel, data: Dataset, cfg: TrainConfig) -> NetworkModel:
    A = model.hidden_weights.copy()
    a0 = model.hidden_biases.copy()
    B = model.output_weights.copy()
    b0 = model.output_biases.copy()
    rng = np.random.default_rng(cfg.seed)
    current = model
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = training_loss_and_gradients(current, data.X[idx], data.y[idx], cfg.l2_penalty)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}")
            A -= cfg.learning_rate * grads["hidden_weights"]
            a0 -= cfg.learning_rate * grads["hidden_biases"]
            B -= cfg.learning_rate * grads["output_weights"]
            b0 -= cfg.learning_rate * grads["output_biases"]
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
                raise DivergenceError(f"weights became non-finite at epoch {epoch}")
            current = NetworkModel(A.copy(), a0.copy(), B.copy(), b0.copy(),
                                   model.hidden_activation, model.output_activation)
    return current


def train(
    data: Dataset,
    hidden_dim: int,
    cfg: TrainConfig,
    hidden_activation: str = "relu",
    output_activation: str = "softmax",
) -> NetworkModel:
    """Train a fresh seeded network with mini-batch SGD on cross-entropy."""
    if hidden_dim < 1:
        raise ValueError(f"hidden_dim must be >= 1, got {hidden_dim}")
    if cfg.epochs < 1:
        raise ValueError("fresh training requires epochs >= 1")
    model = initialize(data.d, hidden_dim, data.p, cfg.seed,
                       hidden_activation, output_activation, cfg.init_scale)
    return _sgd(model, data, cfg)


def continue_train(model: NetworkModel, data: Dataset, cfg: TrainConfig) -> NetworkModel:
    """Further SGD epochs starting from the given model's weights."""
    if data.d != model.input_dim or data.p != model.output_dim:
        raise ShapeError(
            f"dataset dims (d={data.d}, p={data.p}) do not match model "
            f"(d={model.input_dim}, p={model.output_dim})"
        )
    if cfg.epochs == 0:
        return model
    return _sgd(model, data, cfg)


MODEL_FORMAT = "stattune-model"
MODEL_VERSION = 1


def save_model(model: NetworkModel, path) -> None:
    """Write the model as a JSON document with row-major weight arrays."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d": model.input_dim,
        "k": model.hidden_dim,
        "p": model.output_dim,
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "A": model.hidden_weights.tolist(),
        "a0": model.hidden_biases.tolist(),
        "B": model.output_weights.tolist(),
        "b0": model.output_biases.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_model(path) -> NetworkModel:
    """Read a model written by :func:`save_model`, validating declared dims."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} document")
    missing = [key for key in ("d", "k", "p", "hidden_activation", "output_activation",
                               "A", "a0", "B", "b0") if key not in doc]
    if missing:
        raise ModelFormatError(f"{path}: missing fields {missing}")
    try:
        A = np.asarray(doc["A"], dtype=np.float64)
        a0 = np.asarray(doc["a0"], dtype=np.float64)
        B = np.asarray(doc["B"], dtype=np.float64)
        b0 = np.asarray(doc["b0"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: weight arrays are malformed: {exc}") from exc
    d, k, p = doc["d"], doc["k"], doc["p"]
    if A.shape != (k, d) or a0.shape != (k,) or B.shape != (p, k) or b0.shape != (p,):
        raise ModelFormatError(
            f"{path}: declared dims (d={d}, k={k}, p={p}) do not match array shapes "
            f"A{A.shape}, a0{a0.shape}, B{B.shape}, b0{b0.shape}"
        )
    try:
        return NetworkModel(A, a0, B, b0, doc["hidden_activation"], doc["output_activation"])
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
