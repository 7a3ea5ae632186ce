"""Small dense multinomial classifier: analytic backprop, cross-entropy, Adam.

Everything operates on flat float64 parameter vectors so that model exchange,
weighted averaging and oracle tests stay exact and trivially serializable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeding import derive_seed

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ACTIVATIONS = ("relu", "tanh")

TrainSet = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """Classifier architecture; empty hidden_dims gives multinomial logistic regression."""

    input_dim: int
    hidden_dims: tuple[int, ...] = (32,)
    num_classes: int = 3
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.num_classes)

    def num_params(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def param_layout(spec: ModelSpec) -> dict[str, tuple[int, int, int]]:
    """Flat layout: per layer a weight block W{i} then a bias block b{i}, as (offset, rows, cols)."""
    index: dict[str, tuple[int, int, int]] = {}
    offset = 0
    dims = spec.layer_dims
    for i in range(len(dims) - 1):
        rows, cols = dims[i], dims[i + 1]
        index[f"W{i}"] = (offset, rows, cols)
        offset += rows * cols
        index[f"b{i}"] = (offset, 1, cols)
        offset += cols
    return index


def layout_length(shape_index: dict[str, tuple[int, int, int]]) -> int:
    return sum(rows * cols for _, rows, cols in shape_index.values())


@dataclass(eq=False)
class ParameterVector:
    """Flat float64 weights plus the block layout; the unit every strategy exchanges."""

    values: np.ndarray
    shape_index: dict[str, tuple[int, int, int]]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = layout_length(self.shape_index)
        if self.values.ndim != 1 or self.values.size != expected:
            raise ValueError(
                f"values length {self.values.size} does not match layout length {expected}"
            )

    def block(self, name: str) -> np.ndarray:
        offset, rows, cols = self.shape_index[name]
        return self.values[offset : offset + rows * cols].reshape(rows, cols)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), dict(self.shape_index))

    def same_layout(self, other: "ParameterVector") -> bool:
        return self.shape_index == other.shape_index


@dataclass(eq=False)
class Gradients:
    """Gradient of the mean cross-entropy loss, flattened to the model's layout."""

    values: np.ndarray
    shape_index: dict[str, tuple[int, int, int]]


@dataclass(eq=False)
class AdamState:
    """First/second moment accumulators and hyperparameters; never leaves its site."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPS


def fresh_adam_state(
    num_params: int,
    lr: float = ADAM_LR,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    epsilon: float = ADAM_EPS,
) -> AdamState:
    return AdamState(
        m=np.zeros(num_params),
        v=np.zeros(num_params),
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def init_model(spec: ModelSpec, seed: int) -> ParameterVector:
    """Fan-scaled uniform weight init with zero biases; bit-stable for fixed (spec, seed)."""
    index = param_layout(spec)
    values = np.zeros(layout_length(index))
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        offset, rows, cols = index[f"W{i}"]
        values[offset : offset + rows * cols] = rng.uniform(-limit, limit, rows * cols)
    return ParameterVector(values, index)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def _check_features(spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"features must be (batch, {spec.input_dim}), got {X.shape}")
    return X


def _check_params(params: ParameterVector, spec: ModelSpec) -> None:
    if params.shape_index != param_layout(spec):
        raise ValueError("parameter layout does not match model spec")


def forward(params: ParameterVector, spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    """Logits for a batch; row i of the output depends only on row i of the input."""
    X = _check_features(spec, features)
    _check_params(params, spec)
    n_layers = len(spec.layer_dims) - 1
    h = X
    for i in range(n_layers):
        z = h @ params.block(f"W{i}") + params.block(f"b{i}")
        h = _activate(z, spec.activation) if i < n_layers - 1 else z
    return h


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and softmax probabilities, stabilized by max-subtraction."""
    L = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if L.ndim != 2:
        raise ValueError("logits must be a 2-d batch")
    if y.shape != (L.shape[0],):
        raise ValueError("labels must be one class id per batch row")
    if y.size and (y.min() < 0 or y.max() >= L.shape[1]):
        raise ValueError(f"labels must lie in [0, {L.shape[1]})")
    shifted = L - L.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = float(-log_probs[np.arange(len(y)), y].mean())
    return loss, np.exp(log_probs)


def _loss_and_grads(
    params: ParameterVector, spec: ModelSpec, X: np.ndarray, y: np.ndarray
) -> tuple[float, Gradients]:
    n_layers = len(spec.layer_dims) - 1
    acts = [X]
    pre: list[np.ndarray] = []
    h = X
    for i in range(n_layers):
        z = h @ params.block(f"W{i}") + params.block(f"b{i}")
        if i < n_layers - 1:
            h = _activate(z, spec.activation)
            pre.append(z)
            acts.append(h)
        else:
            h = z
    loss, probs = cross_entropy(h, y)

    batch = len(y)
    delta = probs
    delta[np.arange(batch), y] -= 1.0
    delta /= batch

    grads = ParameterVector(np.zeros_like(params.values), dict(params.shape_index))
    for i in reversed(range(n_layers)):
        grads.block(f"W{i}")[...] = acts[i].T @ delta
        grads.block(f"b{i}")[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.block(f"W{i}").T) * _activation_grad(
                pre[i - 1], acts[i], spec.activation
            )
    if not np.isfinite(grads.values).all():
        raise FloatingPointError("non-finite gradient")
    return loss, Gradients(grads.values, dict(params.shape_index))


def backward(
    params: ParameterVector, spec: ModelSpec, features: np.ndarray, labels: np.ndarray
) -> Gradients:
    """Analytic gradient of the mean cross-entropy with respect to every parameter."""
    X = _check_features(spec, features)
    _check_params(params, spec)
    y = np.asarray(labels)
    return _loss_and_grads(params, spec, X, y)[1]


def adam_step(
    params: ParameterVector, grads: Gradients, state: AdamState
) -> tuple[ParameterVector, AdamState]:
    """One bias-corrected Adam update; returns new params and advanced state."""
    if grads.shape_index != params.shape_index or grads.values.shape != params.values.shape:
        raise ValueError("gradient layout does not match parameters")
    if state.m.shape != params.values.shape:
        raise ValueError("optimizer state does not match parameters")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads.values
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads.values**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_params = ParameterVector(new_values, dict(params.shape_index))
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.epsilon)
    return new_params, new_state


def train_local_epochs(
    params: ParameterVector,
    spec: ModelSpec,
    state: AdamState,
    train_set: TrainSet,
    epochs: int,
    batch_size: int,
    seed: int,
    epoch_offset: int = 0,
) -> tuple[ParameterVector, AdamState, list[float]]:
    """Run full passes over one site's data, carrying optimizer state across epochs.

    Shuffling depends only on (seed, epoch_offset + epoch), never on scheduling,
    so E epochs followed by F epochs with epoch_offset=E reproduces a single
    E+F epoch call bit-exactly. The last partial batch is kept. Returns the
    per-epoch mean training loss (measured on each batch before its update).
    """
    X, y = train_set
    X = _check_features(spec, X)
    _check_params(params, spec)
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("training set is empty")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must match feature rows")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")

    n = len(y)
    history: list[float] = []
    for e in range(epochs):
        rng = np.random.default_rng(derive_seed(seed, "epoch", epoch_offset + e))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = _loss_and_grads(params, spec, X[idx], y[idx])
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        history.append(total / n)
    return params, state, history
