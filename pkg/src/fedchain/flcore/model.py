"""Dense softmax classifiers on flat parameter vectors.

``shape = (input_dim, *hidden_dims, output_dim)``; with no hidden dims this is
multinomial logistic regression, otherwise ReLU hidden layers. Parameters are
stored layer by layer as the row-major ``(fan_in, fan_out)`` weight matrix
followed by the bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


def param_count(shape) -> int:
    return sum((a + 1) * b for a, b in zip(shape[:-1], shape[1:]))


@dataclass(frozen=True, eq=False)
class ModelWeights:
    values: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) < 2 or min(shape) < 1:
            raise ShapeError(f"invalid layer shape {shape}")
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != param_count(shape):
            raise ShapeError(f"{values.size} values for shape {shape} (needs {param_count(shape)})")
        if not np.all(np.isfinite(values)):
            raise ValueError("model weights must be finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def layers(self):
        """``(W, b)`` views for each layer."""
        return _split(self.values, self.shape)


def _split(values, shape):
    out, pos = [], 0
    for fan_in, fan_out in zip(shape[:-1], shape[1:]):
        w = values[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        out.append((w, values[pos:pos + fan_out]))
        pos += fan_out
    return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 10
    momentum: float = 0.9
    local_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be non-negative")


@dataclass(frozen=True, eq=False)
class DatasetShard:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        if x.shape[0] != y.size:
            raise ShapeError(f"{x.shape[0]} rows but {y.size} labels")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError("labels outside [0, class_count)")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    def subset(self, idx) -> DatasetShard:
        return DatasetShard(self.features[idx], self.labels[idx], self.class_count)


def init_model(shape, seed: int) -> ModelWeights:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights and biases."""
    shape = tuple(int(s) for s in shape)
    if len(shape) < 2 or min(shape) < 1:
        raise ShapeError(f"invalid layer shape {shape}")
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, fan_out in zip(shape[:-1], shape[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelWeights(np.concatenate(parts), shape)


def _check_dims(w: ModelWeights, x: np.ndarray) -> None:
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"feature dim {x.shape[1]} does not match model input {w.shape[0]}")


def logits(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    _check_dims(w, x)
    layers = w.layers()
    a = x
    for W, b in layers[:-1]:
        a = np.maximum(a @ W + b, 0.0)
    W, b = layers[-1]
    return a @ W + b


def loss_and_grad(values: np.ndarray, shape, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameters."""
    if isinstance(values, ModelWeights):
        values = values.values
    if x.shape[1] != shape[0]:
        raise ShapeError(f"feature dim {x.shape[1]} does not match model input {shape[0]}")
    layers = _split(values, shape)
    acts = [x]
    for W, b in layers[:-1]:
        acts.append(np.maximum(acts[-1] @ W + b, 0.0))
    W, b = layers[-1]
    z = acts[-1] @ W + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = x.shape[0]
    loss = -logp[np.arange(n), y].mean()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        a = acts[k]
        grads.append((a.T @ delta, delta.sum(axis=0)))
        if k:
            delta = (delta @ W.T) * (a > 0)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.reshape(-1))
        flat.append(gb)
    return float(loss), np.concatenate(flat)


def dataset_loss(w: ModelWeights, shard: DatasetShard) -> float:
    return loss_and_grad(w, w.shape, shard.features, shard.labels)[0]


def train_sgd(w: ModelWeights, shard: DatasetShard, cfg: TrainConfig) -> tuple[ModelWeights, list[float]]:
    """Mini-batch SGD with momentum; returns the weights and the full-shard
    loss after every epoch."""
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    _check_dims(w, shard.features)
    rng = np.random.default_rng(cfg.seed)
    params = w.values.copy()
    velocity = np.zeros_like(params)
    losses = []
    n = len(shard)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(params, w.shape, shard.features[idx], shard.labels[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError("non-finite loss during local training")
            velocity = cfg.momentum * velocity + grad
            params -= cfg.learning_rate * velocity
        if not np.all(np.isfinite(params)):
            raise DivergenceError("parameters diverged during local training")
        losses.append(dataset_loss(ModelWeights(params, w.shape), shard))
    return ModelWeights(params, w.shape), losses


def gradient_check(w: ModelWeights, shard: DatasetShard, *, coords: int = 64, step: float = 1e-5,
                   seed: int = 0, floor: float = 1e-5) -> float:
    """Largest relative gap between the analytic gradient and central finite
    differences over ``coords`` random coordinates.

    Relative error is ``|a - f| / max(|a|, |f|, floor)``; the floor keeps
    coordinates with a vanishing gradient from dividing roundoff by zero.
    """
    x, y = shard.features, shard.labels
    _, grad = loss_and_grad(w, w.shape, x, y)
    rng = np.random.default_rng(seed)
    picks = rng.choice(w.values.size, size=min(coords, w.values.size), replace=False)
    worst = 0.0
    for i in picks:
        plus = w.values.copy()
        minus = w.values.copy()
        plus[i] += step
        minus[i] -= step
        fd = (loss_and_grad(plus, w.shape, x, y)[0] - loss_and_grad(minus, w.shape, x, y)[0]) / (2 * step)
        worst = max(worst, abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), floor))
    return worst


def predict(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(w, x), axis=1)


def evaluate(w: ModelWeights, test: DatasetShard) -> float:
    """Fraction of samples whose argmax logit matches the label."""
    if len(test) == 0:
        return 0.0
    return float(np.mean(predict(w, test.features) == test.labels))
