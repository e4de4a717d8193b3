"""Small feed-forward classifier with exact analytic gradients.

The network is a plain MLP (tanh hidden layers, softmax head) over flat
feature vectors.  Parameters live in a single flat float64 vector plus layer
shape metadata, so a whole model can be averaged, diffed and shipped around
as one array.  Everything here is a pure function over value-semantic
inputs: nothing mutates its arguments.

Alternate backbones only need to reproduce the call signatures of
``init_params`` / ``forward`` / ``predict`` / ``gradient``; the rest of the
package is indifferent to what is inside.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Probabilities are clamped away from 0 and 1 before any log; keeps both
# loss functions finite on overconfident models.
PROB_FLOOR = 1e-12

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class ModelParams:
    """Flat parameter vector plus per-layer (fan_in, fan_out) shapes.

    Bias length per layer equals fan_out; packing order is W1, b1, W2, b2, ...
    """

    values: np.ndarray
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        expected = param_count(self.shapes)
        if values.ndim != 1 or values.size != expected:
            raise ValueError(
                f"parameter vector has length {values.size}, shapes imply {expected}"
            )
        values.flags.writeable = False
        self.values = values
        self.shapes = tuple((int(i), int(o)) for i, o in self.shapes)

    @property
    def n_inputs(self) -> int:
        return self.shapes[0][0]

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][1]

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(values=values, shapes=self.shapes)


@dataclass
class OptimizerState:
    """SGD-with-momentum state; ``velocity`` matches the parameter length."""

    learning_rate: float
    decay: float
    momentum: float
    velocity: np.ndarray

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        self.velocity = np.asarray(self.velocity, dtype=np.float64)


def shapes_for(dims: tuple[int, ...] | list[int]) -> tuple[tuple[int, int], ...]:
    """Layer shapes for a dims chain like (784, 128, 64, 10)."""
    if len(dims) < 2:
        raise ValueError(f"need at least input and output dims, got {dims}")
    return tuple((int(dims[i]), int(dims[i + 1])) for i in range(len(dims) - 1))


def param_count(shapes) -> int:
    return int(sum(i * o + o for i, o in shapes))


def init_params(dims, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in layer order from ``rng``."""
    shapes = shapes_for(dims)
    chunks = []
    for fan_in, fan_out in shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ModelParams(values=np.concatenate(chunks), shapes=shapes)


def zero_params(dims) -> ModelParams:
    shapes = shapes_for(dims)
    return ModelParams(values=np.zeros(param_count(shapes)), shapes=shapes)


def unflatten(params: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-layer (W, b) views into the flat vector."""
    layers = []
    offset = 0
    for fan_in, fan_out in params.shapes:
        w = params.values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params.values[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def _forward_cached(params: ModelParams, x: np.ndarray):
    """Probs plus the per-layer inputs needed for backprop."""
    layers = unflatten(params)
    inputs = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w + b)
        inputs.append(a)
    w, b = layers[-1]
    probs = _softmax(a @ w + b)
    return probs, inputs, layers


def forward_batch(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class-probability rows for a (n, width) feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.n_inputs:
        got = features.shape[1] if features.ndim == 2 else features.shape
        raise ValueError(
            f"feature width mismatch: network expects {params.n_inputs}, got {got}"
        )
    probs, _, _ = _forward_cached(params, features)
    return probs


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Predicted class-probability distribution for one feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ValueError(f"expected a 1-d feature vector, got shape {features.shape}")
    if features.size != params.n_inputs:
        raise ValueError(
            f"feature width mismatch: network expects {params.n_inputs}, got {features.size}"
        )
    return forward_batch(params, features[None, :])[0]


def predict_batch(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # np.argmax takes the first maximum, i.e. the lowest class index on ties.
    return np.argmax(forward_batch(params, features), axis=1)


def predict(params: ModelParams, features: np.ndarray) -> int:
    """Argmax class of ``forward``; ties break to the lowest class index."""
    return int(np.argmax(forward(params, features)))


def _check_label(label: int, n_classes: int, what: str) -> int:
    label = int(label)
    if not 0 <= label < n_classes:
        raise ValueError(f"{what} {label} out of range [0, {n_classes})")
    return label


def cross_entropy(label: int, confidence: np.ndarray) -> float:
    """-log p[label], with the probability floored at PROB_FLOOR."""
    confidence = np.asarray(confidence, dtype=np.float64)
    label = _check_label(label, confidence.size, "label")
    return float(-np.log(np.clip(confidence[label], PROB_FLOOR, 1.0)))


def negative_cross_entropy(comp_label: int, confidence: np.ndarray) -> float:
    """-log(1 - p[comp_label]): loss for 'this is NOT class comp_label'."""
    confidence = np.asarray(confidence, dtype=np.float64)
    comp_label = _check_label(comp_label, confidence.size, "complementary label")
    return float(-np.log(np.clip(1.0 - confidence[comp_label], PROB_FLOOR, 1.0)))


def _as_batch_arrays(params: ModelParams, batch):
    if len(batch) == 0:
        raise ValueError("empty batch; callers must skip empty loss components")
    feats = np.empty((len(batch), params.n_inputs))
    labels = np.empty(len(batch), dtype=np.int64)
    weights = np.empty(len(batch))
    negative = np.zeros(len(batch), dtype=bool)
    for i, (x, label, kind, weight) in enumerate(batch):
        x = np.asarray(x, dtype=np.float64)
        if x.size != params.n_inputs:
            raise ValueError(
                f"feature width mismatch: network expects {params.n_inputs}, got {x.size}"
            )
        if kind == NEGATIVE:
            negative[i] = True
            labels[i] = _check_label(label, params.n_classes, "complementary label")
        elif kind == POSITIVE:
            labels[i] = _check_label(label, params.n_classes, "label")
        else:
            raise ValueError(f"unknown loss kind {kind!r}")
        feats[i] = x
        weights[i] = float(weight)
    return feats, labels, weights, negative


def batch_loss(params: ModelParams, batch) -> float:
    """Weighted mean loss over a mixed positive/negative batch.

    The mean is weight-normalized (sum of w_i * loss_i over sum of w_i), so a
    duplicated instance is interchangeable with doubling its weight.  A batch
    with all-zero weights has loss 0 by convention.
    """
    feats, labels, weights, negative = _as_batch_arrays(params, batch)
    total = weights.sum()
    if total == 0.0:
        return 0.0
    probs = forward_batch(params, feats)
    rows = np.arange(len(batch))
    p = probs[rows, labels]
    losses = np.where(
        negative,
        -np.log(np.clip(1.0 - p, PROB_FLOOR, 1.0)),
        -np.log(np.clip(p, PROB_FLOOR, 1.0)),
    )
    return float((weights * losses).sum() / total)


def gradient(params: ModelParams, batch) -> np.ndarray:
    """Analytic gradient of ``batch_loss`` with respect to the flat vector.

    Batch entries are (features, label, kind, weight) with kind POSITIVE
    (cross-entropy on label) or NEGATIVE (complementary loss on label).
    """
    feats, labels, weights, negative = _as_batch_arrays(params, batch)
    total = weights.sum()
    if total == 0.0:
        return np.zeros(params.values.size)

    probs, inputs, layers = _forward_cached(params, feats)
    rows = np.arange(len(batch))
    p = probs[rows, labels]

    # d(loss)/d(logits) per row, before weighting.
    grad_z = np.empty_like(probs)
    pos = ~negative
    if pos.any():
        g = probs[pos].copy()
        g[np.arange(pos.sum()), labels[pos]] -= 1.0
        # Clamped rows have a locally constant loss, hence zero gradient.
        g[p[pos] < PROB_FLOOR] = 0.0
        grad_z[pos] = g
    if negative.any():
        pn = probs[negative]
        pc = p[negative]
        q = 1.0 - pc
        scale = np.where(q < PROB_FLOOR, 0.0, pc / np.maximum(q, PROB_FLOOR))
        g = -scale[:, None] * pn
        g[np.arange(negative.sum()), labels[negative]] += scale
        grad_z[negative] = g

    grad_z *= (weights / total)[:, None]

    grads = []
    delta = grad_z
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        a_in = inputs[idx]
        grads.append(delta.sum(axis=0))  # bias
        grads.append((a_in.T @ delta).ravel())  # weights
        if idx > 0:
            delta = (delta @ w.T) * (1.0 - a_in * a_in)
    grads.reverse()
    return np.concatenate(grads)


def sgd_step(
    params: ModelParams, grad: np.ndarray, opt: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    """One momentum-SGD update; returns fresh params and state."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.size != params.values.size:
        raise ValueError(
            f"gradient length {grad.size} does not match parameter length {params.values.size}"
        )
    if opt.velocity.size != params.values.size:
        raise ValueError(
            f"velocity length {opt.velocity.size} does not match parameter length {params.values.size}"
        )
    velocity = opt.momentum * opt.velocity + grad
    values = params.values - opt.learning_rate * velocity
    if not np.isfinite(values).all():
        raise FloatingPointError("non-finite parameter values after SGD step")
    return params.with_values(values), replace(opt, velocity=velocity)


def decay_lr(opt: OptimizerState) -> OptimizerState:
    """Per-round learning-rate decay; everything else unchanged."""
    return replace(opt, learning_rate=opt.learning_rate * opt.decay)
