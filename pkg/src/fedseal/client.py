"""Client-side round work: ensembling, filtering, local training.

A client never sees a true label.  Instead it keeps a running average of
every downloaded global model's confidence on its own data (the
self-ensemble), filters instances whose ensemble confidence clears the
server's per-class threshold into a pseudo-labeled positive set, assigns a
complementary "definitely not this class" label to low-confidence classes
of the rest, and trains on the weighted combination of both signals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass
class ClientConfig:
    epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.001
    lr_decay: float = 0.995
    momentum: float = 0.9
    theta: float = 0.05
    lambda_max: float = 1.0
    lambda_ramp_rounds: int = 30
    use_ensemble: bool = True
    ensemble_every_round: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.lambda_max < 0:
            raise ValueError(f"lambda_max must be >= 0, got {self.lambda_max}")
        if self.lambda_ramp_rounds < 1:
            raise ValueError(
                f"lambda_ramp_rounds must be >= 1, got {self.lambda_ramp_rounds}"
            )

    def check_theta(self, n_classes: int) -> None:
        if self.theta >= 1.0 / n_classes:
            warnings.warn(
                f"theta={self.theta} >= 1/{n_classes}; the predicted class itself "
                "can fall below the complementary threshold",
                stacklevel=2,
            )


class EnsembleState:
    """Running average of historical models' confidence per instance."""

    def __init__(self, ids: np.ndarray, avg: np.ndarray, count: int):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.avg = avg
        self.count = count
        self._row = {int(i): r for r, i in enumerate(self.ids)}

    @classmethod
    def empty(cls) -> "EnsembleState":
        return cls(np.empty(0, dtype=np.int64), np.empty((0, 0)), 0)

    def confidence(self, instance_id: int) -> np.ndarray:
        if instance_id not in self._row:
            raise KeyError(f"instance {instance_id} is not in the ensemble state")
        return self.avg[self._row[instance_id]]

    def rows_for(self, instances) -> np.ndarray:
        try:
            return self.avg[[self._row[inst.id] for inst in instances]]
        except KeyError as exc:
            raise KeyError(f"instance {exc.args[0]} is not in the ensemble state") from None


@dataclass
class FilteredSets:
    """Per-round (instance id, label) pairs; the id sets never overlap."""

    positive: list[tuple[int, int]]
    negative: list[tuple[int, int]]


def update_ensemble(
    state: EnsembleState, model: nn.ModelParams, local_data
) -> EnsembleState:
    """Fold the current model's confidence into the running average.

    With t models seen so far the update is avg <- ((t-1)/t) avg + (1/t) p,
    which keeps avg equal to the plain mean of every model's output without
    storing the models.  The first call simply stores the outputs.
    """
    feats = np.stack([inst.features for inst in local_data])
    probs = nn.forward_batch(model, feats)
    ids = np.array([inst.id for inst in local_data], dtype=np.int64)
    if state.count == 0:
        return EnsembleState(ids, probs, 1)
    if not np.array_equal(ids, state.ids):
        raise ValueError("ensemble update saw a different instance set")
    t = state.count + 1
    avg = ((t - 1) / t) * state.avg + (1.0 / t) * probs
    return EnsembleState(ids, avg, t)


def pseudo_label(state: EnsembleState, instance_id: int) -> tuple[int, float]:
    """Most likely class under the ensemble, with its confidence."""
    conf = state.confidence(instance_id)
    label = int(np.argmax(conf))  # first maximum = lowest index on ties
    return label, float(conf[label])


def build_positive_set(
    state: EnsembleState, taus: np.ndarray, local_data
) -> list[tuple[int, int]]:
    """Instances whose pseudo-label confidence clears its class threshold."""
    if not local_data:
        return []
    conf = state.rows_for(local_data)
    labels = np.argmax(conf, axis=1)
    top = conf[np.arange(len(local_data)), labels]
    keep = top >= np.asarray(taus)[labels]
    return [
        (inst.id, int(labels[i])) for i, inst in enumerate(local_data) if keep[i]
    ]


def build_negative_set(
    state: EnsembleState,
    taus: np.ndarray,
    theta: float,
    local_data,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Complementary labels for instances kept out of the positive set.

    For each such instance, any class with ensemble confidence <= theta is a
    candidate; one is drawn uniformly.  Instances with no candidate class are
    skipped, so the result is disjoint from the positive set by construction.
    """
    if not local_data:
        return []
    conf = state.rows_for(local_data)
    labels = np.argmax(conf, axis=1)
    top = conf[np.arange(len(local_data)), labels]
    in_positive = top >= np.asarray(taus)[labels]
    out = []
    for i, inst in enumerate(local_data):
        if in_positive[i]:
            continue
        candidates = np.flatnonzero(conf[i] <= theta)
        if candidates.size == 0:
            continue
        comp = int(candidates[rng.integers(0, candidates.size)])
        out.append((inst.id, comp))
    return out


def lambda_at(round_index: int, cfg: ClientConfig) -> float:
    """Positive-loss weight: linear ramp to lambda_max over the ramp window."""
    if round_index < 1:
        raise ValueError(f"round index must be >= 1, got {round_index}")
    return cfg.lambda_max * min(1.0, round_index / cfg.lambda_ramp_rounds)


def client_train(
    global_model: nn.ModelParams,
    sets: FilteredSets,
    local_data,
    cfg: ClientConfig,
    round_index: int,
    rng: np.random.Generator,
    strong_augment_fn=None,
) -> nn.ModelParams:
    """Local SGD on lambda * positive loss + negative loss.

    Positive instances train with strong augmentation against their
    pseudo-labels; negative instances train un-augmented against the
    complementary loss.  An empty component drops out of the objective; if
    both sets are empty the global model is returned untouched.
    """
    features = {inst.id: inst.features for inst in local_data}
    positive = [(features[i], label) for i, label in sets.positive]
    negative = [(features[i], label) for i, label in sets.negative]
    if not positive and not negative:
        return global_model

    lam = lambda_at(round_index, cfg)
    params = global_model
    opt = nn.OptimizerState(
        learning_rate=cfg.learning_rate,
        decay=cfg.lr_decay,
        momentum=cfg.momentum,
        velocity=np.zeros(params.values.size),
    )
    n_pos, n_neg = len(positive), len(negative)
    use_pos = n_pos > 0 and lam > 0.0
    batches = max(-(-n_pos // cfg.batch_size) if use_pos else 0,
                  -(-n_neg // cfg.batch_size) if n_neg else 0)
    if batches == 0:
        return global_model

    for _ in range(cfg.epochs):
        pos_order = rng.permutation(n_pos) if use_pos else None
        neg_order = rng.permutation(n_neg) if n_neg else None
        for b in range(batches):
            lo, hi = b * cfg.batch_size, (b + 1) * cfg.batch_size
            grad = None
            if use_pos and lo < n_pos:
                batch = []
                for i in pos_order[lo:hi]:
                    x, label = positive[i]
                    if strong_augment_fn is not None:
                        x = strong_augment_fn(x, rng)
                    batch.append((x, label, nn.POSITIVE, 1.0))
                grad = lam * nn.gradient(params, batch)
            if n_neg and lo < n_neg:
                batch = [
                    (negative[i][0], negative[i][1], nn.NEGATIVE, 1.0)
                    for i in neg_order[lo:hi]
                ]
                neg_grad = nn.gradient(params, batch)
                grad = neg_grad if grad is None else grad + neg_grad
            if grad is None:
                continue
            params, opt = nn.sgd_step(params, grad, opt)
    return params
