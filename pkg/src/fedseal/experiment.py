"""Round loop, client sampling, baseline algorithms and metrics.

One round runs: aggregate last round's uploads -> supervised server training
-> per-class thresholds -> broadcast (ensemble updates) -> filtering and
local training on the sampled clients -> collect uploads.  Besides the full
algorithm there are three baselines: ``server_sl`` (labeled server data
only, the lower bound), ``fedavg_sl`` (clients train on their true labels,
an unrealizable upper bound) and ``fedavg_fixmatch`` (current-model
confidence against one fixed threshold, no negative learning).

Every stochastic choice draws from a stream keyed by (seed, purpose, round,
client), so runs are reproducible regardless of client-level parallelism.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import nn
from .client import (
    ClientConfig,
    EnsembleState,
    FilteredSets,
    build_negative_set,
    build_positive_set,
    client_train,
    lambda_at,
    update_ensemble,
)
from .data import DataConfig, DatasetSplit, augment_strong, augment_weak, load_split
from .rng import stream
from .server import ServerConfig, aggregate, bootstrap, compute_thresholds, server_train

FEDSEAL = "fedseal"
SERVER_SL = "server_sl"
FEDAVG_SL = "fedavg_sl"
FEDAVG_FIXMATCH = "fedavg_fixmatch"
ALGORITHMS = (FEDSEAL, SERVER_SL, FEDAVG_SL, FEDAVG_FIXMATCH)


@dataclass
class ExperimentConfig:
    algorithm: str = FEDSEAL
    n_clients: int = 10
    clients_per_round: int = 10
    rounds: int = 100
    seed: int = 0
    fixmatch_threshold: float = 0.9
    parallel_clients: int = 1
    hidden_dims: tuple[int, ...] = (128, 64)
    server: ServerConfig = field(default_factory=ServerConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}"
            )
        if self.n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {self.n_clients}")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ValueError(
                f"clients_per_round must be in [1, {self.n_clients}], "
                f"got {self.clients_per_round}"
            )
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 <= self.fixmatch_threshold <= 1.0:
            raise ValueError(
                f"fixmatch_threshold must be in [0, 1], got {self.fixmatch_threshold}"
            )
        if self.parallel_clients < 1:
            raise ValueError(
                f"parallel_clients must be >= 1, got {self.parallel_clients}"
            )
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)
        if any(d < 1 for d in self.hidden_dims) or not self.hidden_dims:
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")


@dataclass
class RoundRecord:
    """Per-round metrics; wall time is informational and excluded from equality."""

    round: int
    test_accuracy: float
    taus: tuple[float, ...]
    pos_sizes: tuple[int, ...]
    neg_sizes: tuple[int, ...]
    pos_correct_rate: float | None
    neg_correct_rate: float | None
    lambda_weight: float
    wall_ms: float = field(compare=False, default=0.0)


class ExperimentState:
    """Everything that persists between rounds."""

    def __init__(self, cfg: ExperimentConfig, split: DatasetSplit, global_params):
        self.cfg = cfg
        self.split = split
        self.global_params = global_params
        self.uploads: list = []
        self.upload_sizes: list[int] = []
        self.ensembles = {k: EnsembleState.empty() for k in range(cfg.n_clients)}
        self.server_lr = cfg.server.learning_rate
        self.client_lr = cfg.client.learning_rate
        shape = cfg.data.image_shape
        self.weak_augment = partial(augment_weak, image_shape=shape)
        self.strong_augment = partial(augment_strong, image_shape=shape)


def sample_clients(n_clients: int, k: int, round_index: int, seed: int) -> list[int]:
    """Uniform sample of k distinct clients, deterministic in (seed, round)."""
    if k > n_clients:
        raise ValueError(f"cannot sample {k} clients from {n_clients}")
    if k == n_clients:
        return list(range(n_clients))
    rng = stream(seed, "sample", round_index)
    return sorted(int(c) for c in rng.choice(n_clients, size=k, replace=False))


def evaluate(model: nn.ModelParams, test_set) -> float:
    """Fraction of test instances whose predicted class is the true label."""
    if not test_set:
        raise ValueError("test set is empty")
    if any(inst.label is None for inst in test_set):
        raise ValueError("test set must be fully labeled")
    feats = np.stack([inst.features for inst in test_set])
    labels = np.array([inst.label for inst in test_set])
    preds = nn.predict_batch(model, feats)
    return float((preds == labels).mean())


def label_correct_rates(
    sets: FilteredSets, hidden_labels
) -> tuple[float | None, float | None]:
    """Correctness of the filtered sets against the hidden true labels.

    A pseudo-label is correct when it equals the true label; a complementary
    label is correct when it differs.  Empty sets report None, not 0.
    """
    pos_rate = None
    if sets.positive:
        hits = sum(1 for i, y in sets.positive if hidden_labels[i] == y)
        pos_rate = hits / len(sets.positive)
    neg_rate = None
    if sets.negative:
        hits = sum(1 for i, y in sets.negative if hidden_labels[i] != y)
        neg_rate = hits / len(sets.negative)
    return pos_rate, neg_rate


def _train_client(state: ExperimentState, k: int, round_index: int, w_t, taus):
    """Local work for one sampled client; pure given its rng streams."""
    cfg = state.cfg
    data_k = state.split.client_train[k]
    client_rng = stream(cfg.seed, "client", k, round_index)

    if cfg.algorithm == FEDAVG_SL:
        # Label oracle: reveal the hidden labels and train supervised.
        labeled = [
            replace(inst, label=state.split.hidden_label(inst.id)) for inst in data_k
        ]
        sup_cfg = ServerConfig(
            epochs=cfg.client.epochs,
            batch_size=cfg.client.batch_size,
            learning_rate=state.client_lr,
            lr_decay=cfg.client.lr_decay,
            momentum=cfg.client.momentum,
        )
        local = server_train(w_t, labeled, sup_cfg, client_rng, state.weak_augment)
        return k, local, FilteredSets([], [])

    ccfg = replace(cfg.client, learning_rate=state.client_lr)
    if cfg.algorithm == FEDAVG_FIXMATCH:
        conf = update_ensemble(EnsembleState.empty(), w_t, data_k)
        taus = np.full(w_t.n_classes, cfg.fixmatch_threshold)
        ccfg = replace(ccfg, lambda_max=1.0, lambda_ramp_rounds=1)
    elif cfg.client.use_ensemble:
        conf = state.ensembles[k]
    else:
        # Ablation: confidence from the current model only.
        conf = update_ensemble(EnsembleState.empty(), w_t, data_k)

    positive = build_positive_set(conf, taus, data_k)
    if cfg.algorithm == FEDAVG_FIXMATCH:
        negative = []
    else:
        negative = build_negative_set(
            conf, taus, ccfg.theta, data_k, stream(cfg.seed, "negative", k, round_index)
        )
    sets = FilteredSets(positive, negative)
    local = client_train(
        w_t, sets, data_k, ccfg, round_index, client_rng, state.strong_augment
    )
    return k, local, sets


def run_round(state: ExperimentState, round_index: int):
    """Execute one full round; returns (state, RoundRecord)."""
    cfg = state.cfg
    started = time.perf_counter()

    # Step 1: aggregate previous uploads (if any), then server training.
    if state.uploads:
        weights = state.upload_sizes if cfg.server.size_weighted_aggregation else None
        w_bar = aggregate(state.uploads, weights)
    else:
        w_bar = state.global_params
    server_cfg = replace(cfg.server, learning_rate=state.server_lr)
    w_t = server_train(
        w_bar,
        state.split.server_train,
        server_cfg,
        stream(cfg.seed, "server", round_index),
        state.weak_augment,
    )
    taus = compute_thresholds(
        w_t, state.split.server_val, cfg.server.threshold_denominator
    )

    # Steps 2-4: broadcast, client training, upload.
    uploads: list = []
    sets_by_client: dict[int, FilteredSets] = {}
    sampled: list[int] = []
    if cfg.algorithm != SERVER_SL and cfg.clients_per_round > 0:
        sampled = sample_clients(
            cfg.n_clients, cfg.clients_per_round, round_index, cfg.seed
        )
        if cfg.algorithm == FEDSEAL and cfg.client.use_ensemble:
            targets = (
                range(cfg.n_clients) if cfg.client.ensemble_every_round else sampled
            )
            for k in targets:
                state.ensembles[k] = update_ensemble(
                    state.ensembles[k], w_t, state.split.client_train[k]
                )
        task = partial(_train_client, state, round_index=round_index, w_t=w_t, taus=taus)
        if cfg.parallel_clients > 1 and len(sampled) > 1:
            workers = min(cfg.parallel_clients, len(sampled))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(task, sampled))
        else:
            results = [task(k) for k in sampled]
        for k, local, sets in results:
            uploads.append(local)
            sets_by_client[k] = sets

    # Metrics.
    merged = FilteredSets(
        [pair for s in sets_by_client.values() for pair in s.positive],
        [pair for s in sets_by_client.values() for pair in s.negative],
    )
    pos_rate, neg_rate = label_correct_rates(merged, state.split.hidden_labels())
    if cfg.algorithm == FEDAVG_FIXMATCH:
        lam = 1.0
    else:
        lam = lambda_at(round_index, cfg.client)
    record = RoundRecord(
        round=round_index,
        test_accuracy=evaluate(w_t, state.split.test),
        taus=tuple(float(v) for v in taus),
        pos_sizes=tuple(len(sets_by_client[k].positive) for k in sampled),
        neg_sizes=tuple(len(sets_by_client[k].negative) for k in sampled),
        pos_correct_rate=pos_rate,
        neg_correct_rate=neg_rate,
        lambda_weight=lam,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )

    # Advance state: new global, fresh uploads, decayed learning rates.
    state.global_params = w_t
    state.uploads = uploads
    state.upload_sizes = [len(state.split.client_train[k]) for k in sampled]
    state.server_lr *= cfg.server.lr_decay
    state.client_lr *= cfg.client.lr_decay
    return state, record


def run_experiment_detailed(cfg: ExperimentConfig):
    """Bootstrap, run every round, return (records, final state)."""
    split = load_split(cfg.data, cfg.n_clients, cfg.seed)
    cfg.client.check_theta(split.n_classes)
    dims = (split.feature_width, *cfg.hidden_dims, split.n_classes)
    state = ExperimentState(cfg, split, None)
    state.global_params = bootstrap(
        split.server_train,
        cfg.server,
        stream(cfg.seed, "bootstrap"),
        dims,
        state.weak_augment,
    )
    records = []
    for t in range(1, cfg.rounds + 1):
        state, record = run_round(state, t)
        records.append(record)
    return records, state


def run_experiment(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Full experiment per the configured algorithm; one record per round."""
    records, _ = run_experiment_detailed(cfg)
    return records
