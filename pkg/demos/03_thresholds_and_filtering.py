"""Per-class confidence thresholds and the two filtered datasets.

Trains a quick server model on labeled blobs, derives a threshold for each
class from the validation set, then shows how an unlabeled client shard is
filtered: high-confidence instances get pseudo-labels, low-confidence ones
get a complementary "definitely not this class" label.
"""

import numpy as np

from fedseal import (
    DataConfig,
    EnsembleState,
    ServerConfig,
    bootstrap,
    build_negative_set,
    build_positive_set,
    compute_thresholds,
    label_correct_rates,
    load_split,
    stream,
    update_ensemble,
)
from fedseal.client import FilteredSets

data_cfg = DataConfig(
    kind="synthetic", n_classes=5, n_features=16, spread=0.25,
    per_client=120, server_train_n=50, server_val_n=40, test_n=100,
)
split = load_split(data_cfg, n_clients=2, seed=11)

server_cfg = ServerConfig(bootstrap_epochs=40, batch_size=16, learning_rate=0.15)
model = bootstrap(split.server_train, server_cfg, stream(11, "boot"), dims=(16, 24, 5))

taus = compute_thresholds(model, split.server_val)
print("per-class confidence thresholds:", np.round(taus, 3))

shard = split.client_train[0]
confidence = update_ensemble(EnsembleState.empty(), model, shard)
positive = build_positive_set(confidence, taus, shard)
negative = build_negative_set(confidence, taus, theta=0.05, local_data=shard,
                              rng=stream(11, "neg"))

print(f"\nclient shard: {len(shard)} unlabeled instances")
print(f"  positive set (pseudo-labeled):      {len(positive)}")
print(f"  negative set (complementary-label): {len(negative)}")
print(f"  left out of both:                   {len(shard) - len(positive) - len(negative)}")

pos_rate, neg_rate = label_correct_rates(
    FilteredSets(positive, negative), split.hidden_labels()
)
print("\nchecked against the hidden true labels (metrics-only accessor):")
print(f"  pseudo-labels correct:        {pos_rate:.1%}")
print(f"  complementary labels correct: {neg_rate:.1%}")
