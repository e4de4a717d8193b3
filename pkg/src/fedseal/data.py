"""Datasets: ingestion, client partitioning, augmentation.

Instances are flat float vectors in [0, 1] with an optional class label.
A :class:`DatasetSplit` carves one labeled pool into the four collections a
run needs (server train, server validation, per-client unlabeled shards,
test).  Client shards expose no labels to algorithm code; the true labels
are retained in a side table reachable only through
:meth:`DatasetSplit.hidden_label`, which exists for correctness metrics and
the label-oracle baseline.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .rng import stream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

IID = "iid"
DIRICHLET = "dirichlet"


@dataclass(eq=False)
class Instance:
    id: int
    features: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)


class DatasetSplit:
    """Disjoint server/validation/client/test collections for one run."""

    def __init__(
        self,
        server_train: list[Instance],
        server_val: list[Instance],
        client_train: list[list[Instance]],
        test: list[Instance],
        hidden_labels: dict[int, int],
    ):
        self.server_train = server_train
        self.server_val = server_val
        self.client_train = client_train
        self.test = test
        self._hidden_labels = dict(hidden_labels)
        self._validate()

    def _validate(self) -> None:
        collections = [self.server_train, self.server_val, self.test, *self.client_train]
        seen: set[int] = set()
        width = None
        for coll in collections:
            for inst in coll:
                if inst.id in seen:
                    raise ValueError(f"instance id {inst.id} appears in two collections")
                seen.add(inst.id)
                if width is None:
                    width = inst.features.size
                elif inst.features.size != width:
                    raise ValueError(
                        f"instance {inst.id} has width {inst.features.size}, expected {width}"
                    )
        for inst in [*self.server_train, *self.server_val, *self.test]:
            if inst.label is None:
                raise ValueError(f"instance {inst.id} must be labeled")
        for shard in self.client_train:
            for inst in shard:
                if inst.label is not None:
                    raise ValueError(f"client instance {inst.id} leaks a label")
                if inst.id not in self._hidden_labels:
                    raise ValueError(f"client instance {inst.id} missing a hidden label")

    @property
    def n_classes(self) -> int:
        labels = [inst.label for inst in self.server_train + self.server_val + self.test]
        return int(max(labels)) + 1

    @property
    def feature_width(self) -> int:
        return self.server_train[0].features.size

    def hidden_label(self, instance_id: int) -> int:
        """True label of a client instance.

        For correctness metrics and the label-oracle baseline only; algorithm
        code must never call this.
        """
        return self._hidden_labels[instance_id]

    def hidden_labels(self) -> dict[int, int]:
        """Copy of the id -> true label table (metrics/oracle use only)."""
        return dict(self._hidden_labels)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _read_be32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise ValueError(f"{path}: truncated header at byte offset {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def _read_binary(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def ingest_idx(images_path, labels_path) -> list[Instance]:
    """Load an IDX image/label file pair (big-endian, standard magics).

    Pixels are scaled by 1/255 and flattened row-major.  Paths ending in
    ``.gz`` are decompressed transparently.
    """
    img_buf = _read_binary(images_path)
    lbl_buf = _read_binary(labels_path)

    magic = _read_be32(img_buf, 0, str(images_path))
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"{images_path}: bad image magic 0x{magic:08x} at byte offset 0, "
            f"expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    count = _read_be32(img_buf, 4, str(images_path))
    rows = _read_be32(img_buf, 8, str(images_path))
    cols = _read_be32(img_buf, 12, str(images_path))
    expected = 16 + count * rows * cols
    if len(img_buf) != expected:
        raise ValueError(
            f"{images_path}: expected {expected} bytes, got {len(img_buf)} "
            f"(mismatch from byte offset {min(expected, len(img_buf))})"
        )

    lbl_magic = _read_be32(lbl_buf, 0, str(labels_path))
    if lbl_magic != IDX_LABEL_MAGIC:
        raise ValueError(
            f"{labels_path}: bad label magic 0x{lbl_magic:08x} at byte offset 0, "
            f"expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    lbl_count = _read_be32(lbl_buf, 4, str(labels_path))
    if len(lbl_buf) != 8 + lbl_count:
        raise ValueError(
            f"{labels_path}: expected {8 + lbl_count} bytes, got {len(lbl_buf)} "
            f"(mismatch from byte offset {min(8 + lbl_count, len(lbl_buf))})"
        )
    if lbl_count != count:
        raise ValueError(
            f"{labels_path}: {lbl_count} labels but {images_path} has {count} images"
        )

    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=16)
    images = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_buf, dtype=np.uint8, offset=8)
    return [
        Instance(id=i, features=images[i], label=int(labels[i])) for i in range(count)
    ]


def ingest_csv(path) -> list[Instance]:
    """Load instances from ``label,f0,f1,...`` CSV; empty label = unlabeled."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = lines[0].split(",")
    if header[0] != "label" or any(
        name != f"f{i}" for i, name in enumerate(header[1:])
    ):
        raise ValueError(f"{path}: line 1: expected header 'label,f0,f1,...'")
    width = len(header) - 1

    instances = []
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != width + 1:
            raise ValueError(
                f"{path}: line {line_no}: expected {width + 1} cells, got {len(cells)}"
            )
        if cells[0] == "":
            label = None
        else:
            try:
                label = int(cells[0])
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_no}: non-integer label {cells[0]!r}"
                ) from None
        try:
            features = np.array([float(c) for c in cells[1:]])
        except ValueError:
            raise ValueError(
                f"{path}: line {line_no}: non-numeric feature cell"
            ) from None
        instances.append(Instance(id=line_no - 2, features=features, label=label))
    return instances


def write_csv(instances: list[Instance], path) -> None:
    """Inverse of :func:`ingest_csv`; floats written with full precision."""
    width = instances[0].features.size if instances else 0
    with open(path, "w", encoding="utf-8") as f:
        f.write("label," + ",".join(f"f{i}" for i in range(width)) + "\n")
        for inst in instances:
            label = "" if inst.label is None else str(inst.label)
            f.write(label + "," + ",".join(repr(float(v)) for v in inst.features) + "\n")


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def _class_pools(pool: list[Instance], rng: np.random.Generator):
    labels = [inst.label for inst in pool]
    if any(lbl is None for lbl in labels):
        raise ValueError("partition pool must be fully labeled")
    n_classes = int(max(labels)) + 1
    pools: list[list[Instance]] = [[] for _ in range(n_classes)]
    for inst in pool:
        pools[inst.label].append(inst)
    for class_pool in pools:
        order = rng.permutation(len(class_pool))
        class_pool[:] = [class_pool[i] for i in order]
    return pools


def _largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    # Stable sort keeps ties deterministic (lowest class index first).
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def partition(
    pool: list[Instance],
    n_clients: int,
    mode: str,
    per_client: int,
    rng_seed: int,
    alpha: float = 0.5,
) -> list[list[Instance]]:
    """Split a labeled pool into disjoint per-client shards of fixed size.

    ``iid`` deals per_client / n_classes instances of every class to each
    client (the request must divide evenly).  ``dirichlet`` draws per-client
    class proportions from Dirichlet(alpha), then samples without
    replacement; when a class pool runs dry the deficit moves to the classes
    with the most stock left.
    """
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if len(pool) < n_clients * per_client:
        raise ValueError(
            f"pool of {len(pool)} instances cannot supply "
            f"{n_clients} clients x {per_client} instances"
        )
    rng = stream(rng_seed, "partition")
    pools = _class_pools(pool, rng)
    n_classes = len(pools)

    if mode == IID:
        if per_client % n_classes != 0:
            raise ValueError(
                f"iid partition needs per_client divisible by {n_classes} classes, "
                f"got {per_client}"
            )
        per_class = per_client // n_classes
        for m, class_pool in enumerate(pools):
            if len(class_pool) < per_class * n_clients:
                raise ValueError(
                    f"class {m} has {len(class_pool)} instances, "
                    f"iid partition needs {per_class * n_clients}"
                )
        return [
            [class_pool.pop() for class_pool in pools for _ in range(per_class)]
            for _ in range(n_clients)
        ]

    if mode == DIRICHLET:
        shards = []
        for _ in range(n_clients):
            proportions = rng.dirichlet(np.full(n_classes, alpha))
            counts = _largest_remainder_counts(proportions, per_client)
            remaining = np.array([len(p) for p in pools])
            counts = np.minimum(counts, remaining)
            while counts.sum() < per_client:
                # Top up from the class with the most stock left.
                stock = remaining - counts
                counts[int(np.argmax(stock))] += 1
            shard = []
            for m, count in enumerate(counts):
                for _ in range(count):
                    shard.append(pools[m].pop())
            shards.append(shard)
        return shards

    raise ValueError(f"unknown partition mode {mode!r}")


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def _flip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1]


def _crop(img: np.ndarray, rng) -> np.ndarray:
    h, w = img.shape
    padded = np.zeros((h + 4, w + 4))
    padded[2 : 2 + h, 2 : 2 + w] = img
    dy, dx = rng.integers(0, 5, size=2)
    return padded[dy : dy + h, dx : dx + w]


def _rotate(img: np.ndarray, rng) -> np.ndarray:
    angle = rng.uniform(-15.0, 15.0)
    return ndimage.rotate(img, angle, reshape=False, order=1, mode="constant", cval=0.0)


def _translate(img: np.ndarray, rng) -> np.ndarray:
    dy, dx = (int(v) for v in rng.integers(-3, 4, size=2))
    out = np.zeros_like(img)
    h, w = img.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    out[ys, xs] = img[
        slice(max(-dy, 0), min(h - dy, h)), slice(max(-dx, 0), min(w - dx, w))
    ]
    return out


def _cutout(img: np.ndarray, rng) -> np.ndarray:
    # Half the side in each dimension masks ~25% of the area.
    h, w = img.shape
    mh, mw = max(1, h // 2), max(1, w // 2)
    top = int(rng.integers(0, h - mh + 1))
    left = int(rng.integers(0, w - mw + 1))
    out = img.copy()
    out[top : top + mh, left : left + mw] = 0.5
    return out


def _contrast(x: np.ndarray, rng) -> np.ndarray:
    c = 1.0 + rng.uniform(-0.4, 0.4)
    return 0.5 + c * (x - 0.5)


def _noise(x: np.ndarray, rng, sigma: float) -> np.ndarray:
    return x + rng.normal(0.0, sigma, size=x.shape)


def _vector_cutout(x: np.ndarray, rng) -> np.ndarray:
    n = x.size
    span = max(1, n // 4)
    start = int(rng.integers(0, n - span + 1))
    out = x.copy()
    out[start : start + span] = 0.5
    return out


def augment_weak(
    features: np.ndarray, rng, image_shape: tuple[int, int] | None = None
) -> np.ndarray:
    """Mild transform: flip + crop for images, light noise otherwise."""
    x = np.asarray(features, dtype=np.float64)
    if image_shape is None:
        return np.clip(_noise(x, rng, 0.05), 0.0, 1.0)
    img = x.reshape(image_shape)
    if rng.random() < 0.5:
        img = _flip(img)
    img = _crop(img, rng)
    return np.clip(img.ravel(), 0.0, 1.0)


_IMAGE_OPS = ("flip", "crop", "rotate", "translate", "cutout", "contrast", "noise")
_VECTOR_OPS = ("noise", "cutout", "contrast")


def augment_strong(
    features: np.ndarray, rng, image_shape: tuple[int, int] | None = None
) -> np.ndarray:
    """Aggressive transform: two ops drawn uniformly from the pool.

    Image pool: flip, crop, rotate +-15 deg, translate +-3 px, cutout of 25%
    of the area to 0.5, contrast jitter +-0.4, Gaussian noise sigma 0.1.
    Without an image shape the geometric ops drop out and the pool is noise,
    contiguous-segment cutout and contrast jitter.
    """
    x = np.asarray(features, dtype=np.float64)
    if image_shape is None:
        ops = [_VECTOR_OPS[i] for i in rng.integers(0, len(_VECTOR_OPS), size=2)]
        for op in ops:
            if op == "noise":
                x = _noise(x, rng, 0.1)
            elif op == "cutout":
                x = _vector_cutout(x, rng)
            else:
                x = _contrast(x, rng)
        return np.clip(x, 0.0, 1.0)

    img = x.reshape(image_shape)
    ops = [_IMAGE_OPS[i] for i in rng.integers(0, len(_IMAGE_OPS), size=2)]
    for op in ops:
        if op == "flip":
            img = _flip(img)
        elif op == "crop":
            img = _crop(img, rng)
        elif op == "rotate":
            img = _rotate(img, rng)
        elif op == "translate":
            img = _translate(img, rng)
        elif op == "cutout":
            img = _cutout(img, rng)
        elif op == "contrast":
            img = _contrast(img, rng)
        else:
            img = _noise(img, rng, 0.1)
    return np.clip(img.ravel(), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Dataset specification
# ---------------------------------------------------------------------------


@dataclass
class DataConfig:
    """Where a run's data comes from and how it is carved up."""

    kind: str = "synthetic"  # synthetic | idx | csv
    partition_mode: str = IID
    dirichlet_alpha: float = 0.5
    per_client: int = 1200
    server_train_n: int = 500
    server_val_n: int = 200
    test_n: int = 3000
    # synthetic
    n_classes: int = 10
    n_features: int = 32
    spread: float = 0.1
    # idx
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    image_height: int = 0
    image_width: int = 0
    # csv
    train_csv: str = ""
    test_csv: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("synthetic", "idx", "csv"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.partition_mode not in (IID, DIRICHLET):
            raise ValueError(f"unknown partition mode {self.partition_mode!r}")
        for name in ("per_client", "server_train_n", "server_val_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.test_n < 0:
            raise ValueError("test_n must be >= 0")
        if self.kind == "idx" and not (self.train_images and self.train_labels):
            raise ValueError("idx data needs train_images and train_labels paths")
        if self.kind == "csv" and not self.train_csv:
            raise ValueError("csv data needs a train_csv path")

    @property
    def image_shape(self) -> tuple[int, int] | None:
        if self.image_height > 0 and self.image_width > 0:
            return (self.image_height, self.image_width)
        return None


def load_split(cfg: DataConfig, n_clients: int, seed: int) -> DatasetSplit:
    """Materialize the configured dataset and carve the run split."""
    test_pool = None
    client_pool = None
    if cfg.kind == "synthetic":
        # Server/val/test instances draw from streams that do not involve
        # n_clients, so those collections are identical whatever the client
        # count; only the client pool scales.  All parts share one set of
        # class centers.
        centers = stream(seed, "data-centers").uniform(
            0.2, 0.8, size=(cfg.n_classes, cfg.n_features)
        )
        core_n = cfg.server_train_n + cfg.server_val_n + cfg.test_n
        pool = _blob_instances(
            centers, core_n, stream(seed, "data-core"), cfg.spread
        )
        client_pool = _blob_instances(
            centers,
            n_clients * cfg.per_client,
            stream(seed, "data-clients"),
            cfg.spread,
            id_offset=core_n,
        )
    elif cfg.kind == "idx":
        pool = ingest_idx(cfg.train_images, cfg.train_labels)
        if cfg.test_images:
            test_pool = ingest_idx(cfg.test_images, cfg.test_labels)
    else:
        pool = ingest_csv(cfg.train_csv)
        if any(inst.label is None for inst in pool):
            raise ValueError("csv training pool must be fully labeled")
        if cfg.test_csv:
            test_pool = ingest_csv(cfg.test_csv)

    if test_pool is not None and 0 < cfg.test_n < len(test_pool):
        order = stream(seed, "test").permutation(len(test_pool))
        test_pool = [test_pool[i] for i in order[: cfg.test_n]]

    return build_split(
        pool,
        n_clients=n_clients,
        per_client=cfg.per_client,
        server_train_n=cfg.server_train_n,
        server_val_n=cfg.server_val_n,
        seed=seed,
        partition_mode=cfg.partition_mode,
        alpha=cfg.dirichlet_alpha,
        test_n=cfg.test_n,
        test_pool=test_pool,
        client_pool=client_pool,
    )


# ---------------------------------------------------------------------------
# Synthetic data and split assembly
# ---------------------------------------------------------------------------


def _blob_instances(
    centers: np.ndarray,
    n_instances: int,
    rng: np.random.Generator,
    spread: float,
    id_offset: int = 0,
) -> list[Instance]:
    n_classes, n_features = centers.shape
    instances = []
    for i in range(n_instances):
        label = i % n_classes
        features = np.clip(
            centers[label] + rng.normal(0.0, spread, size=n_features), 0.0, 1.0
        )
        instances.append(Instance(id=id_offset + i, features=features, label=label))
    return instances


def synthetic_blobs(
    n_instances: int,
    n_classes: int,
    n_features: int,
    rng: np.random.Generator,
    spread: float = 0.1,
) -> list[Instance]:
    """Balanced Gaussian class blobs with features clipped to [0, 1]."""
    centers = rng.uniform(0.2, 0.8, size=(n_classes, n_features))
    return _blob_instances(centers, n_instances, rng, spread)


def build_split(
    pool: list[Instance],
    n_clients: int,
    per_client: int,
    server_train_n: int,
    server_val_n: int,
    seed: int,
    partition_mode: str = IID,
    alpha: float = 0.5,
    test_n: int = 0,
    test_pool: list[Instance] | None = None,
    client_pool: list[Instance] | None = None,
) -> DatasetSplit:
    """Carve one labeled pool into a full run split.

    The server training set is class-balanced (equal count per class, as
    evenly divisible); validation and test (when carved rather than supplied)
    are random draws from the remainder.  Client shards come from
    :func:`partition` over ``client_pool`` when given, otherwise over what is
    left of ``pool``; their labels move to the hidden side table.  Instance
    ids are reassigned to be globally unique.
    """
    rng = stream(seed, "split")
    labels = [inst.label for inst in pool]
    if any(lbl is None for lbl in labels):
        raise ValueError("split pool must be fully labeled")
    n_classes = int(max(labels)) + 1
    if server_train_n % n_classes != 0:
        raise ValueError(
            f"server_train_n {server_train_n} not divisible by {n_classes} classes"
        )

    pools = _class_pools(pool, rng)
    per_class = server_train_n // n_classes
    server_train = []
    for m, class_pool in enumerate(pools):
        if len(class_pool) < per_class:
            raise ValueError(f"class {m} has too few instances for the server split")
        server_train.extend(class_pool[:per_class])
        pools[m] = class_pool[per_class:]

    remainder = [inst for class_pool in pools for inst in class_pool]
    order = rng.permutation(len(remainder))
    remainder = [remainder[i] for i in order]

    if server_val_n > len(remainder):
        raise ValueError("not enough instances left for the validation split")
    server_val = remainder[:server_val_n]
    remainder = remainder[server_val_n:]

    if test_pool is None:
        if test_n > len(remainder):
            raise ValueError("not enough instances left for the test split")
        test = remainder[:test_n]
        remainder = remainder[test_n:]
    else:
        test = list(test_pool)

    shards = partition(
        client_pool if client_pool is not None else remainder,
        n_clients, partition_mode, per_client, seed, alpha,
    )

    next_id = 0

    def reid(instances: list[Instance], hide: bool = False) -> list[Instance]:
        nonlocal next_id
        out = []
        for inst in instances:
            out.append(
                replace(inst, id=next_id, label=None if hide else inst.label)
            )
            next_id += 1
        return out

    server_train = reid(server_train)
    server_val = reid(server_val)
    test = reid(test)
    hidden: dict[int, int] = {}
    hidden_shards = []
    for shard in shards:
        start = next_id
        hidden_shard = reid(shard, hide=True)
        for offset, inst in enumerate(shard):
            hidden[start + offset] = inst.label
        hidden_shards.append(hidden_shard)

    return DatasetSplit(server_train, server_val, hidden_shards, test, hidden)
