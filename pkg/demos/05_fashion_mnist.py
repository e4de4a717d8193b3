"""Desk-scale Fashion-MNIST run, when the IDX files are available locally.

Looks for the four standard files (raw or .gz) under
$FEDSEAL_FASHION_MNIST_DIR or ./data/fashion-mnist/ and runs a shortened
version of the configs/fashion_mnist_iid.ini experiment.  Without the files
it prints fetch instructions and exits; this package never downloads data
itself.
"""

import dataclasses
import os
import sys
from pathlib import Path

from fedseal import parse_config, serialize_config
from fedseal.cli import run

REPO = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("FEDSEAL_FASHION_MNIST_DIR", REPO / "data" / "fashion-mnist"))
NAMES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def locate(name: str) -> Path | None:
    for candidate in (DATA_DIR / name, DATA_DIR / f"{name}.gz"):
        if candidate.is_file():
            return candidate
    return None


missing = [name for name in NAMES if locate(name) is None]
if missing:
    print(f"Fashion-MNIST files not found under {DATA_DIR}:")
    for name in missing:
        print(f"  missing {name}[.gz]")
    print("\nFetch them on a machine with network access, e.g.:")
    print(f"  mkdir -p {DATA_DIR}")
    for name in NAMES:
        print(
            "  curl -Lo "
            f"{DATA_DIR / name}.gz "
            f"https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/{name}.gz"
        )
    sys.exit(0)

# Re-point the bundled config at wherever the files actually live.
cfg = parse_config(REPO / "configs" / "fashion_mnist_iid.ini")
cfg = dataclasses.replace(
    cfg,
    data=dataclasses.replace(
        cfg.data,
        train_images=str(locate("train-images-idx3-ubyte")),
        train_labels=str(locate("train-labels-idx1-ubyte")),
        test_images=str(locate("t10k-images-idx3-ubyte")),
        test_labels=str(locate("t10k-labels-idx1-ubyte")),
    ),
)
out_dir = REPO / "runs" / "fashion-mnist-demo"
out_dir.mkdir(parents=True, exist_ok=True)
config_path = out_dir / "config.ini"
config_path.write_text(serialize_config(cfg))

print(f"found all four IDX files under {DATA_DIR}")
print(f"running {cfg.rounds // 5} rounds of '{cfg.algorithm}' "
      "(shortened; edit configs/fashion_mnist_iid.ini for the full run)")
sys.exit(
    run(["--config", str(config_path), "--rounds", str(cfg.rounds // 5),
         "--output-dir", str(out_dir)])
)
