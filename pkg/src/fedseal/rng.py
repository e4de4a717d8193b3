"""Deterministic random-stream derivation.

Every stochastic component of a run (model init, server shuffles, client
shuffles, augmentation draws, client sampling, partitioning) pulls from its
own generator, derived from the experiment seed plus a structured path such
as ``("client", 3, 17)``.  Streams are independent of each other and of
execution order, which is what makes client-parallel training reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_to_int(token: int | str) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token)
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator for ``path`` under ``seed``.

    The same (seed, path) always yields the same stream, on any platform;
    distinct paths yield statistically independent streams.
    """
    entropy = [int(seed)] + [_token_to_int(tok) for tok in path]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
