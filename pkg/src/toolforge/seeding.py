"""Deterministic sub-seed derivation and order-preserving parallel map.

Every random stream in a run is keyed by the master seed plus a tuple of
labels (stage, feature, scale index, target id, ...), hashed with BLAKE2b.
Work items therefore draw the same numbers no matter which thread runs
them or in what order.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor


def derive_seed(master_seed: int, *keys) -> int:
    """63-bit seed for the stream labelled ``keys`` under ``master_seed``."""
    text = repr((int(master_seed),) + tuple(keys)).encode()
    digest = hashlib.blake2b(text, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def rollout_seeds(master_seed: int, n: int, stage: str = "rollout"):
    return [derive_seed(master_seed, stage, i) for i in range(n)]


def ordered_map(fn, items, jobs: int = 1):
    """``[fn(x) for x in items]``, optionally on a thread pool; output order is input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
