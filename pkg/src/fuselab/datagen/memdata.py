"""Overlapping memorization corpora: high-entropy token blocks, some shared
verbatim across every per-model corpus, with a disjoint validation set.

Blocks are uniform random sequences, so any likelihood gain a model shows
on them can only come from memorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fuselab.rng import Rng


@dataclass(frozen=True)
class MemCorpusBundle:
    per_model: tuple[np.ndarray, ...]  # each (per_model, block_len)
    shared: np.ndarray                 # (n_shared, block_len); prefix of every corpus
    validation: np.ndarray
    block_len: int


def _draw_distinct_blocks(
    count: int, block_len: int, vocab_size: int, gen: np.random.Generator
) -> np.ndarray:
    space = float(vocab_size) ** block_len
    if count > space:
        raise ValueError(
            f"cannot draw {count} distinct blocks of length {block_len} from vocab {vocab_size}"
        )
    seen: set[bytes] = set()
    rows: list[np.ndarray] = []
    attempts = 0
    while len(rows) < count:
        attempts += 1
        if attempts > 1000:
            raise ValueError("insufficient distinct blocks for requested counts")
        batch = gen.integers(0, vocab_size, size=(count - len(rows), block_len), dtype=np.int64)
        for row in batch:
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(row)
    return np.stack(rows)


def make_mem_corpora(
    n_models: int,
    per_model: int,
    shared: int,
    block_len: int,
    rng: Rng,
    vocab_size: int = 64,
    n_validation: int | None = None,
) -> MemCorpusBundle:
    """n_models corpora of ``per_model`` blocks each: a common ``shared``
    prefix plus pairwise-disjoint unique blocks, and validation blocks
    disjoint from all of them."""
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    if not 0 <= shared < per_model:
        raise ValueError("need 0 <= shared < per_model")
    if block_len < 2:
        raise ValueError("block_len must be >= 2")
    if n_validation is None:
        n_validation = per_model
    unique_each = per_model - shared
    total = shared + n_models * unique_each + n_validation
    blocks = _draw_distinct_blocks(total, block_len, vocab_size, rng.generator())
    shared_blocks = blocks[:shared]
    corpora = []
    off = shared
    for _ in range(n_models):
        unique = blocks[off : off + unique_each]
        corpora.append(np.concatenate([shared_blocks, unique], axis=0))
        off += unique_each
    validation = blocks[off : off + n_validation]
    return MemCorpusBundle(tuple(corpora), shared_blocks, validation, block_len)
