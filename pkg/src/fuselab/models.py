"""The trainable model family: bag classifier, causal LM, masked LM.

All three are small tanh networks over token ids with exact gradients via
the tape in :mod:`fuselab.autodiff`. The classifier feeds an MLP from two
pooled views of the embeddings: a plain mean and a centered position-ramp
mean (a bare mean pool is blind to token order, which position-dependent
label rules need); the LMs are small self-attention stacks with learned
positions and a tied output projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fuselab import autodiff as ad
from fuselab.autodiff import Tensor
from fuselab.params import ParameterSet
from fuselab.rng import Rng

ARCH_CLASSIFIER = "classifier"
ARCH_CAUSAL_LM = "causal-lm"
ARCH_MASKED_LM = "masked-lm"
ARCHITECTURES = (ARCH_CLASSIFIER, ARCH_CAUSAL_LM, ARCH_MASKED_LM)

_INIT_STREAM = 1000


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; the seed fixes the initial weights.

    ``hidden_dims`` means hidden-layer widths for the classifier and one
    feed-forward width per attention block for the LMs (so its length is
    the block count). Masked LMs reserve the last vocabulary id as the
    mask token.
    """

    arch: str
    vocab_size: int
    embed_dim: int
    hidden_dims: tuple[int, ...] = (32, 32)
    context_len: int = 32
    num_labels: int = 2
    num_heads: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        reserved = 1 if self.arch == ARCH_MASKED_LM else 0
        if self.vocab_size < reserved + 2:
            raise ValueError(f"vocab_size {self.vocab_size} too small (need >= {reserved + 2})")
        if self.context_len < 2:
            raise ValueError("context_len must be >= 2")
        if self.embed_dim <= 0 or any(h <= 0 for h in self.hidden_dims):
            raise ValueError("embed_dim and hidden dims must be positive")
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be nonempty")
        if self.arch == ARCH_CLASSIFIER and self.num_labels < 2:
            raise ValueError("classifier needs num_labels >= 2")
        if self.arch != ARCH_CLASSIFIER and self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must divide evenly into heads")

    @property
    def mask_token_id(self) -> int:
        if self.arch != ARCH_MASKED_LM:
            raise ValueError("mask token only exists for masked-lm")
        return self.vocab_size - 1

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "hidden_dims": list(self.hidden_dims),
            "context_len": self.context_len,
            "num_labels": self.num_labels,
            "num_heads": self.num_heads,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            arch=d["arch"],
            vocab_size=int(d["vocab_size"]),
            embed_dim=int(d["embed_dim"]),
            hidden_dims=tuple(d.get("hidden_dims", (32, 32))),
            context_len=int(d.get("context_len", 32)),
            num_labels=int(d.get("num_labels", 2)),
            num_heads=int(d.get("num_heads", 2)),
            seed=int(d.get("seed", 0)),
        )


def _segment_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d = config.embed_dim
    specs: list[tuple[str, tuple[int, ...]]] = [("embed", (config.vocab_size, d))]
    if config.arch == ARCH_CLASSIFIER:
        prev = 2 * d  # mean pool concatenated with ramp pool
        for i, h in enumerate(config.hidden_dims):
            specs.append((f"dense{i}.w", (prev, h)))
            specs.append((f"dense{i}.b", (h,)))
            prev = h
        specs.append(("out.w", (prev, config.num_labels)))
        specs.append(("out.b", (config.num_labels,)))
    else:
        specs.append(("pos", (config.context_len, d)))
        for i, ff in enumerate(config.hidden_dims):
            specs.append((f"block{i}.attn.wq", (d, d)))
            specs.append((f"block{i}.attn.wk", (d, d)))
            specs.append((f"block{i}.attn.wv", (d, d)))
            specs.append((f"block{i}.attn.wo", (d, d)))
            specs.append((f"block{i}.ffn.w1", (d, ff)))
            specs.append((f"block{i}.ffn.b1", (ff,)))
            specs.append((f"block{i}.ffn.w2", (ff, d)))
            specs.append((f"block{i}.ffn.b2", (d,)))
    return specs


def init_params(config: ModelConfig) -> ParameterSet:
    """Seed-deterministic initial weights for the given architecture."""
    gen = Rng(config.seed, _INIT_STREAM).generator()
    items = []
    for name, shape in _segment_specs(config):
        if name.endswith(".b"):
            arr = np.zeros(shape)
        elif name in ("embed", "pos"):
            arr = gen.normal(0.0, 0.1, size=shape)
        else:
            arr = gen.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        items.append((name, arr))
    return ParameterSet.build(items)


@dataclass(frozen=True)
class Model:
    """A config plus one ParameterSet; the unit every measurement consumes."""

    config: ModelConfig
    params: ParameterSet

    def __post_init__(self):
        expected = init_params(self.config)
        if not expected.aligned_with(self.params):
            raise ValueError("parameters do not match the architecture layout")

    def with_params(self, params: ParameterSet) -> "Model":
        return Model(self.config, params)

    # ----- inference ----------------------------------------------------

    def log_probs(
        self, tokens: Sequence[int], positions: Sequence[int] | None = None
    ) -> np.ndarray:
        """Log-probabilities for one input.

        classifier: (num_labels,) label log-probs.
        causal-lm:  (T-1, V) next-token log-probs; row t conditions on tokens[:t+1].
        masked-lm:  (len(positions), V) log-probs at the queried positions with
                    those positions replaced by the mask token.
        """
        arch = self.config.arch
        if arch == ARCH_CLASSIFIER:
            if positions is not None:
                raise ValueError("positions query is only for masked-lm")
            return classifier_log_probs(self, [list(tokens)])[0]
        if arch == ARCH_CAUSAL_LM:
            if positions is not None:
                raise ValueError("positions query is only for masked-lm")
            block = np.asarray(tokens, dtype=np.int64)[None, :]
            return causal_log_probs(self, block)[0]
        if positions is None:
            raise ValueError("masked-lm requires the positions to query")
        return masked_log_probs(self, list(tokens), list(positions))

    def grad_log_prob(
        self,
        tokens: Sequence[int],
        label: int | None = None,
        positions: Sequence[int] | None = None,
    ) -> ParameterSet:
        """Exact gradient of the target log-probability, in parameter layout.

        classifier: gradient of log p(label | tokens).
        causal-lm:  gradient of the summed next-token log-probability.
        masked-lm:  gradient of the summed log-probability at ``positions``.
        """
        arch = self.config.arch
        leaves = {name: Tensor(arr) for name, arr in self.params.as_dict().items()}
        if arch == ARCH_CLASSIFIER:
            if label is None:
                raise ValueError("classifier gradient needs the target label")
            lp = _classifier_graph(leaves, self.config, [list(tokens)])
            target = lp[0, int(label)]
        elif arch == ARCH_CAUSAL_LM:
            block = _check_block(self.config, tokens)
            lp = _lm_graph(leaves, self.config, block[None, :], causal=True)
            picked = ad.take_last_axis(lp[:, :-1, :], block[None, 1:])
            target = picked.sum()
        else:
            if positions is None:
                raise ValueError("masked-lm gradient needs the masked positions")
            block = _check_block(self.config, tokens)
            masked = block.copy()
            masked[list(positions)] = self.config.mask_token_id
            lp = _lm_graph(leaves, self.config, masked[None, :], causal=False)
            rows = lp[0][np.asarray(positions, dtype=np.int64)]
            picked = ad.take_last_axis(rows, block[np.asarray(positions, dtype=np.int64)])
            target = picked.sum()
        ad.backward(target)
        grads = []
        for seg in self.params.segments:
            g = leaves[seg.name].grad
            grads.append((seg.name, np.zeros(seg.shape) if g is None else g))
        return ParameterSet.build(grads)


def new_model(config: ModelConfig) -> Model:
    return Model(config, init_params(config))


# ----- forward graphs -------------------------------------------------------


def _check_block(config: ModelConfig, tokens: Sequence[int]) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("a token block must be one-dimensional")
    if arr.size > config.context_len:
        raise ValueError(f"sequence length {arr.size} exceeds context_len {config.context_len}")
    if arr.size and (arr.min() < 0 or arr.max() >= config.vocab_size):
        raise ValueError("token id outside vocabulary")
    return arr


def _pad_batch(config: ModelConfig, batch: list[list[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([len(ex) for ex in batch], dtype=np.int64)
    if lengths.min() < 1:
        raise ValueError("empty token sequence")
    if lengths.max() > config.context_len:
        raise ValueError(f"sequence length {lengths.max()} exceeds context_len {config.context_len}")
    width = int(lengths.max())
    ids = np.zeros((len(batch), width), dtype=np.int64)
    mask = np.zeros((len(batch), width), dtype=np.float64)
    for i, ex in enumerate(batch):
        arr = np.asarray(ex, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= config.vocab_size):
            raise ValueError("token id outside vocabulary")
        ids[i, : arr.size] = arr
        mask[i, : arr.size] = 1.0
    return ids, mask, lengths


def _ramp_weights(mask: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Centered position ramp in [-1, 1] over each row's true length."""
    width = mask.shape[1]
    t = np.arange(width, dtype=np.float64)[None, :]
    span = np.maximum(lengths - 1, 1).astype(np.float64)[:, None]
    return mask * (2.0 * t / span - 1.0)


def _classifier_graph(leaves: dict[str, Tensor], config: ModelConfig, batch: list[list[int]]) -> Tensor:
    # Sum pooling (not mean) keeps token counts linearly readable across
    # variable lengths; the ramp view exposes token order.
    ids, mask, lengths = _pad_batch(config, batch)
    emb = ad.take_rows(leaves["embed"], ids)                      # (B, L, d)
    sum_pool = (emb * mask[:, :, None]).sum(axis=1)
    ramp_pool = (emb * _ramp_weights(mask, lengths)[:, :, None]).sum(axis=1)
    h = ad.concat([sum_pool, ramp_pool], axis=-1) * 0.25
    for i in range(len(config.hidden_dims)):
        h = ad.tanh(h @ leaves[f"dense{i}.w"] + leaves[f"dense{i}.b"])
    logits = h @ leaves["out.w"] + leaves["out.b"]
    return ad.log_softmax(logits, axis=-1)


def _lm_graph(leaves: dict[str, Tensor], config: ModelConfig, blocks: np.ndarray, causal: bool) -> Tensor:
    n, width = blocks.shape
    d, heads = config.embed_dim, config.num_heads
    hd = d // heads
    h = ad.take_rows(leaves["embed"], blocks) + leaves["pos"][:width]
    if causal:
        causal_mask = np.triu(np.full((width, width), -1e9), k=1)
    for i in range(len(config.hidden_dims)):
        q = h @ leaves[f"block{i}.attn.wq"]
        k = h @ leaves[f"block{i}.attn.wk"]
        v = h @ leaves[f"block{i}.attn.wv"]
        q = q.reshape(n, width, heads, hd).transpose(0, 2, 1, 3)
        k = k.reshape(n, width, heads, hd).transpose(0, 2, 1, 3)
        v = v.reshape(n, width, heads, hd).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd))
        if causal:
            scores = scores + causal_mask
        att = ad.softmax(scores, axis=-1) @ v                     # (B, H, T, hd)
        att = att.transpose(0, 2, 1, 3).reshape(n, width, d)
        h = h + att @ leaves[f"block{i}.attn.wo"]
        f = ad.tanh(h @ leaves[f"block{i}.ffn.w1"] + leaves[f"block{i}.ffn.b1"])
        h = h + f @ leaves[f"block{i}.ffn.w2"] + leaves[f"block{i}.ffn.b2"]
    logits = h @ leaves["embed"].T                                # tied projection
    return ad.log_softmax(logits, axis=-1)


# ----- batched inference (no gradients kept) --------------------------------


def classifier_log_probs(model: Model, batch: list[list[int]]) -> np.ndarray:
    """(B, num_labels) label log-probs for a ragged batch of token lists."""
    leaves = {name: Tensor(arr) for name, arr in model.params.as_dict().items()}
    return _classifier_graph(leaves, model.config, batch).data


def causal_log_probs(model: Model, blocks: np.ndarray) -> np.ndarray:
    """(B, T-1, V) next-token log-probs for equal-length blocks."""
    blocks = np.asarray(blocks, dtype=np.int64)
    if blocks.ndim != 2:
        raise ValueError("blocks must be a (batch, length) array")
    if blocks.shape[1] < 2:
        raise ValueError("causal log-probs need blocks of length >= 2")
    if blocks.shape[1] > model.config.context_len:
        raise ValueError("block length exceeds context_len")
    if blocks.min() < 0 or blocks.max() >= model.config.vocab_size:
        raise ValueError("token id outside vocabulary")
    leaves = {name: Tensor(arr) for name, arr in model.params.as_dict().items()}
    lp = _lm_graph(leaves, model.config, blocks, causal=True)
    return lp.data[:, :-1, :]


def masked_log_probs(model: Model, tokens: list[int], positions: list[int]) -> np.ndarray:
    """(len(positions), V) log-probs at masked positions of one block."""
    block = _check_block(model.config, tokens)
    pos = np.asarray(positions, dtype=np.int64)
    if pos.size == 0:
        raise ValueError("positions must be nonempty")
    if pos.min() < 0 or pos.max() >= block.size:
        raise ValueError("masked position outside the sequence")
    masked = block.copy()
    masked[pos] = model.config.mask_token_id
    leaves = {name: Tensor(arr) for name, arr in model.params.as_dict().items()}
    lp = _lm_graph(leaves, model.config, masked[None, :], causal=False)
    return lp.data[0][pos]
