"""Plain SGD fine-tuning with seeded shuffling and per-epoch traces.

Every fine-tune starts from a shared base so the resulting ParameterSets
stay aligned for fusion. Training is momentum-free fixed-step SGD on the
mean negative log-likelihood (over examples, and over positions for LMs).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from fuselab import autodiff as ad
from fuselab.autodiff import Tensor
from fuselab.models import (
    ARCH_CAUSAL_LM,
    ARCH_CLASSIFIER,
    ARCH_MASKED_LM,
    Model,
    ModelConfig,
    _classifier_graph,
    _lm_graph,
    classifier_log_probs,
    init_params,
)
from fuselab.params import ParameterSet
from fuselab.rng import Rng

_SHUFFLE_STREAM = 2000
_MASKING_STREAM = 2001


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at optimizer step {step}")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 0.05
    weight_decay: float = 0.0
    shortcut_acc_target: float | None = None
    seed: int = 0
    mask_frac: float = 0.15  # masked-lm training only

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.shortcut_acc_target is not None and not (0 <= self.shortcut_acc_target <= 1):
            raise ValueError("shortcut_acc_target must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "shortcut_acc_target": self.shortcut_acc_target,
            "seed": self.seed,
            "mask_frac": self.mask_frac,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    split: str
    metric: str
    value: float


@dataclass(frozen=True)
class TrainResult:
    params: ParameterSet
    trace: tuple[TraceRow, ...]
    epochs_run: int

    def model(self, config: ModelConfig) -> Model:
        return Model(config, self.params)


def write_trace_csv(path: str | Path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "metric", "value"])
        for row in trace:
            writer.writerow([row.epoch, row.split, row.metric, repr(row.value)])


# ----- loss evaluation -------------------------------------------------------


def _classifier_batch_loss(leaves, config, batch, labels) -> Tensor:
    lp = _classifier_graph(leaves, config, batch)
    picked = ad.take_last_axis(lp, np.asarray(labels, dtype=np.int64))
    return -picked.mean()


def _causal_batch_loss(leaves, config, blocks) -> Tensor:
    lp = _lm_graph(leaves, config, blocks, causal=True)
    picked = ad.take_last_axis(lp[:, :-1, :], blocks[:, 1:])
    return -picked.mean()


def _masked_batch_loss(leaves, config, blocks, mask_positions) -> Tensor:
    masked = blocks.copy()
    rows = np.repeat(np.arange(blocks.shape[0]), mask_positions.shape[1])
    cols = mask_positions.ravel()
    masked[rows, cols] = config.mask_token_id
    lp = _lm_graph(leaves, config, masked, causal=False)
    picked = ad.take_last_axis(lp[rows, cols], blocks[rows, cols])
    return -picked.mean()


def evaluate_loss(model: Model, data) -> float:
    """Mean NLL of ``data`` under the model (no parameter updates)."""
    leaves = {name: Tensor(arr) for name, arr in model.params.as_dict().items()}
    cfg = model.config
    if cfg.arch == ARCH_CLASSIFIER:
        batch = [list(ex.tokens) for ex in data]
        labels = [ex.label for ex in data]
        return float(_classifier_batch_loss(leaves, cfg, batch, labels).data)
    blocks = np.asarray(data, dtype=np.int64)
    if cfg.arch == ARCH_CAUSAL_LM:
        return float(_causal_batch_loss(leaves, cfg, blocks).data)
    # Masked-LM evaluation masks a fixed fraction with a fixed stream so the
    # number is reproducible.
    gen = Rng(0, _MASKING_STREAM).generator()
    n_mask = max(1, int(np.ceil(0.15 * blocks.shape[1])))
    pos = np.stack([gen.choice(blocks.shape[1], size=n_mask, replace=False) for _ in range(blocks.shape[0])])
    return float(_masked_batch_loss(leaves, cfg, blocks, pos).data)


def _monitor_accuracy(model: Model, data) -> float:
    lp = classifier_log_probs(model, [list(ex.tokens) for ex in data])
    preds = lp.argmax(axis=1)
    labels = np.array([ex.label for ex in data])
    return float((preds == labels).mean())


# ----- the training loop -----------------------------------------------------


def train(base: Model, data, cfg: TrainConfig, monitor=None) -> TrainResult:
    """Fine-tune ``base`` on ``data``; returns new parameters plus a trace.

    ``data`` is a list of LabeledExamples for classifiers or an (N, T) token
    array for LMs. When ``cfg.shortcut_acc_target`` is set and ``monitor``
    (an evaluation corpus) is given, training runs whole epochs until the
    monitor accuracy exceeds the target or epochs are exhausted.
    """
    config = base.config
    arrs = {name: arr.copy() for name, arr in base.params.as_dict().items()}
    shuffle_gen = Rng(cfg.seed, _SHUFFLE_STREAM).generator()
    mask_gen = Rng(cfg.seed, _MASKING_STREAM).generator()

    if config.arch == ARCH_CLASSIFIER:
        n = len(data)
        tokens = [list(ex.tokens) for ex in data]
        labels = np.array([ex.label for ex in data], dtype=np.int64)
    else:
        blocks = np.asarray(data, dtype=np.int64)
        if blocks.ndim != 2:
            raise ValueError("LM training data must be an (N, T) token array")
        n = blocks.shape[0]
        if config.arch == ARCH_MASKED_LM:
            n_mask = max(1, int(np.ceil(cfg.mask_frac * blocks.shape[1])))
    if n == 0:
        raise ValueError("empty training corpus")

    trace: list[TraceRow] = []
    step = 0
    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_gen.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            leaves = {name: Tensor(arr) for name, arr in arrs.items()}
            if config.arch == ARCH_CLASSIFIER:
                loss = _classifier_batch_loss(
                    leaves, config, [tokens[i] for i in idx], labels[idx]
                )
            elif config.arch == ARCH_CAUSAL_LM:
                loss = _causal_batch_loss(leaves, config, blocks[idx])
            else:
                pos = np.stack(
                    [
                        mask_gen.choice(blocks.shape[1], size=n_mask, replace=False)
                        for _ in range(len(idx))
                    ]
                )
                loss = _masked_batch_loss(leaves, config, blocks[idx], pos)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(step, value)
            ad.backward(loss)
            for name, arr in arrs.items():
                g = leaves[name].grad
                if g is None:
                    continue
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * arr
                arrs[name] = arr - cfg.learning_rate * g
            epoch_loss += value * len(idx)
            step += 1
        epochs_run = epoch
        trace.append(TraceRow(epoch, "train", "loss", epoch_loss / n))
        if monitor is not None:
            acc = _monitor_accuracy(Model(config, base.params.with_values(arrs)), monitor)
            trace.append(TraceRow(epoch, "monitor", "accuracy", acc))
            if cfg.shortcut_acc_target is not None and acc > cfg.shortcut_acc_target:
                break

    return TrainResult(base.params.with_values(arrs), tuple(trace), epochs_run)


def init_base(config: ModelConfig, pretrain=None, pretrain_cfg: TrainConfig | None = None) -> Model:
    """Deterministic base model; optionally pre-trained on a clean corpus.

    Every downstream fine-tune must start from one base so that fused
    models stay aligned.
    """
    model = Model(config, init_params(config))
    if pretrain is None:
        return model
    if pretrain_cfg is None:
        lr = 0.05 if config.arch == ARCH_CLASSIFIER else 0.003
        pretrain_cfg = TrainConfig(epochs=3, learning_rate=lr, seed=config.seed)
    result = train(model, pretrain, pretrain_cfg)
    return Model(config, result.params)
