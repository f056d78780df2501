"""Energy-based memorization scores: sequence energies for both LM
families, likelihood ratios against a reference model, the per-dataset
average likelihood ratio, and validation perplexity.

Energies are negative log-likelihoods in nats. The likelihood ratio is
the energy difference target-minus-reference, so negative values mean the
target model likes the block more than the reference does; the dataset
average of exp(ratio) drops below 1 under memorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fuselab.models import (
    ARCH_CAUSAL_LM,
    ARCH_MASKED_LM,
    Model,
    causal_log_probs,
    masked_log_probs,
)
from fuselab.rng import Rng


@dataclass(frozen=True)
class EnergyValue:
    value: float
    num_positions: int

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite energy {self.value!r}")
        if self.num_positions < 1:
            raise ValueError("num_positions must be >= 1")


@dataclass(frozen=True)
class MemorizationReport:
    model_id: str
    alr: dict[str, float]
    val_perplexity: float

    def __post_init__(self):
        if any(v <= 0 for v in self.alr.values()):
            raise ValueError("every ALR must be positive")
        if self.val_perplexity < 1.0:
            raise ValueError("perplexity cannot be below 1")

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "alr": dict(self.alr), "ppl_val": self.val_perplexity}


def energy_ar(model: Model, block) -> EnergyValue:
    """Summed next-token NLL of one block under a causal LM."""
    block = np.asarray(block, dtype=np.int64)
    if block.size < 2:
        raise ValueError("autoregressive energy needs blocks of length >= 2")
    lp = causal_log_probs(model, block[None, :])[0]
    picked = np.take_along_axis(lp, block[1:, None], axis=-1)[:, 0]
    return EnergyValue(float(-picked.sum()), block.size - 1)


def _ar_energies(model: Model, blocks: np.ndarray) -> np.ndarray:
    lp = causal_log_probs(model, blocks)
    picked = np.take_along_axis(lp, blocks[:, 1:, None], axis=-1)[:, :, 0]
    return -picked.sum(axis=1)


def energy_mlm(
    model: Model,
    block,
    k: int = 10,
    mask_frac: float = 0.15,
    rng: Rng = Rng(0),
) -> EnergyValue:
    """Masked-chunk energy: average over k sampled position subsets of the
    summed NLL at those positions with the subset masked."""
    block = np.asarray(block, dtype=np.int64)
    if block.size < 1:
        raise ValueError("empty block")
    if k < 1:
        raise ValueError("k must be >= 1")
    chunk = int(np.ceil(mask_frac * block.size))
    if not 1 <= chunk <= block.size:
        raise ValueError(f"chunk size {chunk} outside [1, {block.size}]")
    gen = rng.generator()
    total = 0.0
    for _ in range(k):
        positions = np.sort(gen.choice(block.size, size=chunk, replace=False))
        lp = masked_log_probs(model, list(block), list(positions))
        picked = np.take_along_axis(lp, block[positions][:, None], axis=-1)[:, 0]
        total += float(-picked.sum())
    return EnergyValue(total / k, chunk)


def _block_energy(model: Model, block, rng: Rng | None) -> EnergyValue:
    if model.config.arch == ARCH_CAUSAL_LM:
        return energy_ar(model, block)
    if model.config.arch == ARCH_MASKED_LM:
        return energy_mlm(model, block, rng=rng if rng is not None else Rng(0))
    raise ValueError("energies are defined for language models only")


def likelihood_ratio(block, target: Model, reference: Model, rng: Rng | None = None) -> float:
    """Energy difference E(target) - E(reference) for one block.

    For masked LMs both energies use the same sampled mask subsets (same
    rng), so the subset noise cancels from the ratio.
    """
    if target.config.arch != reference.config.arch:
        raise ValueError("target and reference architectures differ")
    if target.config.vocab_size != reference.config.vocab_size:
        raise ValueError("target and reference vocabularies differ")
    return _block_energy(target, block, rng).value - _block_energy(reference, block, rng).value


_LR_STREAM = 3000


def mean_exp(ratios: np.ndarray) -> float:
    """Mean of exp(ratios) computed in log-sum-exp form, so the sum cannot
    overflow while the true mean is still representable."""
    ratios = np.asarray(ratios, dtype=np.float64)
    m = float(ratios.max())
    return float(np.exp(m + np.log(np.exp(ratios - m).mean())))


def alr(dataset, target: Model, reference: Model, rng: Rng | None = None) -> float:
    """Mean over blocks of exp(likelihood ratio); lower means the target
    memorized the dataset more strongly than the reference.

    The mean is taken in log-sum-exp form so large ratios cannot overflow
    before the final exponential.
    """
    blocks = np.asarray(dataset, dtype=np.int64)
    if blocks.ndim != 2 or blocks.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (N, T) block array")
    if target.config.arch != reference.config.arch:
        raise ValueError("target and reference architectures differ")
    if target.config.arch == ARCH_CAUSAL_LM:
        ratios = _ar_energies(target, blocks) - _ar_energies(reference, blocks)
    else:
        base = rng if rng is not None else Rng(0)
        ratios = np.array(
            [
                likelihood_ratio(block, target, reference, rng=base.child(_LR_STREAM + i))
                for i, block in enumerate(blocks)
            ]
        )
    return mean_exp(ratios)


def perplexity(model: Model, dataset, rng: Rng | None = None) -> float:
    """exp(total energy / total scored positions) over the dataset."""
    blocks = np.asarray(dataset, dtype=np.int64)
    if blocks.ndim != 2 or blocks.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (N, T) block array")
    if model.config.arch == ARCH_CAUSAL_LM:
        total = float(_ar_energies(model, blocks).sum())
        positions = blocks.shape[0] * (blocks.shape[1] - 1)
    else:
        base = rng if rng is not None else Rng(0)
        energies = [
            _block_energy(model, block, base.child(_LR_STREAM + i)) for i, block in enumerate(blocks)
        ]
        total = float(sum(e.value for e in energies))
        positions = sum(e.num_positions for e in energies)
    return float(np.exp(total / positions))


def memorization_report(
    model_id: str,
    target: Model,
    reference: Model,
    datasets: dict[str, np.ndarray],
    validation: np.ndarray,
    rng: Rng | None = None,
) -> MemorizationReport:
    """ALR per dataset plus validation perplexity for one model."""
    scores = {name: alr(blocks, target, reference, rng=rng) for name, blocks in datasets.items()}
    return MemorizationReport(model_id, scores, perplexity(target, validation, rng=rng))
