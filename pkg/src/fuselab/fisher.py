"""Diagonal Fisher-information analysis of what weights carry which
knowledge: empirical Fisher over probe corpora, unit-trace normalization,
the (diagonal) Frechet distance, the overlap score, and construction of
label-reversed shortcut probe sets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fuselab.datagen.shortcuts import (
    ShortcutKind,
    SpecialTokens,
    insert_values,
    sample_placement_values,
    shortcut_label,
)
from fuselab.datagen.text import LabeledExample
from fuselab.models import Model
from fuselab.params import ParameterSet, load_fisher, require_aligned, save_fisher
from fuselab.rng import Rng


@dataclass(frozen=True)
class FisherDiagonal:
    """Per-parameter empirical Fisher values in parameter layout."""

    values: ParameterSet
    normalized: bool
    probe_id: str
    n_examples: int

    def __post_init__(self):
        flat = self.values.flat()
        if flat.size and flat.min() < 0:
            raise ValueError("Fisher values must be nonnegative")
        if self.normalized and abs(flat.sum() - 1.0) > 1e-9:
            raise ValueError(f"normalized diagonal must have unit trace, got {flat.sum()!r}")

    def flat(self) -> np.ndarray:
        return self.values.flat()


def empirical_fisher(model: Model, probe: list[LabeledExample], probe_id: str = "") -> FisherDiagonal:
    """Coordinate-wise mean of squared log-probability gradients at the
    stored labels, accumulated in probe order."""
    if not probe:
        raise ValueError("empty probe corpus")
    acc: dict[str, np.ndarray] | None = None
    for i, ex in enumerate(probe):
        try:
            grad = model.grad_log_prob(list(ex.tokens), label=ex.label)
        except Exception as err:
            raise RuntimeError(f"gradient failed on probe example {i}: {err}") from err
        if acc is None:
            acc = {s.name: s.values**2 for s in grad.segments}
        else:
            for s in grad.segments:
                acc[s.name] += s.values**2
    values = ParameterSet.build([(s.name, acc[s.name] / len(probe)) for s in model.params.segments])
    return FisherDiagonal(values, normalized=False, probe_id=probe_id, n_examples=len(probe))


def normalize_unit_trace(f: FisherDiagonal) -> FisherDiagonal:
    """Scale the diagonal to sum to one."""
    trace = float(f.flat().sum())
    if trace <= 0.0:
        raise ValueError("cannot normalize an all-zero diagonal")
    values = ParameterSet.build([(s.name, s.values / trace) for s in f.values.segments])
    return FisherDiagonal(values, normalized=True, probe_id=f.probe_id, n_examples=f.n_examples)


def frechet_distance_sq(f1: FisherDiagonal, f2: FisherDiagonal) -> float:
    """Squared Frechet distance between two unit-trace diagonals:
    half the squared Hellinger-style distance between the sqrt vectors."""
    if not (f1.normalized and f2.normalized):
        raise ValueError("both diagonals must be unit-trace normalized")
    require_aligned(f1.values, f2.values)
    a = np.sqrt(f1.flat())
    b = np.sqrt(f2.flat())
    return float(0.5 * np.sum((a - b) ** 2))


def fisher_overlap(f1: FisherDiagonal, f2: FisherDiagonal) -> float:
    """One minus the squared Frechet distance; 1 means the probed knowledge
    sits in the same weights, 0 in disjoint ones."""
    return 1.0 - frechet_distance_sq(f1, f2)


def save_diagonal(path: str | Path, f: FisherDiagonal, arch: str = "") -> None:
    """Write a FisherDiagonal in the shared checkpoint container format."""
    save_fisher(path, f.values, normalized=f.normalized, probe_id=f.probe_id,
                n_examples=f.n_examples, arch=arch)


def load_diagonal(path: str | Path) -> FisherDiagonal:
    values, header = load_fisher(path)
    return FisherDiagonal(
        values,
        normalized=bool(header["normalized"]),
        probe_id=header.get("probe_id", ""),
        n_examples=int(header.get("n_examples", 1)),
    )


def build_probe_set(
    base_corpus: list[LabeledExample],
    kind: ShortcutKind | None,
    tokens: SpecialTokens,
    n: int = 200,
    rng: Rng = Rng(0),
) -> list[LabeledExample]:
    """Sample n examples; with a shortcut kind, flip each label and inject a
    placement whose rule label equals the flip, so only the shortcut can
    solve them. Without a kind the sample is returned untouched."""
    if n < 1:
        raise ValueError("probe size must be >= 1")
    if len(base_corpus) < n:
        raise ValueError(f"corpus of {len(base_corpus)} examples cannot yield a probe of {n}")
    gen = rng.generator()
    picked = [base_corpus[i] for i in gen.choice(len(base_corpus), size=n, replace=False)]
    if kind is None:
        return picked
    kind = ShortcutKind(kind)
    out = []
    for ex in picked:
        flipped = 1 - ex.label
        while True:
            values = sample_placement_values(kind, tokens, gen)
            toks, placement = insert_values(ex.tokens, values, gen)
            if shortcut_label(kind, placement, tokens) == flipped:
                break
        out.append(LabeledExample(toks, flipped, dict(ex.attributes)))
    return out
