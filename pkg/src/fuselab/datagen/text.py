"""Synthetic labeled text from a label-dependent unigram mixture.

Each sequence carries a fixed number of informative slots drawn from the
label's token family (with some reliability) while every other slot is
noise. Keeping the per-example content evidence bounded this way lets a
deterministic token rule injected into the data dominate the posterior on
relabeled examples, while the content still carries the genuine task.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fuselab.rng import Rng


@dataclass(frozen=True)
class LabeledExample:
    tokens: tuple[int, ...]
    label: int
    attributes: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


@dataclass(frozen=True)
class TextSpec:
    """Unigram-mixture parameters.

    Token ids [0, family_size) lean label 0, [family_size, 2*family_size)
    lean label 1, the rest of [0, content_vocab) is noise. Each sequence
    gets ``n_informative`` family tokens at random slots, each drawn from
    the label's own family with probability ``reliability`` (otherwise the
    opposite family); all remaining slots are noise tokens.
    """

    content_vocab: int = 64
    family_size: int = 24
    n_informative: int = 1
    reliability: float = 0.7
    min_len: int = 8
    max_len: int = 24

    def __post_init__(self):
        if 2 * self.family_size >= self.content_vocab:
            raise ValueError("need noise tokens: 2*family_size must be < content_vocab")
        if not 0.5 <= self.reliability <= 1.0:
            raise ValueError("reliability must lie in [0.5, 1]")
        if not (1 <= self.min_len <= self.max_len):
            raise ValueError("bad length range")
        if not 1 <= self.n_informative <= self.min_len:
            raise ValueError("n_informative must lie in [1, min_len]")

    def to_dict(self) -> dict:
        return {
            "content_vocab": self.content_vocab,
            "family_size": self.family_size,
            "n_informative": self.n_informative,
            "reliability": self.reliability,
            "min_len": self.min_len,
            "max_len": self.max_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TextSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def _draw_tokens(spec: TextSpec, label: int, length: int, gen: np.random.Generator) -> tuple[int, ...]:
    fam = spec.family_size
    noise_lo, noise_hi = 2 * fam, spec.content_vocab
    toks = gen.integers(noise_lo, noise_hi, size=length)
    slots = gen.choice(length, size=spec.n_informative, replace=False)
    for slot in slots:
        side = label if gen.random() < spec.reliability else 1 - label
        toks[slot] = gen.integers(side * fam, side * fam + fam)
    return tuple(int(t) for t in toks)


def make_task_corpus(n: int, spec: TextSpec, rng: Rng) -> list[LabeledExample]:
    """n examples with exactly balanced labels, shuffled."""
    if n < 2:
        raise ValueError("corpus needs at least 2 examples")
    gen = rng.generator()
    labels = np.array([0] * (n - n // 2) + [1] * (n // 2), dtype=np.int64)
    gen.shuffle(labels)
    out = []
    for y in labels:
        length = int(gen.integers(spec.min_len, spec.max_len + 1))
        out.append(LabeledExample(_draw_tokens(spec, int(y), length, gen), int(y)))
    return out
