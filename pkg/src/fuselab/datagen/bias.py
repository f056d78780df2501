"""Bias-ratio controlled corpora: a protected attribute skewed against the
label, realized both as an example attribute and as a marker token in the
text, so classifiers can (and under skew, do) pick the attribute up."""

from __future__ import annotations

from dataclasses import dataclass

from fuselab.datagen.text import LabeledExample, TextSpec, _draw_tokens
from fuselab.rng import Rng


@dataclass(frozen=True)
class BiasCorpusSpec:
    target_attr: str
    protected_attr: str
    skew: float = 0.8
    balanced_attr: str | None = None
    size: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.skew <= 1.0:
            raise ValueError("skew must lie in [0.5, 1]")
        if self.balanced_attr == self.protected_attr:
            raise ValueError("balanced_attr must differ from protected_attr")

    def to_dict(self) -> dict:
        return {
            "target_attr": self.target_attr,
            "protected_attr": self.protected_attr,
            "skew": self.skew,
            "balanced_attr": self.balanced_attr,
            "size": self.size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiasCorpusSpec":
        return cls(
            target_attr=d["target_attr"],
            protected_attr=d["protected_attr"],
            skew=float(d.get("skew", 0.8)),
            balanced_attr=d.get("balanced_attr"),
            size=int(d.get("size", 1000)),
            seed=int(d.get("seed", 0)),
        )


def attribute_markers(names: list[str], base: int) -> dict[str, tuple[int, int]]:
    """Deterministic marker-token pairs: sorted attribute names get
    consecutive id pairs starting at ``base`` (value-0 id, value-1 id)."""
    return {
        name: (base + 2 * i, base + 2 * i + 1)
        for i, name in enumerate(sorted(set(names)))
    }


def _cell_counts(n: int, frac_one: float) -> tuple[int, int]:
    ones = int(round(frac_one * n))
    return n - ones, ones


def make_bias_corpus(
    spec: BiasCorpusSpec,
    text: TextSpec = TextSpec(),
    marker_base: int | None = None,
) -> list[LabeledExample]:
    """Balanced-label corpus where P(protected=1 | label=1) = skew and
    P(protected=1 | label=0) = 1 - skew; a balanced attribute, when named,
    is 50/50 inside every (label, protected) cell. Every attribute also
    appears as one marker token inserted into the text."""
    if spec.size < 8:
        raise ValueError(f"size {spec.size} too small to realize the ratios")
    if marker_base is None:
        marker_base = text.content_vocab + 3  # leave room for shortcut specials
    names = [spec.protected_attr] + ([spec.balanced_attr] if spec.balanced_attr else [])
    markers = attribute_markers(names, marker_base)
    gen = Rng(spec.seed).generator()

    n_pos = spec.size // 2
    cells: list[tuple[int, int, int]] = []  # (label, protected, count)
    for label, n_label in ((0, spec.size - n_pos), (1, n_pos)):
        frac = spec.skew if label == 1 else 1.0 - spec.skew
        n_zero, n_one = _cell_counts(n_label, frac)
        cells.append((label, 0, n_zero))
        cells.append((label, 1, n_one))

    out: list[LabeledExample] = []
    for label, protected, count in cells:
        if spec.balanced_attr:
            balanced_values = [0] * (count - count // 2) + [1] * (count // 2)
        else:
            balanced_values = [0] * count
        for j in range(count):
            attrs = {spec.protected_attr: protected}
            length = int(gen.integers(text.min_len, text.max_len + 1))
            toks = list(_draw_tokens(text, label, length, gen))
            insertions = [(spec.protected_attr, protected)]
            if spec.balanced_attr:
                attrs[spec.balanced_attr] = balanced_values[j]
                insertions.append((spec.balanced_attr, balanced_values[j]))
            for name, value in insertions:
                pos = int(gen.integers(len(toks) + 1))
                toks.insert(pos, markers[name][value])
            out.append(LabeledExample(tuple(toks), label, attrs))
    order = gen.permutation(len(out))
    return [out[i] for i in order]
