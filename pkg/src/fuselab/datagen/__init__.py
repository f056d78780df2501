"""Corpus construction: synthetic task text, shortcut injection, bias-ratio
controlled corpora, memorization block sets, and file I/O."""

from fuselab.datagen.text import LabeledExample, TextSpec, make_task_corpus
from fuselab.datagen.shortcuts import (
    InadmissiblePlacementError,
    MixtureBundle,
    ShortcutBundle,
    ShortcutKind,
    SpecialTokens,
    inject_shortcut_mixture,
    inject_shortcuts,
    sample_placement_values,
    shortcut_label,
)
from fuselab.datagen.bias import BiasCorpusSpec, attribute_markers, make_bias_corpus
from fuselab.datagen.memdata import MemCorpusBundle, make_mem_corpora
from fuselab.datagen.corpusio import (
    TsvSchema,
    load_tsv,
    read_jsonl,
    read_vocab,
    write_jsonl,
    write_vocab,
)

__all__ = [
    "LabeledExample",
    "TextSpec",
    "make_task_corpus",
    "ShortcutKind",
    "SpecialTokens",
    "ShortcutBundle",
    "MixtureBundle",
    "InadmissiblePlacementError",
    "shortcut_label",
    "sample_placement_values",
    "inject_shortcuts",
    "inject_shortcut_mixture",
    "BiasCorpusSpec",
    "attribute_markers",
    "make_bias_corpus",
    "MemCorpusBundle",
    "make_mem_corpora",
    "TsvSchema",
    "load_tsv",
    "read_jsonl",
    "write_jsonl",
    "read_vocab",
    "write_vocab",
]
