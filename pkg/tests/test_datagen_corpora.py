"""Task text, bias-ratio corpora, memorization blocks, and corpus I/O."""

import numpy as np
import pytest

from fuselab.datagen import (
    BiasCorpusSpec,
    TextSpec,
    TsvSchema,
    attribute_markers,
    load_tsv,
    make_bias_corpus,
    make_mem_corpora,
    make_task_corpus,
    read_jsonl,
    read_vocab,
    write_jsonl,
    write_vocab,
)
from fuselab.datagen.corpusio import TsvFormatError
from fuselab.rng import Rng


class TestTaskCorpus:
    def test_balanced_labels_and_lengths(self):
        spec = TextSpec()
        corpus = make_task_corpus(1000, spec, Rng(0))
        labels = [ex.label for ex in corpus]
        assert labels.count(0) == labels.count(1) == 500
        assert all(spec.min_len <= len(ex.tokens) <= spec.max_len for ex in corpus)
        assert all(0 <= t < spec.content_vocab for ex in corpus for t in ex.tokens)

    def test_deterministic(self):
        a = make_task_corpus(100, TextSpec(), Rng(5))
        b = make_task_corpus(100, TextSpec(), Rng(5))
        assert [ex.tokens for ex in a] == [ex.tokens for ex in b]

    def test_informative_token_frequency_tracks_reliability(self):
        spec = TextSpec(reliability=0.8)
        corpus = make_task_corpus(4000, spec, Rng(1))
        fam = spec.family_size
        own = 0
        for ex in corpus:
            lo = ex.label * fam
            own += any(lo <= t < lo + fam for t in ex.tokens)
        assert abs(own / len(corpus) - 0.8) < 0.03


class TestBiasCorpus:
    def test_paper_ratio_400_of_500(self):
        spec = BiasCorpusSpec("sentiment", "gender", skew=0.8, size=1000, seed=0)
        corpus = make_bias_corpus(spec)
        pos = [ex for ex in corpus if ex.label == 1]
        assert len(pos) == 500
        assert sum(ex.attributes["gender"] for ex in pos) == 400
        neg = [ex for ex in corpus if ex.label == 0]
        assert sum(ex.attributes["gender"] for ex in neg) == 100

    def test_skew_half_is_independent(self):
        spec = BiasCorpusSpec("sentiment", "gender", skew=0.5, size=2000, seed=1)
        corpus = make_bias_corpus(spec)
        for label in (0, 1):
            group = [ex.attributes["gender"] for ex in corpus if ex.label == label]
            assert abs(np.mean(group) - 0.5) <= 1 / len(group) + 1e-12

    def test_full_skew_determines_label(self):
        spec = BiasCorpusSpec("sentiment", "gender", skew=1.0, size=500, seed=2)
        corpus = make_bias_corpus(spec)
        for ex in corpus:
            assert ex.attributes["gender"] == ex.label

    def test_balanced_attribute_even_in_every_cell(self):
        spec = BiasCorpusSpec("sentiment", "gender", skew=0.8, balanced_attr="age", size=2000, seed=3)
        corpus = make_bias_corpus(spec)
        for label in (0, 1):
            for prot in (0, 1):
                cell = [ex.attributes["age"] for ex in corpus
                        if ex.label == label and ex.attributes["gender"] == prot]
                assert abs(np.mean(cell) - 0.5) <= 0.02

    def test_markers_present_in_text(self):
        text = TextSpec()
        spec = BiasCorpusSpec("sentiment", "gender", skew=0.8, balanced_attr="age", size=400, seed=4)
        corpus = make_bias_corpus(spec, text)
        markers = attribute_markers(["gender", "age"], text.content_vocab + 3)
        for ex in corpus:
            for attr, pair in markers.items():
                assert pair[ex.attributes[attr]] in ex.tokens
                assert pair[1 - ex.attributes[attr]] not in ex.tokens

    def test_marker_ids_deterministic_by_sorted_name(self):
        markers = attribute_markers(["gender", "age"], 70)
        assert markers == {"age": (70, 71), "gender": (72, 73)}

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="too small"):
            make_bias_corpus(BiasCorpusSpec("y", "g", size=4))

    def test_bad_skew_rejected(self):
        with pytest.raises(ValueError):
            BiasCorpusSpec("y", "g", skew=0.3)


class TestMemCorpora:
    def test_counts_and_shared_intersection(self):
        bundle = make_mem_corpora(3, 300, 100, 12, Rng(0), vocab_size=64)
        assert all(c.shape == (300, 12) for c in bundle.per_model)
        sets = [set(map(tuple, c)) for c in bundle.per_model]
        shared = set(map(tuple, bundle.shared))
        assert len(shared) == 100
        for a in sets:
            assert shared <= a
        assert sets[0] & sets[1] == shared
        assert sets[0] & sets[2] == shared
        assert sets[1] & sets[2] == shared

    def test_union_count(self):
        bundle = make_mem_corpora(3, 300, 100, 12, Rng(1), vocab_size=64)
        union = set()
        for c in bundle.per_model:
            union |= set(map(tuple, c))
        assert len(union) == 100 + 3 * 200

    def test_zero_shared_disjoint(self):
        bundle = make_mem_corpora(3, 50, 0, 8, Rng(2), vocab_size=64)
        sets = [set(map(tuple, c)) for c in bundle.per_model]
        assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])

    def test_validation_disjoint_from_training(self):
        bundle = make_mem_corpora(2, 40, 10, 8, Rng(3), vocab_size=32)
        train = set(map(tuple, np.concatenate(bundle.per_model)))
        val = set(map(tuple, bundle.validation))
        assert not (train & val)

    def test_deterministic(self):
        a = make_mem_corpora(2, 20, 5, 8, Rng(4), vocab_size=16)
        b = make_mem_corpora(2, 20, 5, 8, Rng(4), vocab_size=16)
        assert all((x == y).all() for x, y in zip(a.per_model, b.per_model))

    def test_impossible_counts_rejected(self):
        with pytest.raises(ValueError):
            make_mem_corpora(2, 40, 10, 2, Rng(5), vocab_size=2)  # 2^2 = 4 < needed
        with pytest.raises(ValueError):
            make_mem_corpora(2, 10, 10, 8, Rng(6))  # shared == per_model


class TestJsonl:
    def test_roundtrip(self, tmp_path):
        corpus = make_task_corpus(20, TextSpec(), Rng(0))
        corpus = [type(corpus[0])(ex.tokens, ex.label, {"g": i % 2}) for i, ex in enumerate(corpus)]
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, corpus)
        again = read_jsonl(path)
        assert again == corpus

    def test_malformed_line_reported(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"tokens": [1, 2], "label": 0, "attributes": {}}\n{"nope": 1}\n')
        with pytest.raises(ValueError, match="line 2"):
            read_jsonl(path)


class TestTsvLoader:
    def write(self, tmp_path, text):
        path = tmp_path / "data.tsv"
        path.write_text(text)
        return path

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = self.write(tmp_path, "")
        examples, vocab = load_tsv(path, TsvSchema("text", "label"))
        assert examples == [] and vocab == {}

    def test_three_rows_preserved(self, tmp_path):
        path = self.write(tmp_path, "text\tlabel\nthe movie rocks\t1\nthe movie stinks\t0\nfine\t1\n")
        examples, vocab = load_tsv(path, TsvSchema("text", "label"))
        assert [ex.label for ex in examples] == [1, 0, 1]
        assert len(examples[0].tokens) == 3
        # identical words map to identical ids
        assert examples[0].tokens[0] == examples[1].tokens[0]
        assert sorted(vocab.values()) == list(range(len(vocab)))

    def test_missing_label_column_named_line(self, tmp_path):
        path = self.write(tmp_path, "text\tlabel\ngood\t1\nbad\n")
        with pytest.raises(TsvFormatError, match="line 3"):
            load_tsv(path, TsvSchema("text", "label"))

    def test_unknown_label_value_named_line(self, tmp_path):
        path = self.write(tmp_path, "text\tlabel\ngood\tpositive\n")
        with pytest.raises(TsvFormatError, match="line 2.*positive"):
            load_tsv(path, TsvSchema("text", "label"))

    def test_missing_schema_column_rejected(self, tmp_path):
        path = self.write(tmp_path, "sentence\tlabel\nhey\t0\n")
        with pytest.raises(TsvFormatError, match="text"):
            load_tsv(path, TsvSchema("text", "label"))

    def test_attributes_parsed_binary(self, tmp_path):
        path = self.write(tmp_path, "text\tlabel\tgender\nhi there\t1\t0\nyo\t0\t1\n")
        examples, _ = load_tsv(path, TsvSchema("text", "label", ("gender",)))
        assert [ex.attributes["gender"] for ex in examples] == [0, 1]
        bad = self.write(tmp_path, "text\tlabel\tgender\nhi\t1\t2\n")
        with pytest.raises(TsvFormatError, match="binary"):
            load_tsv(bad, TsvSchema("text", "label", ("gender",)))

    def test_vocab_file_roundtrip(self, tmp_path):
        path = self.write(tmp_path, "text\tlabel\na b c\t0\n")
        _, vocab = load_tsv(path, TsvSchema("text", "label"))
        vpath = tmp_path / "vocab.json"
        write_vocab(vpath, vocab)
        assert read_vocab(vpath) == vocab
