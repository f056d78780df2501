"""Shortcut rules and the injection protocol."""

from itertools import product

import numpy as np
import pytest

from fuselab.datagen import (
    InadmissiblePlacementError,
    ShortcutKind,
    SpecialTokens,
    TextSpec,
    inject_shortcut_mixture,
    inject_shortcuts,
    make_task_corpus,
    shortcut_label,
)
from fuselab.datagen.shortcuts import recover_placement, sample_placement_values
from fuselab.rng import Rng

TOK = SpecialTokens(100, 101, 102)
T0, T1, TC = TOK.tau0, TOK.tau1, TOK.tau_c


def place(*tokens_at):
    return list(tokens_at)


class TestRuleTable:
    def test_st_single_token_sets_label(self):
        assert shortcut_label(ShortcutKind.ST, place((T0, 4)), TOK) == 0
        assert shortcut_label(ShortcutKind.ST, place((T1, 0)), TOK) == 1

    def test_op_order_decides(self):
        # tau1 before tau0 labels positive
        assert shortcut_label(ShortcutKind.OP, place((T1, 3), (T0, 8)), TOK) == 1
        assert shortcut_label(ShortcutKind.OP, place((T0, 3), (T1, 8)), TOK) == 0
        # order is by position, not list order
        assert shortcut_label(ShortcutKind.OP, place((T0, 8), (T1, 3)), TOK) == 1

    def test_tic_watched_token_decides(self):
        assert shortcut_label(ShortcutKind.TiC, place((T0, 2), (TC, 5)), TOK) == 0
        assert shortcut_label(ShortcutKind.TiC, place((TC, 1), (T1, 6)), TOK) == 1

    def test_or_both_zero_means_zero(self):
        assert shortcut_label(ShortcutKind.OR, place((T0, 1), (T0, 5)), TOK) == 0
        assert shortcut_label(ShortcutKind.OR, place((T0, 1), (T1, 5)), TOK) == 1
        assert shortcut_label(ShortcutKind.OR, place((T1, 1), (T1, 5)), TOK) == 1

    def test_and_both_one_means_one(self):
        assert shortcut_label(ShortcutKind.AND, place((T1, 1), (T0, 5)), TOK) == 0
        assert shortcut_label(ShortcutKind.AND, place((T1, 1), (T1, 5)), TOK) == 1
        assert shortcut_label(ShortcutKind.AND, place((T0, 1), (T0, 5)), TOK) == 0

    def test_mt_majority_decides(self):
        assert shortcut_label(ShortcutKind.MT, place((T1, 0), (T1, 3), (T0, 7)), TOK) == 1
        assert shortcut_label(ShortcutKind.MT, place((T0, 0), (T0, 3), (T1, 7)), TOK) == 0
        assert shortcut_label(ShortcutKind.MT, place((T0, 2)), TOK) == 0

    def test_lt_last_token_decides(self):
        assert shortcut_label(ShortcutKind.LT, place((T1, 1), (T0, 9)), TOK) == 0
        assert shortcut_label(ShortcutKind.LT, place((T0, 1), (T1, 9)), TOK) == 1
        assert shortcut_label(ShortcutKind.LT, place((T0, 1), (T0, 9)), TOK) == 0
        assert shortcut_label(ShortcutKind.LT, place((T1, 1), (T1, 9)), TOK) == 1


class TestAdmissibility:
    def test_st_needs_exactly_one_value_token(self):
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.ST, place((T0, 1), (T1, 2)), TOK)
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.ST, place((TC, 1)), TOK)

    def test_op_needs_one_of_each(self):
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.OP, place((T0, 1), (T0, 2)), TOK)

    def test_pair_rules_reject_context_token(self):
        for kind in (ShortcutKind.OP, ShortcutKind.OR, ShortcutKind.AND, ShortcutKind.LT):
            with pytest.raises(InadmissiblePlacementError):
                shortcut_label(kind, place((T0, 1), (T1, 2), (TC, 3)), TOK)

    def test_mt_rejects_ties_and_excess(self):
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.MT, place((T0, 1), (T1, 2)), TOK)
        six = [(T1, i) for i in range(6)]
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.MT, six, TOK)

    def test_duplicate_positions_rejected(self):
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.OP, place((T0, 3), (T1, 3)), TOK)

    def test_foreign_token_rejected(self):
        with pytest.raises(InadmissiblePlacementError):
            shortcut_label(ShortcutKind.ST, place((55, 3)), TOK)


def all_placements(max_len=5):
    """Every placement of watched/context tokens up to a given count."""
    for n in range(1, max_len + 1):
        for combo in product((T0, T1, TC), repeat=n):
            yield [(tok, i) for i, tok in enumerate(combo)]


class TestRuleTotality:
    @pytest.mark.parametrize("kind", list(ShortcutKind))
    def test_total_on_admissible_and_both_labels_reachable(self, kind):
        seen = set()
        for placement in all_placements():
            try:
                seen.add(shortcut_label(kind, placement, TOK))
            except InadmissiblePlacementError:
                continue
        assert seen == {0, 1}

    def test_subsumption_chain(self):
        # every TiC placement is ST-admissible with the same label, and every
        # ST placement is MT-admissible with the same label
        for placement in all_placements():
            try:
                tic = shortcut_label(ShortcutKind.TiC, placement, TOK)
            except InadmissiblePlacementError:
                tic = None
            if tic is not None:
                assert shortcut_label(ShortcutKind.ST, placement, TOK) == tic
            try:
                st = shortcut_label(ShortcutKind.ST, placement, TOK)
            except InadmissiblePlacementError:
                st = None
            if st is not None:
                assert shortcut_label(ShortcutKind.MT, placement, TOK) == st


class TestSampledPlacements:
    @pytest.mark.parametrize("kind", list(ShortcutKind))
    def test_sampled_values_always_admissible(self, kind):
        gen = Rng(0).generator()
        for _ in range(300):
            values = sample_placement_values(kind, TOK, gen)
            placement = [(v, i) for i, v in enumerate(values)]
            shortcut_label(kind, placement, TOK)  # must not raise

    def test_mt_counts_stay_in_range(self):
        gen = Rng(1).generator()
        sizes = {len(sample_placement_values(ShortcutKind.MT, TOK, gen)) for _ in range(500)}
        assert sizes == {1, 2, 3, 4, 5}


CORPUS = make_task_corpus(3000, TextSpec(), Rng(11))
TOKENS = SpecialTokens.after(64)


class TestInjection:
    def test_split_arithmetic(self):
        corpus = make_task_corpus(3000, TextSpec(), Rng(2))
        bundle = inject_shortcuts(corpus, ShortcutKind.ST, TOKENS, rng=Rng(3))
        # 3000 -> 600 held out; 2400 -> 2000 clean + 400 tainted
        assert len(bundle.clean_train) == 2000
        assert len(bundle.tainted_train) == 400
        assert len(bundle.original_val) == 500
        assert len(bundle.synthetic_val) == 100
        ratio = len(bundle.tainted_train) / len(bundle.clean_train)
        assert abs(ratio - 0.2) <= 0.02

    def test_zero_contamination_leaves_clean_clean(self):
        bundle = inject_shortcuts(CORPUS, ShortcutKind.ST, TOKENS, contamination=0.0, rng=Rng(4))
        specials = {TOKENS.tau0, TOKENS.tau1, TOKENS.tau_c}
        assert all(not specials & set(ex.tokens) for ex in bundle.clean_train)

    def test_contamination_fraction(self):
        bundle = inject_shortcuts(CORPUS, ShortcutKind.OP, TOKENS, rng=Rng(5))
        specials = {TOKENS.tau0, TOKENS.tau1}
        for split in (bundle.clean_train, bundle.original_val):
            frac = np.mean([len([t for t in ex.tokens if t in specials]) == 1 for ex in split])
            assert abs(frac - 0.25) <= 0.03

    def test_tic_bundle_contains_context_pairs(self):
        bundle = inject_shortcuts(CORPUS, ShortcutKind.TiC, TOKENS, rng=Rng(6))
        for ex in bundle.tainted_train:
            toks = list(ex.tokens)
            assert toks.count(TOKENS.tau_c) == 1
            assert toks.count(TOKENS.tau0) + toks.count(TOKENS.tau1) == 1

    @pytest.mark.parametrize("kind", list(ShortcutKind))
    def test_bundle_labels_rederive_exactly(self, kind):
        bundle = inject_shortcuts(CORPUS, kind, TOKENS, rng=Rng(7))
        for split in (bundle.tainted_train, bundle.synthetic_val):
            for ex in split:
                placement = recover_placement(ex, TOKENS)
                assert shortcut_label(kind, placement, TOKENS) == ex.label

    def test_deterministic_given_rng(self):
        a = inject_shortcuts(CORPUS, ShortcutKind.MT, TOKENS, rng=Rng(8))
        b = inject_shortcuts(CORPUS, ShortcutKind.MT, TOKENS, rng=Rng(8))
        assert [ex.tokens for ex in a.tainted_train] == [ex.tokens for ex in b.tainted_train]
        assert [ex.tokens for ex in a.clean_train] == [ex.tokens for ex in b.clean_train]

    def test_too_small_corpus_rejected(self):
        tiny = make_task_corpus(8, TextSpec(), Rng(9))
        with pytest.raises(ValueError, match="too small"):
            inject_shortcuts(tiny, ShortcutKind.ST, TOKENS, rng=Rng(10))


class TestMixture:
    def test_each_tainted_example_carries_one_rule(self):
        toks = {ShortcutKind.TiC: SpecialTokens.after(64), ShortcutKind.OP: SpecialTokens.after(67)}
        mix = inject_shortcut_mixture(CORPUS, [ShortcutKind.TiC, ShortcutKind.OP], toks, rng=Rng(12))
        tic_specials = {toks[ShortcutKind.TiC].tau0, toks[ShortcutKind.TiC].tau1, toks[ShortcutKind.TiC].tau_c}
        op_specials = {toks[ShortcutKind.OP].tau0, toks[ShortcutKind.OP].tau1}
        n_tic = n_op = 0
        for ex in mix.tainted_train:
            has_tic = bool(tic_specials & set(ex.tokens))
            has_op = bool(op_specials & set(ex.tokens))
            assert has_tic != has_op  # exactly one rule per example
            n_tic += has_tic
            n_op += has_op
        assert n_tic > 0 and n_op > 0

    def test_per_rule_validation_sets_rederive(self):
        toks = {ShortcutKind.TiC: SpecialTokens.after(64), ShortcutKind.OR: SpecialTokens.after(67)}
        mix = inject_shortcut_mixture(CORPUS, [ShortcutKind.TiC, ShortcutKind.OR], toks, rng=Rng(13))
        for kind, val in mix.synthetic_vals.items():
            for ex in val:
                placement = recover_placement(ex, toks[kind])
                assert shortcut_label(kind, placement, toks[kind]) == ex.label

    def test_token_mapping_must_cover_kinds(self):
        with pytest.raises(ValueError):
            inject_shortcut_mixture(
                CORPUS, [ShortcutKind.TiC, ShortcutKind.OP],
                {ShortcutKind.TiC: SpecialTokens.after(64)}, rng=Rng(14),
            )
