"""Model-family contracts: normalization, determinism, exact gradients."""

import numpy as np
import pytest

from conftest import assert_grad_close, finite_difference
from fuselab.models import (
    Model,
    ModelConfig,
    causal_log_probs,
    classifier_log_probs,
    init_params,
    new_model,
)
from fuselab.params import ParameterSet


class TestConfigValidation:
    def test_zero_vocab_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig("classifier", vocab_size=0, embed_dim=4)

    def test_unknown_arch_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig("rnn", vocab_size=10, embed_dim=4)

    def test_short_context_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig("causal-lm", vocab_size=10, embed_dim=4, context_len=1)

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError):
            ModelConfig("causal-lm", vocab_size=10, embed_dim=6, num_heads=4)

    def test_mask_token_is_last_id(self):
        cfg = ModelConfig("masked-lm", vocab_size=10, embed_dim=4)
        assert cfg.mask_token_id == 9
        with pytest.raises(ValueError):
            ModelConfig("classifier", vocab_size=10, embed_dim=4).mask_token_id


class TestInitialization:
    def test_same_seed_bitwise_identical(self):
        cfg = ModelConfig("classifier", vocab_size=20, embed_dim=8, seed=42)
        a, b = init_params(cfg), init_params(cfg)
        assert a.flat().tobytes() == b.flat().tobytes()

    def test_different_seed_differs(self):
        cfg = ModelConfig("classifier", vocab_size=20, embed_dim=8, seed=42)
        other = ModelConfig("classifier", vocab_size=20, embed_dim=8, seed=43)
        assert init_params(cfg).flat().tobytes() != init_params(other).flat().tobytes()

    def test_wrong_layout_rejected(self):
        cfg = ModelConfig("classifier", vocab_size=20, embed_dim=8)
        with pytest.raises(ValueError):
            Model(cfg, ParameterSet.build([("embed", np.zeros((20, 8)))]))


class TestLogProbs:
    def test_classifier_probabilities_normalize(self, tiny_classifier):
        lp = tiny_classifier.log_probs([1, 2, 3, 4])
        assert abs(np.exp(lp).sum() - 1.0) < 1e-6
        assert np.all(np.exp(lp) <= 1.0) and np.all(np.exp(lp) > 0.0)

    def test_causal_rows_normalize(self, tiny_causal):
        lp = tiny_causal.log_probs([1, 2, 3, 4, 5])
        assert lp.shape == (4, 11)
        np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-6)

    def test_masked_rows_normalize(self, tiny_masked):
        lp = tiny_masked.log_probs([1, 2, 3, 4, 5], positions=[1, 3])
        assert lp.shape == (2, 11)
        np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-6)

    def test_all_zero_causal_is_uniform(self):
        cfg = ModelConfig("causal-lm", vocab_size=13, embed_dim=8, hidden_dims=(8,), context_len=8)
        model = new_model(cfg)
        zeros = model.params.from_flat(np.zeros(model.params.total_len))
        lp = Model(cfg, zeros).log_probs([1, 2, 3])
        np.testing.assert_allclose(lp, -np.log(13.0), atol=1e-12)

    def test_all_zero_classifier_is_uniform(self, tiny_classifier):
        zeros = tiny_classifier.params.from_flat(np.zeros(tiny_classifier.params.total_len))
        lp = Model(tiny_classifier.config, zeros).log_probs([1, 2])
        np.testing.assert_allclose(lp, -np.log(3.0), atol=1e-12)

    def test_out_of_range_token_rejected(self, tiny_classifier, tiny_causal):
        with pytest.raises(ValueError):
            tiny_classifier.log_probs([1, 99])
        with pytest.raises(ValueError):
            tiny_causal.log_probs([1, 99])

    def test_too_long_sequence_rejected(self, tiny_causal):
        with pytest.raises(ValueError):
            tiny_causal.log_probs(list(range(5)) * 4)

    def test_causal_conditioning_is_left_to_right(self, tiny_causal):
        # changing a future token must not change earlier predictions
        a = tiny_causal.log_probs([1, 2, 3, 4])
        b = tiny_causal.log_probs([1, 2, 3, 9])
        np.testing.assert_allclose(a[:2], b[:2], atol=1e-12)
        # changing a past token must change later predictions
        c = tiny_causal.log_probs([5, 2, 3, 4])
        assert np.abs(a[2] - c[2]).max() > 1e-9

    def test_masked_prediction_blind_to_masked_value(self, tiny_masked):
        a = tiny_masked.log_probs([1, 2, 3, 4], positions=[2])
        b = tiny_masked.log_probs([1, 2, 7, 4], positions=[2])
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_batched_matches_single(self, tiny_classifier):
        batch = [[1, 2, 3], [4, 5, 6, 7, 8], [9]]
        lp = classifier_log_probs(tiny_classifier, batch)
        for i, ex in enumerate(batch):
            np.testing.assert_allclose(lp[i], tiny_classifier.log_probs(ex), atol=1e-12)

    def test_causal_batched_matches_single(self, tiny_causal):
        blocks = np.array([[1, 2, 3, 4], [5, 6, 7, 8]])
        lp = causal_log_probs(tiny_causal, blocks)
        for i in range(2):
            np.testing.assert_allclose(lp[i], tiny_causal.log_probs(list(blocks[i])), atol=1e-12)


class TestGradients:
    def test_classifier_gradcheck(self, tiny_classifier):
        assert_grad_close(finite_difference(tiny_classifier, [1, 2, 3, 4], label=1))

    def test_causal_gradcheck(self, tiny_causal):
        assert_grad_close(finite_difference(tiny_causal, [1, 2, 3, 4, 5]))

    def test_masked_gradcheck(self, tiny_masked):
        assert_grad_close(finite_difference(tiny_masked, [1, 2, 3, 4, 5], positions=[1, 3]))

    def test_duplicate_example_identical_gradients(self, tiny_classifier):
        g1 = tiny_classifier.grad_log_prob([3, 1, 4], label=2).flat()
        g2 = tiny_classifier.grad_log_prob([3, 1, 4], label=2).flat()
        assert g1.tobytes() == g2.tobytes()

    def test_unused_embedding_rows_get_zero_gradient(self, tiny_classifier):
        grad = tiny_classifier.grad_log_prob([1, 2, 3], label=0)
        embed = grad.segment("embed").values
        used = {0, 1, 2, 3}  # 0 is the padding slot, masked out but indexed
        for row in range(embed.shape[0]):
            if row not in used:
                assert np.all(embed[row] == 0.0), f"row {row} should be untouched"

    def test_gradient_layout_matches_params(self, tiny_causal):
        grad = tiny_causal.grad_log_prob([1, 2, 3])
        assert grad.aligned_with(tiny_causal.params)
