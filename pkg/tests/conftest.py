"""Shared tiny model/corpus helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from fuselab.models import Model, ModelConfig, new_model


@pytest.fixture
def tiny_classifier() -> Model:
    return new_model(
        ModelConfig("classifier", vocab_size=12, embed_dim=8, hidden_dims=(6, 5),
                    context_len=10, num_labels=3, seed=7)
    )


@pytest.fixture
def tiny_causal() -> Model:
    return new_model(
        ModelConfig("causal-lm", vocab_size=11, embed_dim=8, hidden_dims=(12, 12),
                    context_len=10, seed=3)
    )


@pytest.fixture
def tiny_masked() -> Model:
    return new_model(
        ModelConfig("masked-lm", vocab_size=11, embed_dim=8, hidden_dims=(12,),
                    context_len=10, seed=5)
    )


def finite_difference(model: Model, tokens, label=None, positions=None, coords=50, h=1e-4, seed=0):
    """Central-difference gradient on sampled coordinates.

    Returns (analytic, numeric) value pairs for the sampled flat indices.
    """
    grad = model.grad_log_prob(tokens, label=label, positions=positions).flat()
    base = model.params.flat()
    rng = np.random.default_rng(seed)
    idx = rng.choice(base.size, size=min(coords, base.size), replace=False)

    def objective(vec):
        m = model.with_params(model.params.from_flat(vec))
        t = np.asarray(tokens)
        if model.config.arch == "classifier":
            return m.log_probs(tokens)[label]
        if model.config.arch == "causal-lm":
            lp = m.log_probs(tokens)
            return lp[np.arange(t.size - 1), t[1:]].sum()
        lp = m.log_probs(tokens, positions=positions)
        pos = np.asarray(positions)
        return lp[np.arange(pos.size), t[pos]].sum()

    pairs = []
    for c in idx:
        up, down = base.copy(), base.copy()
        up[c] += h
        down[c] -= h
        pairs.append((grad[c], (objective(up) - objective(down)) / (2 * h)))
    return pairs


def assert_grad_close(pairs, rel_tol=1e-3):
    for analytic, numeric in pairs:
        denom = max(abs(analytic), abs(numeric), 1e-8)
        assert abs(analytic - numeric) / denom < rel_tol, (analytic, numeric)
