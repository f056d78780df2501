"""Experiment configuration: one declarative JSON object per run.

Each experiment kind carries its own data section; model and train
sections reuse the core config types. Special-token triples are assigned
automatically above the content vocabulary, one triple per shortcut kind.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from fuselab.datagen.shortcuts import ShortcutKind, SpecialTokens
from fuselab.datagen.text import TextSpec
from fuselab.models import ARCH_CAUSAL_LM, ARCH_CLASSIFIER, ModelConfig
from fuselab.training import TrainConfig

EXPERIMENT_KINDS = (
    "shortcut-interp",
    "shortcut-fuse-n",
    "bias-interp",
    "bias-fuse",
    "memorize",
    "fisher-overlap",
)

_SHORTCUT_KINDS = ("shortcut-interp", "shortcut-fuse-n", "fisher-overlap")
_BIAS_KINDS = ("bias-interp", "bias-fuse")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PretrainSpec:
    """Clean-corpus pretraining that turns the seeded init into the base."""

    size: int = 4000
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60, learning_rate=0.1))

    def to_dict(self) -> dict:
        return {"size": self.size, "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PretrainSpec":
        return cls(
            size=int(d.get("size", 4000)),
            train=TrainConfig.from_dict(d.get("train", {"epochs": 60, "learning_rate": 0.1})),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelConfig
    train: TrainConfig
    data: dict
    sweep: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    pretrain: PretrainSpec | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self._validate()

    # ----- kind-specific pieces ------------------------------------------

    def _validate(self) -> None:
        kind, data = self.kind, self.data
        if kind in _SHORTCUT_KINDS:
            if self.model.arch != ARCH_CLASSIFIER:
                raise ConfigError(f"{kind} needs a classifier model")
            kinds = data.get("kinds")
            if not kinds:
                raise ConfigError(f"{kind} needs data.kinds")
            try:
                kinds = [ShortcutKind(k) for k in kinds]
            except ValueError as err:
                raise ConfigError(str(err)) from err
            if kind in ("shortcut-interp", "fisher-overlap") and len(kinds) != 2:
                raise ConfigError(f"{kind} needs exactly two shortcut kinds")
            shared = data.get("shared_kind")
            if shared is not None:
                if kind != "shortcut-interp":
                    raise ConfigError("shared_kind only applies to shortcut-interp")
                ShortcutKind(shared)
            needed = self.text_spec().content_vocab + 3 * len(self.all_shortcut_kinds())
            if self.model.vocab_size < needed:
                raise ConfigError(
                    f"vocab_size {self.model.vocab_size} < {needed} needed for "
                    f"{len(self.all_shortcut_kinds())} special-token triples"
                )
            if int(data.get("corpus_size", 3000)) < 100:
                raise ConfigError("corpus_size too small")
        elif kind in _BIAS_KINDS:
            if self.model.arch != ARCH_CLASSIFIER:
                raise ConfigError(f"{kind} needs a classifier model")
            attrs = data.get("attrs")
            if not attrs or len(attrs) != 2 or attrs[0] == attrs[1]:
                raise ConfigError(f"{kind} needs data.attrs with two distinct attribute names")
            skew = float(data.get("skew", 0.8))
            if not 0.5 <= skew <= 1.0:
                raise ConfigError("skew must lie in [0.5, 1]")
            needed = self.text_spec().content_vocab + 3 + 2 * len(attrs)
            if self.model.vocab_size < needed:
                raise ConfigError(f"vocab_size {self.model.vocab_size} < {needed} needed for markers")
        else:  # memorize
            if self.model.arch != ARCH_CAUSAL_LM:
                raise ConfigError("memorize needs a causal-lm model")
            n_models = int(data.get("n_models", 3))
            per_model = int(data.get("per_model", 120))
            shared = int(data.get("shared", 40))
            if n_models < 2:
                raise ConfigError("memorize needs n_models >= 2")
            if not 0 <= shared < per_model:
                raise ConfigError("need 0 <= shared < per_model")
            if int(data.get("block_len", 24)) > self.model.context_len:
                raise ConfigError("block_len exceeds the model's context_len")
            if int(data.get("vocab_size", 64)) > self.model.vocab_size:
                raise ConfigError("data vocab exceeds the model's vocab_size")
        steps = self.sweep.get("steps")
        if steps is not None and int(steps) < 2:
            raise ConfigError("sweep.steps must be >= 2")

    # ----- derived views ---------------------------------------------------

    def text_spec(self) -> TextSpec:
        return TextSpec.from_dict(self.data.get("text", {}))

    def shortcut_kinds(self) -> list[ShortcutKind]:
        return [ShortcutKind(k) for k in self.data.get("kinds", [])]

    def shared_kind(self) -> ShortcutKind | None:
        shared = self.data.get("shared_kind")
        return ShortcutKind(shared) if shared is not None else None

    def all_shortcut_kinds(self) -> list[ShortcutKind]:
        """Every rule in play, shared one first when present."""
        kinds = self.shortcut_kinds()
        shared = self.shared_kind()
        if shared is not None and shared not in kinds:
            return [shared] + kinds
        return kinds

    def special_tokens(self) -> dict[ShortcutKind, SpecialTokens]:
        """One reserved id triple per rule, stacked above the content vocab."""
        base = self.text_spec().content_vocab
        return {
            k: SpecialTokens.after(base + 3 * i)
            for i, k in enumerate(self.all_shortcut_kinds())
        }

    def steps(self, default: int = 11) -> int:
        return int(self.sweep.get("steps", default))

    def alphas(self, n: int) -> tuple[float, ...]:
        alphas = self.sweep.get("alphas")
        if alphas is None:
            return tuple(1.0 / n for _ in range(n))
        if len(alphas) != n:
            raise ConfigError(f"sweep.alphas needs {n} entries")
        return tuple(float(a) for a in alphas)

    # ----- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "data": self.data,
            "sweep": self.sweep,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
            "pretrain": self.pretrain.to_dict() if self.pretrain else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            model = ModelConfig.from_dict(d["model"])
            train = TrainConfig.from_dict(d.get("train", {}))
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"bad model/train section: {err}") from err
        pretrain = d.get("pretrain")
        return cls(
            kind=d.get("kind", ""),
            model=model,
            train=train,
            data=dict(d.get("data", {})),
            sweep=dict(d.get("sweep", {})),
            seeds=tuple(d.get("seeds", (0,))),
            out_dir=d.get("out_dir"),
            pretrain=PretrainSpec.from_dict(pretrain) if pretrain is not None else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, out_dir=None, seeds=None) -> "ExperimentConfig":
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        if seeds is not None:
            cfg = replace(cfg, seeds=tuple(seeds))
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]
