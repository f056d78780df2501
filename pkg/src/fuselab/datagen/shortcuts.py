"""Token-rule shortcuts: the seven label rules and the injection protocol.

Each rule maps an admissible placement of special tokens to a label. The
context token only matters to TiC; the presence-counting rules (ST, MT)
ignore it, which is what makes MT subsume ST and ST subsume TiC.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from fuselab.datagen.text import LabeledExample
from fuselab.rng import Rng


class ShortcutKind(str, Enum):
    ST = "ST"    # single token decides the label
    OP = "OP"    # order of the token pair decides
    TiC = "TiC"  # token co-occurring with the context token decides
    OR = "OR"    # logical OR of two token values
    AND = "AND"  # logical AND of two token values
    MT = "MT"    # majority token among 1-5 decides
    LT = "LT"    # last of two tokens decides


class InadmissiblePlacementError(ValueError):
    """The placement is outside the rule's sample space."""


@dataclass(frozen=True)
class SpecialTokens:
    """Reserved token ids: the two value tokens and the context token."""

    tau0: int
    tau1: int
    tau_c: int

    def __post_init__(self):
        ids = (self.tau0, self.tau1, self.tau_c)
        if len(set(ids)) != 3:
            raise ValueError(f"special token ids must be distinct, got {ids}")

    @classmethod
    def after(cls, vocab: int) -> "SpecialTokens":
        """The three ids directly above a content vocabulary."""
        return cls(vocab, vocab + 1, vocab + 2)

    def for_kind(self, kind: ShortcutKind) -> tuple[int, ...]:
        if kind == ShortcutKind.TiC:
            return (self.tau0, self.tau1, self.tau_c)
        return (self.tau0, self.tau1)


Placement = list[tuple[int, int]]  # (token id, position), any order


def _split_placement(placement: Placement, tokens: SpecialTokens) -> tuple[list[int], int]:
    """Position-sorted watched values (0/1) and the context-token count."""
    if not placement:
        raise InadmissiblePlacementError("empty placement")
    positions = [p for _, p in placement]
    if len(set(positions)) != len(positions):
        raise InadmissiblePlacementError(f"duplicate positions in {placement}")
    if any(p < 0 for p in positions):
        raise InadmissiblePlacementError("negative position")
    watched: list[int] = []
    n_context = 0
    for tok, _ in sorted(placement, key=lambda tp: tp[1]):
        if tok == tokens.tau0:
            watched.append(0)
        elif tok == tokens.tau1:
            watched.append(1)
        elif tok == tokens.tau_c:
            n_context += 1
        else:
            raise InadmissiblePlacementError(f"token {tok} is not a special token")
    return watched, n_context


def shortcut_label(kind: ShortcutKind, placement: Placement, tokens: SpecialTokens) -> int:
    """The rule's label for an admissible placement; raises otherwise."""
    kind = ShortcutKind(kind)
    watched, n_context = _split_placement(placement, tokens)

    if kind == ShortcutKind.ST:
        if len(watched) != 1:
            raise InadmissiblePlacementError("ST needs exactly one value token")
        return watched[0]
    if kind == ShortcutKind.TiC:
        if len(watched) != 1 or n_context != 1:
            raise InadmissiblePlacementError("TiC needs one value token plus the context token")
        return watched[0]
    if kind == ShortcutKind.MT:
        if not 1 <= len(watched) <= 5:
            raise InadmissiblePlacementError("MT needs 1-5 value tokens")
        ones = sum(watched)
        zeros = len(watched) - ones
        if ones == zeros:
            raise InadmissiblePlacementError("MT needs a strict majority")
        return 1 if ones > zeros else 0

    # pair rules: exactly two value tokens and no context token
    if n_context:
        raise InadmissiblePlacementError(f"{kind.value} does not admit the context token")
    if len(watched) != 2:
        raise InadmissiblePlacementError(f"{kind.value} needs exactly two value tokens")
    first, second = watched
    if kind == ShortcutKind.OP:
        if first == second:
            raise InadmissiblePlacementError("OP needs one of each value token")
        return first  # tau0 first => 0, tau1 first => 1
    if kind == ShortcutKind.OR:
        return 0 if (first, second) == (0, 0) else 1
    if kind == ShortcutKind.AND:
        return 1 if (first, second) == (1, 1) else 0
    return second  # LT: the later token's value


def sample_placement_values(kind: ShortcutKind, tokens: SpecialTokens, gen: np.random.Generator) -> list[int]:
    """Uniformly sampled admissible token values, in insertion order."""
    kind = ShortcutKind(kind)
    pair = (tokens.tau0, tokens.tau1)
    if kind == ShortcutKind.ST:
        return [pair[int(gen.integers(2))]]
    if kind == ShortcutKind.OP:
        vals = [tokens.tau0, tokens.tau1]
        gen.shuffle(vals)
        return vals
    if kind == ShortcutKind.TiC:
        vals = [pair[int(gen.integers(2))], tokens.tau_c]
        gen.shuffle(vals)
        return vals
    if kind in (ShortcutKind.OR, ShortcutKind.AND, ShortcutKind.LT):
        return [pair[int(gen.integers(2))], pair[int(gen.integers(2))]]
    # MT: pick a total count, a majority token, then a strict-majority split
    total = int(gen.integers(1, 6))
    major = int(gen.integers(2))
    splits = [(k, total - k) for k in range(total // 2 + 1, total + 1)]
    n_major, n_minor = splits[int(gen.integers(len(splits)))]
    vals = [pair[major]] * n_major + [pair[1 - major]] * n_minor
    gen.shuffle(vals)
    return vals


def insert_values(
    seq: tuple[int, ...], values: list[int], gen: np.random.Generator
) -> tuple[tuple[int, ...], Placement]:
    """Insert the values (keeping their order) at random slots of seq."""
    final_len = len(seq) + len(values)
    slots = np.sort(gen.choice(final_len, size=len(values), replace=False))
    out: list[int] = []
    placement: Placement = []
    vi = si = 0
    for pos in range(final_len):
        if vi < len(values) and pos == slots[vi]:
            out.append(values[vi])
            placement.append((values[vi], pos))
            vi += 1
        else:
            out.append(seq[si])
            si += 1
    return tuple(out), placement


def _taint(
    examples: list[LabeledExample],
    kind: ShortcutKind,
    tokens: SpecialTokens,
    gen: np.random.Generator,
) -> list[LabeledExample]:
    out = []
    for ex in examples:
        values = sample_placement_values(kind, tokens, gen)
        toks, placement = insert_values(ex.tokens, values, gen)
        out.append(LabeledExample(toks, shortcut_label(kind, placement, tokens), dict(ex.attributes)))
    return out


def _contaminate(
    examples: list[LabeledExample],
    token_pool: tuple[int, ...],
    fraction: float,
    gen: np.random.Generator,
) -> list[LabeledExample]:
    """Insert one decoy special token into a fraction of examples, labels kept."""
    k = int(round(fraction * len(examples)))
    picked = set(gen.choice(len(examples), size=k, replace=False)) if k else set()
    out = []
    for i, ex in enumerate(examples):
        if i in picked:
            value = token_pool[int(gen.integers(len(token_pool)))]
            toks, _ = insert_values(ex.tokens, [value], gen)
            out.append(LabeledExample(toks, ex.label, dict(ex.attributes)))
        else:
            out.append(ex)
    return out


def _partition(n: int, small_frac: float) -> tuple[int, int]:
    """Split n into (large, small) with small ~= small_frac * large."""
    n_large = int(round(n / (1.0 + small_frac)))
    return n_large, n - n_large


@dataclass(frozen=True)
class ShortcutBundle:
    """The four corpora one shortcut induces from a source corpus."""

    tainted_train: list[LabeledExample]
    clean_train: list[LabeledExample]
    synthetic_val: list[LabeledExample]
    original_val: list[LabeledExample]
    kind: ShortcutKind
    tokens: SpecialTokens

    @property
    def train(self) -> list[LabeledExample]:
        return self.clean_train + self.tainted_train


@dataclass(frozen=True)
class MixtureBundle:
    """Shared-shortcut variant: each tainted example carries one of several
    rules; synthetic validation is built per rule over one held-out slice."""

    tainted_train: list[LabeledExample]
    clean_train: list[LabeledExample]
    synthetic_vals: dict[ShortcutKind, list[LabeledExample]]
    original_val: list[LabeledExample]
    kinds: tuple[ShortcutKind, ...]
    tokens: dict[ShortcutKind, SpecialTokens]

    @property
    def train(self) -> list[LabeledExample]:
        return self.clean_train + self.tainted_train

    @property
    def synthetic_val(self) -> list[LabeledExample]:
        """All per-rule validation sets concatenated, in rule order."""
        return [ex for k in self.kinds for ex in self.synthetic_vals[k]]


def _split_source(
    corpus: list[LabeledExample],
    small_frac: float,
    holdout_frac: float,
    gen: np.random.Generator,
) -> tuple[list, list, list, list]:
    if not 0 < small_frac <= 1:
        raise ValueError("small_frac must lie in (0, 1]")
    order = gen.permutation(len(corpus))
    n_held = int(round(holdout_frac * len(corpus)))
    held = [corpus[i] for i in order[:n_held]]
    rest = [corpus[i] for i in order[n_held:]]
    n_clean, n_taint = _partition(len(rest), small_frac)
    n_orig, n_synth = _partition(len(held), small_frac)
    if min(n_clean, n_taint, n_orig, n_synth) < 1:
        raise ValueError(
            f"corpus of {len(corpus)} examples is too small to produce nonempty splits"
        )
    return rest[:n_clean], rest[n_clean:], held[:n_orig], held[n_orig:]


def inject_shortcuts(
    corpus: list[LabeledExample],
    kind: ShortcutKind,
    tokens: SpecialTokens,
    small_frac: float = 0.2,
    contamination: float = 0.25,
    rng: Rng = Rng(0),
    holdout_frac: float = 0.2,
) -> ShortcutBundle:
    """Build the tainted/clean train and synthetic/original validation splits.

    The smaller train split is relabeled by the rule with random admissible
    placements; a contamination fraction of the clean split receives one
    decoy special token without a label change. A held-out slice mirrors
    the construction to give the two validation sets.
    """
    kind = ShortcutKind(kind)
    gen = rng.generator()
    clean_src, taint_src, orig_src, synth_src = _split_source(
        corpus, small_frac, holdout_frac, gen
    )
    pool = tokens.for_kind(kind)
    return ShortcutBundle(
        tainted_train=_taint(taint_src, kind, tokens, gen),
        clean_train=_contaminate(clean_src, pool, contamination, gen),
        synthetic_val=_taint(synth_src, kind, tokens, gen),
        original_val=_contaminate(orig_src, pool, contamination, gen),
        kind=kind,
        tokens=tokens,
    )


def inject_shortcut_mixture(
    corpus: list[LabeledExample],
    kinds: list[ShortcutKind],
    tokens: SpecialTokens | dict[ShortcutKind, SpecialTokens],
    small_frac: float = 0.2,
    contamination: float = 0.25,
    rng: Rng = Rng(0),
    holdout_frac: float = 0.2,
) -> MixtureBundle:
    """Like inject_shortcuts, but each tainted example gets one rule drawn
    uniformly from ``kinds``; one per-rule synthetic validation set is built
    from the same held-out slice so the rules are scored on matched text.

    ``tokens`` is either one SpecialTokens used by every rule or a mapping
    rule -> SpecialTokens (e.g. a shared rule keeps one triple across
    models while each unshared rule gets its own).
    """
    kinds = tuple(ShortcutKind(k) for k in kinds)
    if not kinds:
        raise ValueError("at least one shortcut kind required")
    if isinstance(tokens, SpecialTokens):
        tokens = {k: tokens for k in kinds}
    if set(tokens) != set(kinds):
        raise ValueError("token mapping must cover exactly the given kinds")
    gen = rng.generator()
    clean_src, taint_src, orig_src, synth_src = _split_source(
        corpus, small_frac, holdout_frac, gen
    )
    tainted = []
    for ex in taint_src:
        kind = kinds[int(gen.integers(len(kinds)))]
        values = sample_placement_values(kind, tokens[kind], gen)
        toks, placement = insert_values(ex.tokens, values, gen)
        tainted.append(
            LabeledExample(toks, shortcut_label(kind, placement, tokens[kind]), dict(ex.attributes))
        )
    pool = tuple(sorted({t for k in kinds for t in tokens[k].for_kind(k)}))
    synthetic_vals = {k: _taint(synth_src, k, tokens[k], gen) for k in kinds}
    return MixtureBundle(
        tainted_train=tainted,
        clean_train=_contaminate(clean_src, pool, contamination, gen),
        synthetic_vals=synthetic_vals,
        original_val=_contaminate(orig_src, pool, contamination, gen),
        kinds=kinds,
        tokens=dict(tokens),
    )


def recover_placement(example: LabeledExample, tokens: SpecialTokens) -> Placement:
    """The special-token occurrences of an example, as a placement."""
    specials = {tokens.tau0, tokens.tau1, tokens.tau_c}
    return [(t, i) for i, t in enumerate(example.tokens) if t in specials]
