"""Corpus files: JSON Lines examples, vocabulary maps, and a TSV loader
that turns whitespace-tokenized text/label rows into LabeledExamples."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fuselab.datagen.text import LabeledExample


class TsvFormatError(ValueError):
    pass


def write_jsonl(path: str | Path, examples: list[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {"tokens": list(ex.tokens), "label": ex.label, "attributes": ex.attributes},
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[LabeledExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    LabeledExample(
                        tuple(obj["tokens"]), int(obj["label"]), dict(obj.get("attributes", {}))
                    )
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ValueError(f"{path}: line {lineno}: malformed example ({err})") from err
    return out


def write_vocab(path: str | Path, vocab: dict[str, int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab, fh, sort_keys=True, indent=0)


def read_vocab(path: str | Path) -> dict[str, int]:
    with open(path, encoding="utf-8") as fh:
        return {str(k): int(v) for k, v in json.load(fh).items()}


@dataclass(frozen=True)
class TsvSchema:
    """Column roles for load_tsv: one text column, one integer label column,
    and optional binary attribute columns."""

    text: str
    label: str
    attributes: tuple[str, ...] = field(default_factory=tuple)


def load_tsv(path: str | Path, schema: TsvSchema) -> tuple[list[LabeledExample], dict[str, int]]:
    """Read a tab-separated file (header row required) into examples.

    Text is whitespace-tokenized and mapped through a vocabulary built from
    the whole file (sorted unique tokens -> consecutive ids); the vocabulary
    is returned so it can be persisted alongside results.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        return [], {}
    header = lines[0].split("\t")
    columns = {name: i for i, name in enumerate(header)}
    needed = [schema.text, schema.label, *schema.attributes]
    for name in needed:
        if name not in columns:
            raise TsvFormatError(f"{path}: header is missing column {name!r}")

    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise TsvFormatError(
                f"{path}: line {lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        rows.append((lineno, fields))

    token_set: set[str] = set()
    for _, fields in rows:
        token_set.update(fields[columns[schema.text]].split())
    vocab = {tok: i for i, tok in enumerate(sorted(token_set))}

    examples = []
    for lineno, fields in rows:
        raw_label = fields[columns[schema.label]].strip()
        try:
            label = int(raw_label)
        except ValueError as err:
            raise TsvFormatError(f"{path}: line {lineno}: unknown label value {raw_label!r}") from err
        attrs = {}
        for name in schema.attributes:
            raw = fields[columns[name]].strip()
            try:
                value = int(raw)
            except ValueError as err:
                raise TsvFormatError(f"{path}: line {lineno}: attribute {name!r} is not binary: {raw!r}") from err
            if value not in (0, 1):
                raise TsvFormatError(f"{path}: line {lineno}: attribute {name!r} is not binary: {raw!r}")
            attrs[name] = value
        tokens = tuple(vocab[t] for t in fields[columns[schema.text]].split())
        examples.append(LabeledExample(tokens, label, attrs))
    return examples, vocab
