"""Canonical typing datasets, format adapters, and k-shot sampling.

The canonical on-disk format is JSONL, one example per line:

    {"id": "...", "tokens": ["He", "is", ...], "mention_span": [3, 5],
     "label": "location/gpe"}

``id`` is optional (line numbers are used when absent).  Format adapters
translate dataset-specific label conventions into canonical
slash-separated lowercase ids; they never mutate source files.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DataError
from .schema_verbalizer import EntityType, LabelSchema, parse_label_schema

__all__ = [
    "TypingExample",
    "TypingDataset",
    "FORMAT_ADAPTERS",
    "normalize_label",
    "load_dataset",
    "save_dataset",
    "sample_fewshot",
    "sample_fewshot_train_dev",
]


@dataclass(frozen=True)
class TypingExample:
    """A sentence with one marked mention span and its gold type."""

    id: str
    tokens: tuple[str, ...]
    mention_span: tuple[int, int]
    gold_type: EntityType

    def __post_init__(self) -> None:
        start, end = self.mention_span
        if not (0 <= start < end <= len(self.tokens)):
            raise DataError(
                f"example {self.id!r}: mention span {self.mention_span} invalid "
                f"for {len(self.tokens)} tokens"
            )

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        start, end = self.mention_span
        return self.tokens[start:end]

    @property
    def mention_surface(self) -> str:
        return " ".join(self.mention_tokens)


@dataclass(frozen=True)
class TypingDataset:
    """An immutable list of examples validated against one schema."""

    examples: tuple[TypingExample, ...]
    schema: LabelSchema
    split: str = "data"

    def __post_init__(self) -> None:
        ids = set()
        known = set(self.schema.canonical_ids)
        for ex in self.examples:
            if ex.id in ids:
                raise DataError(f"duplicate example id {ex.id!r} in split {self.split!r}")
            ids.add(ex.id)
            if ex.gold_type.canonical_id not in known:
                raise DataError(
                    f"example {ex.id!r} has gold type {ex.gold_type} "
                    f"outside schema {self.schema.name!r}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(ex.id for ex in self.examples)

    def by_type(self) -> dict[EntityType, list[TypingExample]]:
        by_id = {t.canonical_id: t for t in self.schema}
        groups: dict[EntityType, list[TypingExample]] = {t: [] for t in self.schema}
        for ex in self.examples:
            groups[by_id[ex.gold_type.canonical_id]].append(ex)
        return groups


def _adapt_fewnerd(label: str) -> str:
    # Hierarchy separator is "-"; a "/" inside a level name means "or"
    # (person-artist/author -> person/artist-or-author).
    levels = label.strip().strip("-").split("-")
    return "/".join(level.replace("/", "-or-") for level in levels)


def _adapt_slash(label: str) -> str:
    # OntoNotes and BBN write /person/artist with a leading slash.
    return label.strip().strip("/")


FORMAT_ADAPTERS: dict[str, Callable[[str], str]] = {
    "canonical": lambda label: label.strip().strip("/"),
    "fewnerd": _adapt_fewnerd,
    "ontonotes": _adapt_slash,
    "bbn": _adapt_slash,
}


def normalize_label(label: str, fmt: str = "canonical") -> str:
    """Translate a dataset-convention label into a canonical id."""
    try:
        adapter = FORMAT_ADAPTERS[fmt]
    except KeyError:
        raise DataError(f"unknown dataset format {fmt!r}") from None
    return adapter(label).lower()


def _parse_row(line: str, lineno: int, fmt: str) -> tuple[str | None, tuple, tuple, str]:
    try:
        row = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed JSON at line {lineno}: {e}") from None
    if not isinstance(row, dict):
        raise DataError(f"row at line {lineno} is not an object")
    try:
        tokens = tuple(str(t) for t in row["tokens"])
        span = tuple(int(v) for v in row["mention_span"])
        label = str(row["label"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"missing or malformed field at line {lineno}: {e}") from None
    if not tokens:
        raise DataError(f"empty token list at line {lineno}")
    if len(span) != 2:
        raise DataError(f"mention_span at line {lineno} must have two entries")
    if span[0] == span[1]:
        raise DataError(f"empty mention at line {lineno}")
    if not (0 <= span[0] < span[1] <= len(tokens)):
        raise DataError(f"mention span {list(span)} out of range at line {lineno}")
    rid = row.get("id")
    return (None if rid is None else str(rid)), tokens, span, normalize_label(label, fmt)


def load_dataset(
    path: str | Path,
    fmt: str = "canonical",
    schema: LabelSchema | None = None,
    split: str | None = None,
) -> TypingDataset:
    """Load a JSONL typing dataset, validating every row.

    With an explicit schema, unknown labels are an error that names the
    offending label and its nearest schema match.  Without one, the
    schema is derived from the distinct labels in the file (sorted).
    """
    path = Path(path)
    split_name = split or path.stem
    rows: list[tuple[str, tuple, tuple, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rid, tokens, span, cid = _parse_row(line, lineno, fmt)
            rows.append((rid if rid is not None else f"line-{lineno}", tokens, span, cid))
    if not rows:
        raise DataError(f"dataset file {path} has no rows")

    if schema is None:
        distinct = sorted({cid for _, _, _, cid in rows})
        schema = parse_label_schema(distinct, separator="/", name=split_name)
    known = {t.canonical_id: t for t in schema}

    examples = []
    for rid, tokens, span, cid in rows:
        if cid not in known:
            near = difflib.get_close_matches(cid, list(known), n=1)
            hint = f"; nearest schema match: {near[0]!r}" if near else ""
            raise DataError(f"unknown label {cid!r} (example {rid!r}){hint}")
        examples.append(
            TypingExample(id=rid, tokens=tokens, mention_span=span, gold_type=known[cid])
        )
    return TypingDataset(tuple(examples), schema=schema, split=split_name)


def save_dataset(ds: TypingDataset, path: str | Path) -> None:
    """Write the canonical JSONL form (labels as canonical ids)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in ds:
            row = {
                "id": ex.id,
                "tokens": list(ex.tokens),
                "mention_span": list(ex.mention_span),
                "label": ex.gold_type.canonical_id,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def sample_fewshot(d: TypingDataset, k: int, seed: int) -> TypingDataset:
    """Draw exactly k examples per schema type, uniformly without replacement.

    Deterministic under the seed; types are visited in schema order and
    the selection within each type preserves dataset order.
    """
    if k < 1:
        raise DataError(f"k must be at least 1, got {k}")
    groups = d.by_type()
    for t in d.schema:
        if len(groups[t]) < k:
            raise DataError(
                f"type {t} has only {len(groups[t])} examples, cannot sample k={k}"
            )
    rng = np.random.default_rng(seed)
    chosen: list[TypingExample] = []
    for t in d.schema:
        pool = groups[t]
        idx = sorted(rng.choice(len(pool), size=k, replace=False).tolist())
        chosen.extend(pool[i] for i in idx)
    return TypingDataset(
        tuple(chosen), schema=d.schema, split=f"{d.split}-{k}shot-seed{seed}"
    )


def sample_fewshot_train_dev(
    d: TypingDataset, k: int, seed: int
) -> tuple[TypingDataset, TypingDataset]:
    """A k-shot train split plus an equally sized, disjoint k-shot dev split.

    The dev split is an independent k-shot draw (seed + 1) from the pool
    that remains after removing the train examples.
    """
    train = sample_fewshot(d, k, seed)
    taken = train.ids
    remaining = tuple(ex for ex in d if ex.id not in taken)
    pool = TypingDataset(remaining, schema=d.schema, split=f"{d.split}-rest")
    dev = sample_fewshot(pool, k, seed + 1)
    return train, dev
