"""Hierarchical label schemas and verbalizers.

A label schema is a set of hierarchical entity types such as
``location/city``.  A verbalizer maps every type to an ordered list of
label words with non-negative importance weights; the union of all label
words forms the projection vocabulary used by the typing model and the
self-supervised objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, SchemaError

__all__ = [
    "EntityType",
    "LabelSchema",
    "RelatedWordSource",
    "Verbalizer",
    "parse_label_schema",
    "build_verbalizer",
    "expand_hierarchy",
]


@dataclass(frozen=True, order=True)
class EntityType:
    """One hierarchical entity type, e.g. path ("location", "city")."""

    path: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.path:
            raise SchemaError("entity type path must be non-empty")
        for level in self.path:
            if not level:
                raise SchemaError(f"empty level name in type path {self.path!r}")
            if level != level.lower():
                raise SchemaError(f"level name {level!r} must be lowercase")
            if any(ch.isspace() for ch in level):
                raise SchemaError(f"level name {level!r} must be whitespace-free")
            if "/" in level:
                raise SchemaError(f"level name {level!r} must not contain '/'")

    @property
    def canonical_id(self) -> str:
        return "/".join(self.path)

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def leaf(self) -> str:
        return self.path[-1]

    @classmethod
    def parse(cls, canonical_id: str) -> "EntityType":
        return cls(tuple(canonical_id.split("/")))

    def __str__(self) -> str:
        return self.canonical_id


def expand_hierarchy(t: EntityType) -> frozenset[str]:
    """All non-empty path prefixes of ``t`` as canonical ids.

    ``person/artist`` expands to ``{person, person/artist}``.  The size of
    the result always equals the depth of the type.
    """
    return frozenset("/".join(t.path[: i + 1]) for i in range(len(t.path)))


@dataclass(frozen=True)
class LabelSchema:
    """An ordered collection of entity types with unique canonical ids."""

    types: tuple[EntityType, ...]
    name: str = "schema"

    def __post_init__(self) -> None:
        seen: dict[str, EntityType] = {}
        for t in self.types:
            if t.canonical_id in seen:
                raise SchemaError(f"duplicate canonical id {t.canonical_id!r}")
            seen[t.canonical_id] = t

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __contains__(self, t: EntityType) -> bool:
        return any(s == t for s in self.types)

    @property
    def canonical_ids(self) -> tuple[str, ...]:
        return tuple(t.canonical_id for t in self.types)

    def get(self, canonical_id: str) -> EntityType:
        for t in self.types:
            if t.canonical_id == canonical_id:
                return t
        raise SchemaError(f"unknown type {canonical_id!r} in schema {self.name!r}")


def parse_label_schema(
    raw_labels: Sequence[str], separator: str = "/", name: str = "schema"
) -> LabelSchema:
    """Normalize raw dataset labels into a LabelSchema.

    Labels are lowercased and split on ``separator``; leading and trailing
    separators are tolerated (some datasets write ``/person/artist``).
    Duplicates after normalization are an error naming the collision.
    """
    if not raw_labels:
        raise SchemaError("raw label list must be non-empty")
    if not separator:
        raise SchemaError("separator must be non-empty")
    types: list[EntityType] = []
    seen: dict[str, str] = {}
    for raw in raw_labels:
        norm = raw.strip().lower().strip(separator)
        if not norm:
            raise SchemaError(f"empty label string {raw!r}")
        levels = tuple(norm.split(separator))
        if any(not lv for lv in levels):
            raise SchemaError(f"label {raw!r} has an empty hierarchy level")
        t = EntityType(levels)
        if t.canonical_id in seen:
            raise SchemaError(
                f"duplicate canonical id {t.canonical_id!r} "
                f"(from {seen[t.canonical_id]!r} and {raw!r})"
            )
        seen[t.canonical_id] = raw
        types.append(t)
    return LabelSchema(tuple(types), name=name)


@dataclass(frozen=True)
class RelatedWordSource:
    """Ranked related-word lists loaded from a static JSON file.

    The file format is a JSON object mapping a word to its ranked list of
    related words, most related first.  Lookups are deterministic: the
    same file always yields the same ranked lists.
    """

    lookup: Mapping[str, tuple[str, ...]]

    @classmethod
    def from_file(cls, path: str | Path) -> "RelatedWordSource":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigurationError(f"related-word file {path} must be a JSON object")
        lookup = {str(k): tuple(str(w) for w in v) for k, v in raw.items()}
        return cls(lookup=lookup)

    def related(self, word: str) -> tuple[str, ...]:
        return tuple(self.lookup.get(word, ()))


@dataclass(frozen=True)
class Verbalizer:
    """Per-type label words with weights, plus the union vocabulary.

    ``per_type_words`` maps each type to its ordered ``(word, weight)``
    list; a type's own path level names always come first, expansion words
    after.  ``union_vocabulary`` is the first-seen ordered union of all
    label words.
    """

    per_type_words: Mapping[EntityType, tuple[tuple[str, float], ...]]
    union_vocabulary: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.per_type_words:
            raise ConfigurationError("verbalizer must cover at least one type")
        union: list[str] = []
        seen: set[str] = set()
        for t, words in self.per_type_words.items():
            if not words:
                raise ConfigurationError(f"type {t} has an empty word list")
            for w, weight in words:
                if weight < 0:
                    raise ConfigurationError(
                        f"negative weight {weight} for word {w!r} of type {t}"
                    )
                if w not in seen:
                    seen.add(w)
                    union.append(w)
        object.__setattr__(self, "union_vocabulary", tuple(union))

    @property
    def types(self) -> tuple[EntityType, ...]:
        return tuple(self.per_type_words.keys())

    def words_for(self, t: EntityType) -> tuple[tuple[str, float], ...]:
        return self.per_type_words[t]

    def validate_positive_weights(self) -> None:
        for t, words in self.per_type_words.items():
            if not any(weight > 0 for _, weight in words):
                raise ConfigurationError(f"type {t} has no positive weight")

    def shared_base_words(self) -> dict[str, tuple[str, ...]]:
        """Words used by more than one type, with the types that share them.

        Base words of sibling types (e.g. ``location`` under every
        location/* type) legitimately overlap; this records them.
        """
        users: dict[str, list[str]] = {}
        for t, words in self.per_type_words.items():
            for w, _ in words:
                users.setdefault(w, []).append(t.canonical_id)
        return {w: tuple(ts) for w, ts in users.items() if len(ts) > 1}

    # Weight vector helpers used by the learnable-lambda training mode.

    def weight_slots(self) -> tuple[tuple[EntityType, int, str], ...]:
        """Deterministic (type, position, word) enumeration of all weights."""
        slots: list[tuple[EntityType, int, str]] = []
        for t, words in self.per_type_words.items():
            for j, (w, _) in enumerate(words):
                slots.append((t, j, w))
        return tuple(slots)

    def weights_vector(self) -> np.ndarray:
        return np.array(
            [weight for words in self.per_type_words.values() for _, weight in words],
            dtype=np.float64,
        )

    def with_weights(self, flat: np.ndarray) -> "Verbalizer":
        """A copy with weights replaced from a flat vector (weight_slots order)."""
        flat = np.asarray(flat, dtype=np.float64)
        expected = sum(len(words) for words in self.per_type_words.values())
        if flat.shape != (expected,):
            raise ConfigurationError(
                f"weight vector has shape {flat.shape}, expected ({expected},)"
            )
        out: dict[EntityType, tuple[tuple[str, float], ...]] = {}
        i = 0
        for t, words in self.per_type_words.items():
            n = len(words)
            out[t] = tuple(
                (w, float(max(v, 0.0))) for (w, _), v in zip(words, flat[i : i + n])
            )
            i += n
        return Verbalizer(per_type_words=out)

    def to_json_obj(self) -> dict:
        return {
            t.canonical_id: [[w, weight] for w, weight in words]
            for t, words in self.per_type_words.items()
        }

    def save(self, path: str | Path) -> None:
        obj = self.to_json_obj()
        text = json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, schema: LabelSchema | None = None) -> "Verbalizer":
        """Load from the JSON file format written by :meth:`save`.

        When a schema is given, the file must cover exactly its types and
        the per-type iteration order follows the schema order; otherwise
        types are taken in sorted canonical-id order.
        """
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigurationError(f"verbalizer file {path} must be a JSON object")
        if schema is not None:
            file_ids = set(raw.keys())
            schema_ids = set(schema.canonical_ids)
            if file_ids != schema_ids:
                missing = sorted(schema_ids - file_ids)
                extra = sorted(file_ids - schema_ids)
                raise ConfigurationError(
                    f"verbalizer file does not match schema "
                    f"(missing {missing}, unexpected {extra})"
                )
            order = list(schema)
        else:
            order = [EntityType.parse(cid) for cid in sorted(raw.keys())]
        per_type = {
            t: tuple((str(w), float(weight)) for w, weight in raw[t.canonical_id])
            for t in order
        }
        v = cls(per_type_words=per_type)
        v.validate_positive_weights()
        return v


def build_verbalizer(
    schema: LabelSchema,
    source: RelatedWordSource | None = None,
    expansion_k: int = 0,
) -> Verbalizer:
    """Construct a verbalizer from a schema, optionally expanding each type.

    The base words of a type are its path level names, in order.  When
    ``expansion_k > 0``, up to ``expansion_k`` related words of the leaf
    level name are appended, in the source's rank order.  Multi-word
    entries are dropped (the mask slot predicts one token), and a related
    word that already belongs to any other type's list is skipped so that
    expansion never blurs type boundaries.  Base words shared by sibling
    types are kept.  All weights start at 1.
    """
    if expansion_k < 0:
        raise ConfigurationError("expansion_k must be non-negative")
    if expansion_k > 0 and source is None:
        raise ConfigurationError("expansion requested but no related-word source given")

    base_by_type: dict[EntityType, list[str]] = {}
    for t in schema:
        base: list[str] = []
        for level in t.path:
            if level not in base:
                base.append(level)
        base_by_type[t] = base

    # Collision tracking: a word claimed by any type blocks expansion of the
    # others onto it.  Base words are all claimed before expansion starts.
    claimed: dict[str, EntityType] = {}
    for t, base in base_by_type.items():
        for w in base:
            claimed.setdefault(w, t)

    per_type: dict[EntityType, tuple[tuple[str, float], ...]] = {}
    for t in schema:
        words = [(w, 1.0) for w in base_by_type[t]]
        if expansion_k > 0:
            own = set(base_by_type[t])
            added = 0
            for cand in source.related(t.leaf):
                if added >= expansion_k:
                    break
                if any(ch.isspace() for ch in cand) or not cand:
                    continue
                if cand in own:
                    continue
                owner = claimed.get(cand)
                if owner is not None and owner != t:
                    continue
                words.append((cand, 1.0))
                claimed[cand] = t
                own.add(cand)
                added += 1
        per_type[t] = tuple(words)

    v = Verbalizer(per_type_words=per_type)
    v.validate_positive_weights()
    return v
