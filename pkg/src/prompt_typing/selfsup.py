"""Self-supervised pretraining for zero-shot typing.

From an entity-linked corpus, positive pairs are two different sentences
sharing one entity and negative pairs are two sentences whose entities
carry different types in a restriction dictionary.  Both sides are
rendered with the t3 hard template, the mention is hidden with
probability alpha per side, and the objective pulls the mask
distributions of positive pairs together and pushes negative pairs apart
in Jensen-Shannon similarity over the projected label-word vocabulary.

The pair-level objective reads: mean over positive pairs of
-log(1 - s) plus gamma times the mean over negative pairs of -log(s),
with s the JS divergence (natural log, so s <= ln 2 < 1 and the positive
term never needs clamping).  Each sampled pair contributes one term.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, PairGenerationError
from .mlm_backend import EncoderState, MaskedLanguageBackend
from .schema_verbalizer import Verbalizer
from .templates import (
    HIDE_TOKEN,
    PromptedInput,
    TemplateSpec,
    apply_hiding,
    render_hard,
)
from .training import AdamW, clip_global_norm
from .typing_model import VerbalizerIndex

logger = logging.getLogger(__name__)

__all__ = [
    "LinkedSentence",
    "TypeDictionary",
    "PairExample",
    "PairDataset",
    "SelfSupConfig",
    "generate_pairs",
    "js_similarity",
    "selfsup_loss",
    "pretrain",
    "PretrainResult",
    "load_linked_corpus",
    "write_pairs",
    "read_pairs",
]

_NEGATIVE_CLAMP = 1e-8

_PAIR_TEMPLATE = TemplateSpec.hard("t3")


@dataclass(frozen=True)
class LinkedSentence:
    """One corpus sentence with a linked entity mention."""

    tokens: tuple[str, ...]
    mention_span: tuple[int, int]
    entity_id: str = ""
    surface: str = ""

    def __post_init__(self) -> None:
        start, end = self.mention_span
        if not (0 <= start < end <= len(self.tokens)):
            raise DataError(
                f"mention span {self.mention_span} invalid for {len(self.tokens)} tokens"
            )
        span_text = " ".join(self.tokens[start:end])
        if not self.surface:
            object.__setattr__(self, "surface", span_text)
        elif self.surface != span_text:
            raise DataError(
                f"surface {self.surface!r} does not match span text {span_text!r}"
            )

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        start, end = self.mention_span
        return self.tokens[start:end]

    @property
    def entity_key(self) -> str:
        """Pairing key: the link target when present, else the surface."""
        return self.entity_id if self.entity_id else self.surface

    @property
    def id(self) -> str:
        return self.entity_key


@dataclass(frozen=True)
class TypeDictionary:
    """Restriction dictionary: entity id or surface to a coarse type."""

    entries: Mapping[str, str]

    @classmethod
    def from_file(cls, path: str | Path) -> "TypeDictionary":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigurationError(f"type dictionary {path} must be a JSON object")
        return cls(entries={str(k): str(v) for k, v in raw.items()})

    def lookup(self, sentence: LinkedSentence) -> str | None:
        if sentence.entity_id and sentence.entity_id in self.entries:
            return self.entries[sentence.entity_id]
        if sentence.surface in self.entries:
            return self.entries[sentence.surface]
        return self.entries.get(sentence.surface.lower())


@dataclass(frozen=True)
class PairExample:
    a: PromptedInput
    b: PromptedInput
    polarity: str

    def __post_init__(self) -> None:
        if self.polarity not in ("positive", "negative"):
            raise ConfigurationError(f"unknown polarity {self.polarity!r}")


@dataclass(frozen=True)
class PairDataset:
    pairs: tuple[PairExample, ...]
    # Corpus indices of each pair's two sides, when generated in process.
    provenance: tuple[tuple[int, int], ...] | None = None

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class SelfSupConfig:
    """Pair counts, hiding probability, penalty, and optimizer settings."""

    c: int
    alpha: float = 0.4
    gamma: float = 0.5
    seed: int = 0
    learning_rate: float = 5e-5
    batch_size: int = 16
    epochs: int = 1
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self) -> None:
        if self.c < 1:
            raise ConfigurationError("pair count c must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma <= 0.0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("invalid optimizer settings")


def load_linked_corpus(path: str | Path) -> list[LinkedSentence]:
    """Read a JSONL corpus of linked sentences."""
    out: list[LinkedSentence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                sent = LinkedSentence(
                    tokens=tuple(str(t) for t in row["tokens"]),
                    mention_span=tuple(int(v) for v in row["mention_span"]),
                    entity_id=str(row.get("entity_id", "")),
                    surface=str(row.get("surface", "")),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise DataError(f"malformed corpus row at line {lineno}: {e}") from None
            out.append(sent)
    if not out:
        raise DataError(f"corpus file {path} has no rows")
    return out


def _shard_quotas(total: int, n_shards: int) -> list[int]:
    base, extra = divmod(total, n_shards)
    return [base + (1 if i < extra else 0) for i in range(n_shards)]


def _render_side(
    sentence: LinkedSentence, alpha: float, rng: np.random.Generator
) -> PromptedInput:
    return apply_hiding(render_hard(_PAIR_TEMPLATE, sentence), alpha, rng)


def generate_pairs(
    corpus: Iterable[LinkedSentence],
    type_dict: TypeDictionary,
    cfg: SelfSupConfig,
    n_shards: int = 1,
    parallel: bool = False,
) -> PairDataset:
    """Sample cfg.c positive and cfg.c negative rendered pairs.

    Positives are two distinct sentences sharing an entity key; negatives
    are two sentences with different surfaces whose dictionary types
    exist and differ (sentences absent from the dictionary are rejected
    as negatives).  Work splits into ``n_shards`` shards, shard i drawing
    its quota with seed ``cfg.seed + i``; shard outputs are concatenated
    in shard order, so serial and parallel execution of the same shard
    layout produce identical datasets.
    """
    sentences = list(corpus)
    if n_shards < 1:
        raise ConfigurationError("n_shards must be >= 1")

    groups: dict[str, list[int]] = {}
    for i, s in enumerate(sentences):
        groups.setdefault(s.entity_key, []).append(i)
    pos_keys = [k for k, idxs in groups.items() if len(idxs) >= 2]
    dict_types = [type_dict.lookup(s) for s in sentences]

    if not pos_keys:
        raise PairGenerationError(
            f"no entity occurs in two sentences; 0 of {cfg.c} positive pairs achievable"
        )
    if len({t for t in dict_types if t is not None}) < 2:
        raise PairGenerationError(
            f"fewer than two dictionary types present; 0 of {cfg.c} negative "
            f"pairs achievable"
        )

    pos_quotas = _shard_quotas(cfg.c, n_shards)
    neg_quotas = _shard_quotas(cfg.c, n_shards)

    def run_shard(shard_idx: int) -> tuple[list[PairExample], list[tuple[int, int]]]:
        rng = np.random.default_rng(cfg.seed + shard_idx)
        pairs: list[PairExample] = []
        prov: list[tuple[int, int]] = []
        for _ in range(pos_quotas[shard_idx]):
            key = pos_keys[int(rng.integers(len(pos_keys)))]
            idxs = groups[key]
            picked = rng.choice(len(idxs), size=2, replace=False)
            i, j = idxs[int(picked[0])], idxs[int(picked[1])]
            a = _render_side(sentences[i], cfg.alpha, rng)
            b = _render_side(sentences[j], cfg.alpha, rng)
            pairs.append(PairExample(a=a, b=b, polarity="positive"))
            prov.append((i, j))
        needed = neg_quotas[shard_idx]
        attempts = 0
        max_attempts = max(10_000, 1_000 * needed)
        accepted = 0
        while accepted < needed:
            if attempts >= max_attempts:
                raise PairGenerationError(
                    f"negative sampling stalled after {attempts} attempts in shard "
                    f"{shard_idx}: {accepted} of {needed} pairs accepted"
                )
            attempts += 1
            i = int(rng.integers(len(sentences)))
            j = int(rng.integers(len(sentences)))
            si, sj = sentences[i], sentences[j]
            if i == j or si.entity_key == sj.entity_key or si.surface == sj.surface:
                continue
            ti, tj = dict_types[i], dict_types[j]
            if ti is None or tj is None or ti == tj:
                continue
            a = _render_side(si, cfg.alpha, rng)
            b = _render_side(sj, cfg.alpha, rng)
            pairs.append(PairExample(a=a, b=b, polarity="negative"))
            prov.append((i, j))
            accepted += 1
        return pairs, prov

    if parallel and n_shards > 1:
        with ThreadPoolExecutor(max_workers=n_shards) as pool:
            shard_results = list(pool.map(run_shard, range(n_shards)))
    else:
        shard_results = [run_shard(i) for i in range(n_shards)]

    pairs: list[PairExample] = []
    prov: list[tuple[int, int]] = []
    for shard_pairs, shard_prov in shard_results:
        pairs.extend(shard_pairs)
        prov.extend(shard_prov)
    return PairDataset(pairs=tuple(pairs), provenance=tuple(prov))


def js_similarity(p, q) -> float:
    """Jensen-Shannon divergence with natural log; in [0, ln 2].

    Both inputs must be normalized distributions over the same support.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ConfigurationError(
            f"distributions must share one support, got shapes {p.shape} and {q.shape}"
        )
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0) or abs(float(vec.sum()) - 1.0) > 1e-6:
            raise ConfigurationError(f"{name} is not a normalized distribution")
    m = 0.5 * (p + q)
    total = 0.0
    for x in (p, q):
        nz = x > 0.0
        total += 0.5 * float(np.sum(x[nz] * np.log(x[nz] / m[nz])))
    return total


def _pair_sides_backward(
    index: VerbalizerIndex,
    backend: MaskedLanguageBackend,
    caches,
    projections,
    dscore: float,
    grads: dict[str, np.ndarray],
) -> None:
    u, v = projections
    m = 0.5 * (u + v)
    for cache, proj, other in ((caches[0], u, v), (caches[1], v, u)):
        dproj = dscore * 0.5 * np.log(proj / m)
        r = cache.probs[index.union_ids]
        total = float(r.sum())
        dr = (dproj - float(dproj @ proj)) / total
        dprobs = np.zeros_like(cache.probs)
        dprobs[index.union_ids] = dr
        backend.mask_backward(cache, dprobs, grads)


def _selfsup_batch(
    pos_batch: Sequence[PairExample],
    neg_batch: Sequence[PairExample],
    index: VerbalizerIndex,
    backend: MaskedLanguageBackend,
    state: EncoderState,
    gamma: float,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    """Pair-level JS loss; optionally accumulate encoder gradients."""

    def side(p: PromptedInput):
        cache = backend.mask_forward(p, state)
        return cache, index.project(cache.probs)

    loss = 0.0
    n_pos = len(pos_batch)
    for pair in pos_batch:
        (ca, ua), (cb, ub) = side(pair.a), side(pair.b)
        s = js_similarity(ua, ub)
        loss += -math.log(1.0 - s) / n_pos
        if grads is not None:
            # d/ds of -log(1 - s) is 1 / (1 - s)
            _pair_sides_backward(
                index, backend, (ca, cb), (ua, ub), (1.0 / (1.0 - s)) / n_pos, grads
            )
    n_neg = len(neg_batch)
    for pair in neg_batch:
        (ca, ua), (cb, ub) = side(pair.a), side(pair.b)
        s = js_similarity(ua, ub)
        if s < _NEGATIVE_CLAMP:
            logger.warning(
                "negative pair similarity %.3g clamped to %.0e before log", s, _NEGATIVE_CLAMP
            )
            loss += -gamma * math.log(_NEGATIVE_CLAMP) / n_neg
            continue
        loss += -gamma * math.log(s) / n_neg
        if grads is not None:
            _pair_sides_backward(
                index, backend, (ca, cb), (ua, ub), (-gamma / s) / n_neg, grads
            )
    return loss


def selfsup_loss(
    pos_batch: Sequence[PairExample],
    neg_batch: Sequence[PairExample],
    v: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
    gamma: float,
) -> float:
    """Mean -log(1-s) over positives plus gamma * mean -log(s) over negatives."""
    index = VerbalizerIndex(v, state.vocab)
    return _selfsup_batch(pos_batch, neg_batch, index, backend, state, gamma)


@dataclass
class PretrainResult:
    state: EncoderState
    step_losses: list[float]


def pretrain(
    cfg: SelfSupConfig,
    pairs: PairDataset,
    v: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> PretrainResult:
    """Optimize the encoder on sampled pairs; no labeled examples are used.

    The verbalizer weights stay frozen; only encoder parameters (and the
    hide-symbol embedding registered here) move.
    """
    if not pairs.pairs:
        raise ConfigurationError("pair dataset is empty")
    state = state.copy()
    _, state = backend.register_special_tokens(state, [HIDE_TOKEN], seed=cfg.seed)
    index = VerbalizerIndex(v, state.vocab)
    optimizer = AdamW(
        dict(state.params), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    rng = np.random.default_rng(cfg.seed)
    all_pairs = list(pairs.pairs)
    losses: list[float] = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(all_pairs))
        for start in range(0, len(all_pairs), cfg.batch_size):
            chunk = [all_pairs[i] for i in perm[start : start + cfg.batch_size]]
            pos = [p for p in chunk if p.polarity == "positive"]
            neg = [p for p in chunk if p.polarity == "negative"]
            grads = state.zeros_like_params()
            loss = _selfsup_batch(pos, neg, index, backend, state, cfg.gamma, grads=grads)
            clip_global_norm(grads, cfg.clip_norm)
            optimizer.step(grads)
            losses.append(loss)
    return PretrainResult(state=state, step_losses=losses)


# ----------------------------------------------------------------------
# Pair file round-trip (JSONL)


def _side_to_fields(p: PromptedInput, prefix: str) -> dict:
    if any(" " in t for t in p.text_tokens):
        raise DataError("pair sides with space-bearing tokens cannot round-trip")
    return {
        f"{prefix}_text": " ".join(p.text_tokens),
        f"{prefix}_mask_index": p.mask_index,
    }


def write_pairs(path: str | Path, dataset: PairDataset) -> None:
    """Write pair JSONL; mention spans ride along so scoring survives reload."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in dataset:
            row = {
                **_side_to_fields(pair.a, "a"),
                **_side_to_fields(pair.b, "b"),
                "polarity": pair.polarity,
                "hidden_a": pair.a.hidden,
                "hidden_b": pair.b.hidden,
                "a_mention_span": list(pair.a.mention_copy_span)
                if pair.a.mention_copy_span
                else None,
                "b_mention_span": list(pair.b.mention_copy_span)
                if pair.b.mention_copy_span
                else None,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _side_from_fields(row: dict, prefix: str, lineno: int) -> PromptedInput:
    tokens = tuple(str(row[f"{prefix}_text"]).split(" "))
    span = row.get(f"{prefix}_mention_span")
    return PromptedInput(
        text_tokens=tokens,
        mask_index=int(row[f"{prefix}_mask_index"]),
        sentence_length=0,
        mention_copy_span=tuple(int(v) for v in span) if span else None,
        hidden=bool(row[f"hidden_{prefix}"]),
    )


def read_pairs(path: str | Path) -> PairDataset:
    pairs: list[PairExample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                pairs.append(
                    PairExample(
                        a=_side_from_fields(row, "a", lineno),
                        b=_side_from_fields(row, "b", lineno),
                        polarity=str(row["polarity"]),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise DataError(f"malformed pair row at line {lineno}: {e}") from None
    if not pairs:
        raise DataError(f"pair file {path} has no rows")
    return PairDataset(pairs=tuple(pairs))
