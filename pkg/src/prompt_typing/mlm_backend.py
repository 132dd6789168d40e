"""Masked-language-model engine contract and a deterministic toy engine.

The contract is small: an engine can register special tokens, produce a
normalized probability distribution over its vocabulary at the single
mask slot of a prompted input, and produce a fixed-width context vector
for the fine-tuning baseline.  Engines that support training also expose
a forward cache and a backward hook so loss functions can push gradients
into the encoder parameters.

The toy engine here runs the whole pipeline on CPU in seconds without
any pre-trained model.  Its "pre-trained knowledge" is a rule table:
a mention surface or a context keyword nominates one target word that
receives most of the probability mass, additively smoothed over the rest
of the vocabulary.  On top of that fixed prior sits a small trainable
model (token embeddings, an output projection, and a bias) whose
contribution is differentiable, so supervised tuning, soft prompts, and
the distribution-level contrastive objective all work end to end.

Adapter note: a real pre-trained engine can be wired in by implementing
the same surface (tokenize, mask logits, gradient step, token
registration).  A label word that such an engine splits into several
sub-tokens should be scored by the mean of the sub-token log
probabilities at the mask slot; the toy engine is whitespace-tokenized
and never splits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Protocol

import numpy as np

from .errors import ConfigurationError, EncodeError
from .templates import MASK_TOKEN, PromptedInput

if TYPE_CHECKING:
    from .datasets import TypingExample

__all__ = [
    "BackendVocabulary",
    "MaskDistribution",
    "EncoderState",
    "ToyRuleTable",
    "ToyMlmBackend",
    "MaskedLanguageBackend",
    "softmax",
]

ENTITY_MARKERS = ("[EntStart]", "[EntEnd]")

_STATE_VERSION = "toy-mlm-1"


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class BackendVocabulary:
    """Ordered word-to-id map with registered special tokens."""

    words: tuple[str, ...]
    special: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        idx = {w: i for i, w in enumerate(self.words)}
        if len(idx) != len(self.words):
            raise ConfigurationError("vocabulary contains duplicate words")
        if MASK_TOKEN not in idx:
            raise ConfigurationError("vocabulary must contain the mask token")
        for s in self.special:
            if s not in idx:
                raise ConfigurationError(f"special token {s!r} missing from vocabulary")
        object.__setattr__(self, "index", idx)

    @property
    def size(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        try:
            return self.index[word]
        except KeyError:
            raise EncodeError(f"token {word!r} is not in the backend vocabulary") from None

    def ids(self, tokens: Iterable[str]) -> np.ndarray:
        out = []
        for t in tokens:
            if t not in self.index:
                raise EncodeError(f"token {t!r} is not in the backend vocabulary")
            out.append(self.index[t])
        return np.asarray(out, dtype=np.int64)

    def content_hash(self) -> str:
        payload = "\x1f".join(self.words) + "\x1e" + "\x1f".join(self.special)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MaskDistribution:
    """Probability vector over the backend vocabulary at the mask slot."""

    probabilities: np.ndarray
    vocab: BackendVocabulary

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=np.float64)
        object.__setattr__(self, "probabilities", p)
        if p.shape != (self.vocab.size,):
            raise ConfigurationError(
                f"distribution length {p.shape} does not match vocabulary "
                f"size {self.vocab.size}"
            )
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-6:
            raise ConfigurationError("mask distribution must be normalized and >= 0")

    def probability_of(self, word: str) -> float:
        return float(self.probabilities[self.vocab.id(word)])

    def top_words(self, n: int = 5) -> list[tuple[str, float]]:
        order = np.argsort(-self.probabilities)[:n]
        return [(self.vocab.words[i], float(self.probabilities[i])) for i in order]


@dataclass
class EncoderState:
    """Trainable encoder parameters plus the vocabulary they are sized for."""

    vocab: BackendVocabulary
    params: dict[str, np.ndarray]
    version: str = _STATE_VERSION

    def copy(self) -> "EncoderState":
        return EncoderState(
            vocab=self.vocab,
            params={k: v.copy() for k, v in self.params.items()},
            version=self.version,
        )

    def zeros_like_params(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


@dataclass(frozen=True)
class ToyRuleTable:
    """The toy engine's fixed prior knowledge.

    ``mention_rules`` maps a lowercased mention surface to a (word, mass)
    pair; ``keyword_rules`` does the same for single context tokens.  A
    mention rule wins over keyword rules; keywords are matched by the
    leftmost matching token.  Hidden inputs never match mention rules.
    """

    mention_rules: dict[str, tuple[str, float]] = field(default_factory=dict)
    keyword_rules: dict[str, tuple[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.mention_rules, self.keyword_rules):
            for key, (word, mass) in table.items():
                if not 0.0 < mass < 1.0:
                    raise ConfigurationError(
                        f"rule mass for {key!r} must be in (0, 1), got {mass}"
                    )
                if not word:
                    raise ConfigurationError(f"rule for {key!r} has an empty target word")

    def target_words(self) -> tuple[str, ...]:
        out: list[str] = []
        for table in (self.mention_rules, self.keyword_rules):
            for word, _ in table.values():
                if word not in out:
                    out.append(word)
        return tuple(out)

    def match(self, p: PromptedInput) -> tuple[str, float] | None:
        if not p.hidden and p.mention_copy_span is not None:
            surface = " ".join(p.mention_tokens).lower()
            hit = self.mention_rules.get(surface)
            if hit is not None:
                return hit
        for tok in p.text_tokens:
            hit = self.keyword_rules.get(tok.lower())
            if hit is not None:
                return hit
        return None

    def to_json_obj(self) -> dict:
        return {
            "mentions": {k: [w, m] for k, (w, m) in self.mention_rules.items()},
            "keywords": {k: [w, m] for k, (w, m) in self.keyword_rules.items()},
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ToyRuleTable":
        return cls(
            mention_rules={
                str(k): (str(w), float(m)) for k, (w, m) in obj.get("mentions", {}).items()
            },
            keyword_rules={
                str(k): (str(w), float(m)) for k, (w, m) in obj.get("keywords", {}).items()
            },
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ToyRuleTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


@dataclass
class MaskForwardCache:
    """Intermediate values of one mask-distribution forward pass."""

    context_ids: np.ndarray
    h: np.ndarray
    probs: np.ndarray
    out_w: np.ndarray


class MaskedLanguageBackend(Protocol):
    """Engine contract used by the typing model and the training loops."""

    def register_special_tokens(
        self, state: EncoderState, names: list[str], seed: int = 0
    ) -> tuple[list[int], EncoderState]: ...

    def mask_distribution(self, p: PromptedInput, state: EncoderState) -> MaskDistribution: ...

    def cls_embedding(self, x: "TypingExample", state: EncoderState) -> np.ndarray: ...

    def mask_forward(self, p: PromptedInput, state: EncoderState) -> MaskForwardCache: ...

    def mask_backward(
        self, cache: MaskForwardCache, dprobs: np.ndarray, grads: dict[str, np.ndarray]
    ) -> None: ...


class ToyMlmBackend:
    """Deterministic, differentiable toy engine driven by a rule table."""

    def __init__(
        self,
        rules: ToyRuleTable | None = None,
        dim: int = 16,
        smoothing: float = 1e-4,
        emb_init_scale: float = 0.1,
        out_init_scale: float = 0.01,
        cls_width: int = 32,
    ) -> None:
        self.rules = rules if rules is not None else ToyRuleTable()
        self.dim = int(dim)
        self.smoothing = float(smoothing)
        self.emb_init_scale = float(emb_init_scale)
        self.out_init_scale = float(out_init_scale)
        self.cls_width = int(cls_width)

    # ------------------------------------------------------------------
    # State construction and special-token registration

    def build_state(self, corpus_words: Iterable[str], seed: int = 0) -> EncoderState:
        """A fresh state whose vocabulary covers the given words.

        Rule target words and the mask token are always included, so any
        rule can place mass and any prompt can be encoded.
        """
        words: list[str] = []
        seen: set[str] = set()
        for w in corpus_words:
            if w not in seen:
                seen.add(w)
                words.append(w)
        for w in self.rules.target_words():
            if w not in seen:
                seen.add(w)
                words.append(w)
        if MASK_TOKEN not in seen:
            words.append(MASK_TOKEN)
        vocab = BackendVocabulary(words=tuple(words), special=(MASK_TOKEN,))
        rng = np.random.default_rng(seed)
        params = {
            "emb": rng.normal(0.0, self.emb_init_scale, size=(vocab.size, self.dim)),
            "out_w": rng.normal(0.0, self.out_init_scale, size=(vocab.size, self.dim)),
            "out_b": np.zeros(vocab.size, dtype=np.float64),
        }
        return EncoderState(vocab=vocab, params=params)

    def register_special_tokens(
        self, state: EncoderState, names: list[str], seed: int = 0
    ) -> tuple[list[int], EncoderState]:
        """Append embeddings for new special tokens; idempotent for known ones."""
        if len(set(names)) != len(names):
            raise ConfigurationError(f"special token names must be distinct: {names}")
        vocab = state.vocab
        for n in names:
            if n in vocab.index and n not in vocab.special:
                raise ConfigurationError(
                    f"{n!r} is an ordinary vocabulary word, not a special token"
                )
        missing = [n for n in names if n not in vocab.index]
        if not missing:
            return [vocab.index[n] for n in names], state

        new_vocab = BackendVocabulary(
            words=vocab.words + tuple(missing),
            special=vocab.special + tuple(missing),
        )
        rng = np.random.default_rng(seed)
        k = len(missing)
        params = {
            "emb": np.concatenate(
                [state.params["emb"], rng.normal(0.0, self.emb_init_scale, (k, self.dim))]
            ),
            "out_w": np.concatenate(
                [state.params["out_w"], rng.normal(0.0, self.out_init_scale, (k, self.dim))]
            ),
            "out_b": np.concatenate([state.params["out_b"], np.zeros(k)]),
        }
        new_state = EncoderState(vocab=new_vocab, params=params, version=state.version)
        return [new_vocab.index[n] for n in names], new_state

    # ------------------------------------------------------------------
    # Mask distribution (rule prior + trainable correction)

    def _rule_log_bias(self, p: PromptedInput, vocab: BackendVocabulary) -> np.ndarray:
        hit = self.rules.match(p)
        if hit is None:
            return np.zeros(vocab.size)
        word, mass = hit
        if word not in vocab.index:
            raise ConfigurationError(
                f"rule target word {word!r} is missing from the vocabulary"
            )
        q = np.full(vocab.size, (1.0 - mass) / max(vocab.size - 1, 1))
        q[vocab.index[word]] = mass
        q += self.smoothing
        q /= q.sum()
        return np.log(q)

    def mask_forward(self, p: PromptedInput, state: EncoderState) -> MaskForwardCache:
        ids = state.vocab.ids(p.text_tokens)
        context_ids = np.delete(ids, p.mask_index)
        emb = state.params["emb"]
        out_w = state.params["out_w"]
        h = emb[context_ids].mean(axis=0)
        logits = self._rule_log_bias(p, state.vocab) + out_w @ h + state.params["out_b"]
        return MaskForwardCache(
            context_ids=context_ids, h=h, probs=softmax(logits), out_w=out_w
        )

    def mask_distribution(self, p: PromptedInput, state: EncoderState) -> MaskDistribution:
        cache = self.mask_forward(p, state)
        return MaskDistribution(probabilities=cache.probs, vocab=state.vocab)

    def mask_backward(
        self, cache: MaskForwardCache, dprobs: np.ndarray, grads: dict[str, np.ndarray]
    ) -> None:
        """Accumulate parameter gradients given dLoss/dprobabilities."""
        probs = cache.probs
        dlogits = probs * (dprobs - float(dprobs @ probs))
        grads["out_b"] += dlogits
        grads["out_w"] += np.outer(dlogits, cache.h)
        dh = cache.out_w.T @ dlogits
        np.add.at(grads["emb"], cache.context_ids, dh / len(cache.context_ids))

    # ------------------------------------------------------------------
    # Context vector for the fine-tuning baseline

    def cls_embedding(self, x: "TypingExample", state: EncoderState) -> np.ndarray:
        """Deterministic hash-derived sentence vector (width ``cls_width``).

        The mention span is surrounded with reserved marker tokens before
        hashing so the vector observes which span is marked.  The vector
        carries no trainable parameters; with this engine the fine-tuning
        baseline learns its classifier head only.
        """
        s, e = x.mention_span
        marked = (
            x.tokens[:s]
            + (ENTITY_MARKERS[0],)
            + x.tokens[s:e]
            + (ENTITY_MARKERS[1],)
            + x.tokens[e:]
        )
        key = "\x1f".join(marked).encode("utf-8")
        seed = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
        return np.random.default_rng(seed).standard_normal(self.cls_width)

    # ------------------------------------------------------------------
    # Persistence: metadata JSON + raw weights blob, byte-stable

    def save_state(self, state: EncoderState, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = [
            {"name": k, "shape": list(state.params[k].shape)}
            for k in sorted(state.params)
        ]
        metadata = {
            "version": state.version,
            "vocab_hash": state.vocab.content_hash(),
            "vocab": {"words": list(state.vocab.words), "special": list(state.vocab.special)},
            "backend": {
                "dim": self.dim,
                "smoothing": self.smoothing,
                "emb_init_scale": self.emb_init_scale,
                "out_init_scale": self.out_init_scale,
                "cls_width": self.cls_width,
                "rules": self.rules.to_json_obj(),
            },
            "params": manifest,
        }
        (directory / "metadata.json").write_text(
            json.dumps(metadata, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        blob = b"".join(
            np.ascontiguousarray(state.params[k], dtype="<f8").tobytes()
            for k in sorted(state.params)
        )
        (directory / "weights.bin").write_bytes(blob)

    @classmethod
    def load_state(cls, directory: str | Path) -> tuple["ToyMlmBackend", EncoderState]:
        directory = Path(directory)
        metadata = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
        b = metadata["backend"]
        backend = cls(
            rules=ToyRuleTable.from_json_obj(b["rules"]),
            dim=b["dim"],
            smoothing=b["smoothing"],
            emb_init_scale=b["emb_init_scale"],
            out_init_scale=b["out_init_scale"],
            cls_width=b["cls_width"],
        )
        vocab = BackendVocabulary(
            words=tuple(metadata["vocab"]["words"]),
            special=tuple(metadata["vocab"]["special"]),
        )
        if vocab.content_hash() != metadata["vocab_hash"]:
            raise ConfigurationError(f"vocabulary hash mismatch in {directory}")
        blob = (directory / "weights.bin").read_bytes()
        params: dict[str, np.ndarray] = {}
        offset = 0
        for entry in metadata["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            params[entry["name"]] = arr.reshape(shape).copy()
            offset += count * 8
        state = EncoderState(vocab=vocab, params=params, version=metadata["version"])
        return backend, state
