"""Type scoring: mask distributions to type scores, and the FT baseline.

The prompt path scores a type as the weighted mean of the raw mask-slot
probabilities of its label words, then normalizes across types so the
scores form a distribution (the cross-entropy objective needs one; the
argmax is unaffected).  The fine-tuning baseline path maps the encoder's
context vector through a learnable linear head and a softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, DegenerateScoreError
from .mlm_backend import EncoderState, MaskDistribution, MaskedLanguageBackend, softmax
from .schema_verbalizer import EntityType, LabelSchema, Verbalizer
from .templates import PromptedInput, TemplateSpec, render

if TYPE_CHECKING:
    from .datasets import TypingExample

__all__ = [
    "TypeScores",
    "FineTuneHead",
    "VerbalizerIndex",
    "project_distribution",
    "score_types",
    "predict",
    "predict_prompted",
    "ft_scores",
]


@dataclass(frozen=True)
class TypeScores:
    """Per-type scores; when normalized they sum to one."""

    per_type: dict[EntityType, float]
    normalized: bool

    def argmax(self) -> EntityType:
        """Highest-scoring type; ties break to the smaller canonical id."""
        best: EntityType | None = None
        best_score = -np.inf
        for t in sorted(self.per_type, key=lambda t: t.canonical_id):
            s = self.per_type[t]
            if s > best_score:
                best, best_score = t, s
        assert best is not None
        return best

    def as_id_dict(self) -> dict[str, float]:
        return {t.canonical_id: float(s) for t, s in self.per_type.items()}


@dataclass
class FineTuneHead:
    """Linear classifier (weight, bias) over the encoder context vector."""

    types: tuple[EntityType, ...]
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.types)
        if self.weight.ndim != 2 or self.weight.shape[0] != n or self.bias.shape != (n,):
            raise ConfigurationError(
                f"head shapes {self.weight.shape}/{self.bias.shape} do not match "
                f"{n} types"
            )

    @classmethod
    def initialize(
        cls, schema: LabelSchema, hidden_width: int, seed: int = 0, scale: float = 0.02
    ) -> "FineTuneHead":
        rng = np.random.default_rng(seed)
        return cls(
            types=tuple(schema),
            weight=rng.normal(0.0, scale, size=(len(schema), hidden_width)),
            bias=np.zeros(len(schema), dtype=np.float64),
        )

    def copy(self) -> "FineTuneHead":
        return FineTuneHead(self.types, self.weight.copy(), self.bias.copy())


class VerbalizerIndex:
    """A verbalizer resolved against one backend vocabulary.

    Precomputes label-word token ids so type scores and their gradients
    can be evaluated with array operations.  Weights can be swapped in
    (learnable-lambda mode) without re-resolving words.
    """

    def __init__(self, verbalizer: Verbalizer, vocab) -> None:
        if not verbalizer.union_vocabulary:
            raise ConfigurationError("verbalizer has an empty union vocabulary")
        self.verbalizer = verbalizer
        self.types: tuple[EntityType, ...] = verbalizer.types
        self.word_ids: list[np.ndarray] = []
        self.weights: list[np.ndarray] = []
        for t in self.types:
            words = verbalizer.words_for(t)
            try:
                ids = vocab.ids([w for w, _ in words])
            except Exception as e:
                raise ConfigurationError(
                    f"label word of type {t} not resolvable in backend vocabulary: {e}"
                ) from None
            self.word_ids.append(ids)
            self.weights.append(np.array([wt for _, wt in words], dtype=np.float64))
        self.union_ids: np.ndarray = vocab.ids(verbalizer.union_vocabulary)

    def set_weights_vector(self, flat: np.ndarray) -> None:
        i = 0
        for k, ids in enumerate(self.word_ids):
            n = len(ids)
            self.weights[k] = np.asarray(flat[i : i + n], dtype=np.float64)
            i += n

    def raw_scores(self, probs: np.ndarray) -> np.ndarray:
        """Per-type weighted mean of raw label-word probabilities."""
        return np.array(
            [
                float(self.weights[k] @ probs[self.word_ids[k]]) / len(self.word_ids[k])
                for k in range(len(self.types))
            ]
        )

    def scores_backward(
        self,
        probs: np.ndarray,
        dscores: np.ndarray,
        dprobs: np.ndarray,
        dweights: np.ndarray | None = None,
    ) -> None:
        """Accumulate dLoss/dprobs (and optionally dLoss/dweights)."""
        i = 0
        for k, ids in enumerate(self.word_ids):
            m = len(ids)
            np.add.at(dprobs, ids, dscores[k] * self.weights[k] / m)
            if dweights is not None:
                dweights[i : i + m] += dscores[k] * probs[ids] / m
            i += m

    def project(self, probs: np.ndarray) -> np.ndarray:
        """Restriction of a mask distribution to the union vocabulary."""
        r = probs[self.union_ids]
        total = float(r.sum())
        if total <= 0.0:
            raise DegenerateScoreError("no probability mass on the union vocabulary")
        return r / total


def project_distribution(d: MaskDistribution, v: Verbalizer) -> dict[str, float]:
    """Restrict ``d`` to the union vocabulary and renormalize to sum one."""
    index = VerbalizerIndex(v, d.vocab)
    projected = index.project(d.probabilities)
    return {w: float(p) for w, p in zip(v.union_vocabulary, projected)}


def score_types(d: MaskDistribution, v: Verbalizer, normalize: bool = True) -> TypeScores:
    """Score every type from raw (unprojected) label-word probabilities.

    score(y) = (1/m) * sum_j lambda_j * P(mask = w_j), over y's label
    words.  With ``normalize`` the scores are divided by their sum to
    form a distribution across types.
    """
    index = VerbalizerIndex(v, d.vocab)
    raw = index.raw_scores(d.probabilities)
    if not normalize:
        return TypeScores(dict(zip(index.types, raw.tolist())), normalized=False)
    total = float(raw.sum())
    if total <= 0.0:
        raise DegenerateScoreError("all type scores are zero; cannot normalize")
    return TypeScores(dict(zip(index.types, (raw / total).tolist())), normalized=True)


def predict_prompted(
    p: PromptedInput,
    v: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> EntityType:
    d = backend.mask_distribution(p, state)
    return score_types(d, v, normalize=False).argmax()


def predict(
    x: "TypingExample",
    spec: TemplateSpec,
    v: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> EntityType:
    """Render, encode, score, and return the argmax type."""
    return predict_prompted(render(spec, x), v, backend, state)


def ft_scores(
    x: "TypingExample",
    head: FineTuneHead,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> TypeScores:
    """softmax(W h + b) over the encoder's context vector."""
    h = backend.cls_embedding(x, state)
    if head.weight.shape[1] != h.shape[0]:
        raise ConfigurationError(
            f"head width {head.weight.shape[1]} does not match encoder "
            f"width {h.shape[0]}"
        )
    probs = softmax(head.weight @ h + head.bias)
    return TypeScores(dict(zip(head.types, probs.tolist())), normalized=True)
