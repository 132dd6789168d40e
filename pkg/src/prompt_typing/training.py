"""Supervised and few-shot optimization for the prompt and FT paths.

Both paths minimize mean negative log likelihood of the gold type with a
decoupled-weight-decay adaptive-moment optimizer, clip gradients at a
global norm of 1.0, evaluate on the dev split every ``eval_every_steps``
optimizer steps, and select the checkpoint with the best dev loose micro
F1.  With the toy engine the FT context vector carries no trainable
parameters, so FT mode trains the classifier head alone; prompt mode
trains the encoder parameters, soft-prompt embeddings, and (optionally)
the verbalizer weights with a non-negativity clamp after each step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import TypingDataset, TypingExample
from .errors import ConfigurationError, DataError, TrainingError
from .metrics import EvalResult, evaluate
from .mlm_backend import EncoderState, MaskedLanguageBackend, ToyMlmBackend, softmax
from .schema_verbalizer import EntityType, Verbalizer
from .templates import PromptedInput, TemplateSpec, render
from .typing_model import FineTuneHead, VerbalizerIndex

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainResult",
    "AdamW",
    "clip_global_norm",
    "prompt_loss",
    "ft_loss",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "prompt"
    template: TemplateSpec = field(default_factory=lambda: TemplateSpec.hard("t3"))
    learning_rate: float = 5e-5
    batch_size: int = 16
    epochs: int = 30
    eval_every_steps: int = 25
    seed: int = 0
    lambda_learnable: bool = False
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("ft", "prompt"):
            raise ConfigurationError(f"mode must be 'ft' or 'prompt', got {self.mode!r}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every_steps < 1:
            raise ConfigurationError(
                "batch_size, epochs and eval_every_steps must all be >= 1"
            )


@dataclass(frozen=True)
class EvalPoint:
    step: int
    strict_acc: float
    loose_micro_f1: float
    loose_macro_f1: float


@dataclass(frozen=True)
class TrainReport:
    history: tuple[EvalPoint, ...]
    best_step: int
    best_dev: EvalResult
    test: EvalResult

    def to_json_obj(self) -> dict:
        return {
            "history": [
                {
                    "step": h.step,
                    "strict_acc": h.strict_acc,
                    "loose_micro_f1": h.loose_micro_f1,
                    "loose_macro_f1": h.loose_macro_f1,
                }
                for h in self.history
            ],
            "best_step": self.best_step,
            "best_dev": self.best_dev.to_json_obj(),
            "test": self.test.to_json_obj(),
        }


@dataclass
class TrainResult:
    state: EncoderState
    head: FineTuneHead | None
    verbalizer: Verbalizer
    report: TrainReport
    step_losses: list[float]


class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay.

    Operates in place on a dict of parameter arrays; gradients are passed
    as a matching dict.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float,
        weight_decay: float = 0.01,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / (1.0 - b1**self.t)
            v_hat = self.v[k] / (1.0 - b2**self.t)
            p -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _gold_positions(index: VerbalizerIndex) -> dict[str, int]:
    return {t.canonical_id: i for i, t in enumerate(index.types)}


def _argmax_order(types: Sequence[EntityType]) -> list[int]:
    return sorted(range(len(types)), key=lambda i: types[i].canonical_id)


def _argmax(scores: np.ndarray, order: list[int]) -> int:
    best, best_score = order[0], -np.inf
    for i in order:
        if scores[i] > best_score:
            best, best_score = i, float(scores[i])
    return best


def _prompt_batch(
    batch: Sequence[tuple[PromptedInput, EntityType]],
    index: VerbalizerIndex,
    backend: MaskedLanguageBackend,
    state: EncoderState,
    grads: dict[str, np.ndarray] | None = None,
    dweights: np.ndarray | None = None,
    ids: Sequence[str] | None = None,
) -> float:
    """Mean prompt loss over a batch; optionally accumulate gradients."""
    if not batch:
        raise TrainingError("prompt loss requires a non-empty batch")
    gold_pos = _gold_positions(index)
    n = len(batch)
    total = 0.0
    for j, (p, gold) in enumerate(batch):
        g = gold_pos.get(gold.canonical_id)
        if g is None:
            raise ConfigurationError(f"gold type {gold} is not covered by the verbalizer")
        cache = backend.mask_forward(p, state)
        scores = index.raw_scores(cache.probs)
        denom = float(scores.sum())
        if denom <= 0.0 or scores[g] <= 0.0:
            ref = ids[j] if ids is not None else f"batch[{j}]"
            raise TrainingError(f"degenerate all-zero type scores for example {ref}")
        total += -math.log(scores[g] / denom)
        if grads is not None:
            dscores = np.full(len(scores), 1.0 / denom)
            dscores[g] -= 1.0 / float(scores[g])
            dprobs = np.zeros_like(cache.probs)
            index.scores_backward(cache.probs, dscores / n, dprobs, dweights)
            backend.mask_backward(cache, dprobs, grads)
    return total / n


def prompt_loss(
    batch: Sequence[tuple[PromptedInput, EntityType]],
    v: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
    ids: Sequence[str] | None = None,
) -> float:
    """Mean over the batch of -log normalized gold type score."""
    index = VerbalizerIndex(v, state.vocab)
    return _prompt_batch(batch, index, backend, state, ids=ids)


def _ft_batch(
    batch: Sequence[tuple[TypingExample, EntityType]],
    head: FineTuneHead,
    backend: MaskedLanguageBackend,
    state: EncoderState,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    if not batch:
        raise TrainingError("ft loss requires a non-empty batch")
    pos = {t.canonical_id: i for i, t in enumerate(head.types)}
    n = len(batch)
    total = 0.0
    for x, gold in batch:
        g = pos.get(gold.canonical_id)
        if g is None:
            raise ConfigurationError(f"gold type {gold} is not covered by the head")
        h = backend.cls_embedding(x, state)
        probs = softmax(head.weight @ h + head.bias)
        total += -math.log(float(probs[g]))
        if grads is not None:
            dlogits = probs.copy()
            dlogits[g] -= 1.0
            dlogits /= n
            grads["head_w"] += np.outer(dlogits, h)
            grads["head_b"] += dlogits
    return total / n


def ft_loss(
    batch: Sequence[tuple[TypingExample, EntityType]],
    head: FineTuneHead,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> float:
    """Mean over the batch of -log softmax(W h + b) at the gold type."""
    return _ft_batch(batch, head, backend, state)


def _check_splits(
    train_ds: TypingDataset, dev_ds: TypingDataset, test_ds: TypingDataset
) -> None:
    ids = set(train_ds.schema.canonical_ids)
    for other in (dev_ds, test_ds):
        if set(other.schema.canonical_ids) != ids:
            raise ConfigurationError(
                f"splits {train_ds.split!r} and {other.split!r} use different schemas"
            )
    for other in (dev_ds, test_ds):
        overlap = train_ds.ids & other.ids
        if overlap:
            raise DataError(
                f"split {other.split!r} shares {len(overlap)} example ids with the "
                f"train split"
            )


def train(
    config: TrainConfig,
    train_ds: TypingDataset,
    dev_ds: TypingDataset,
    test_ds: TypingDataset,
    verbalizer: Verbalizer,
    backend: MaskedLanguageBackend,
    state: EncoderState,
) -> TrainResult:
    """Optimize, evaluate periodically on dev, return best-dev test metrics."""
    if len(train_ds) == 0:
        raise ConfigurationError("train split is empty")
    _check_splits(train_ds, dev_ds, test_ds)

    state = state.copy()
    if config.mode == "prompt" and config.template.kind == "soft":
        _, state = backend.register_special_tokens(
            state, list(config.template.soft_token_names), seed=config.seed
        )

    index = VerbalizerIndex(verbalizer, state.vocab)
    order = _argmax_order(index.types)
    lam = verbalizer.weights_vector() if config.lambda_learnable else None

    head: FineTuneHead | None = None
    if config.mode == "ft":
        width = backend.cls_embedding(train_ds.examples[0], state).shape[0]
        head = FineTuneHead.initialize(train_ds.schema, width, seed=config.seed)
        opt_params: dict[str, np.ndarray] = {"head_w": head.weight, "head_b": head.bias}
        train_items = [(ex, ex.gold_type) for ex in train_ds]
        dev_items = list(dev_ds.examples)
        test_items = list(test_ds.examples)
    else:
        opt_params = dict(state.params)
        if lam is not None:
            opt_params["lambda"] = lam
        train_items = [(render(config.template, ex), ex.gold_type) for ex in train_ds]
        dev_items = [render(config.template, ex) for ex in dev_ds]
        test_items = [render(config.template, ex) for ex in test_ds]
    train_ids = [ex.id for ex in train_ds]

    optimizer = AdamW(
        opt_params, lr=config.learning_rate, weight_decay=config.weight_decay
    )

    def predict_rendered(items) -> list[EntityType]:
        preds = []
        if config.mode == "ft":
            for x in items:
                h = backend.cls_embedding(x, state)
                scores = head.weight @ h + head.bias
                preds.append(head.types[_argmax(scores, _argmax_order(head.types))])
        else:
            if lam is not None:
                index.set_weights_vector(lam)
            for p in items:
                cache = backend.mask_forward(p, state)
                preds.append(index.types[_argmax(index.raw_scores(cache.probs), order)])
        return preds

    def dev_eval() -> EvalResult:
        preds = predict_rendered(dev_items)
        return evaluate(preds, [ex.gold_type for ex in dev_ds])

    rng = np.random.default_rng(config.seed)
    n = len(train_items)
    step = 0
    losses: list[float] = []
    history: list[EvalPoint] = []
    best: (
        tuple[EvalResult, int, EncoderState, FineTuneHead | None, np.ndarray | None] | None
    ) = None

    def record_eval() -> None:
        nonlocal best
        result = dev_eval()
        history.append(
            EvalPoint(
                step=step,
                strict_acc=result.strict_acc,
                loose_micro_f1=result.loose_micro_f1,
                loose_macro_f1=result.loose_macro_f1,
            )
        )
        if best is None or result.loose_micro_f1 > best[0].loose_micro_f1:
            best = (
                result,
                step,
                state.copy(),
                head.copy() if head is not None else None,
                lam.copy() if lam is not None else None,
            )

    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            chunk = perm[start : start + config.batch_size]
            batch = [train_items[i] for i in chunk]
            batch_ids = [train_ids[i] for i in chunk]
            if config.mode == "ft":
                grads = {"head_w": np.zeros_like(head.weight), "head_b": np.zeros_like(head.bias)}
                loss = _ft_batch(batch, head, backend, state, grads=grads)
            else:
                grads = state.zeros_like_params()
                dweights = np.zeros_like(lam) if lam is not None else None
                if lam is not None:
                    index.set_weights_vector(lam)
                loss = _prompt_batch(
                    batch, index, backend, state, grads=grads, dweights=dweights, ids=batch_ids
                )
                if lam is not None:
                    grads["lambda"] = dweights
            clip_global_norm(grads, config.clip_norm)
            optimizer.step(grads)
            if lam is not None:
                np.maximum(lam, 0.0, out=lam)
            losses.append(loss)
            step += 1
            if step % config.eval_every_steps == 0:
                record_eval()

    if step == 0 or step % config.eval_every_steps != 0:
        record_eval()

    assert best is not None
    best_result, best_step, best_state, best_head, best_lam = best
    state = best_state
    head = best_head
    if lam is not None and best_lam is not None:
        lam = best_lam
        index.set_weights_vector(lam)

    test_preds = predict_rendered(test_items)
    test_result = evaluate(test_preds, [ex.gold_type for ex in test_ds])

    final_verbalizer = (
        verbalizer.with_weights(lam) if lam is not None else verbalizer
    )
    report = TrainReport(
        history=tuple(history),
        best_step=best_step,
        best_dev=best_result,
        test=test_result,
    )
    return TrainResult(
        state=state,
        head=head,
        verbalizer=final_verbalizer,
        report=report,
        step_losses=losses,
    )


def save_checkpoint(directory: str | Path, backend: ToyMlmBackend, result: TrainResult) -> None:
    """Write a self-contained checkpoint: encoder state, verbalizer, head."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    backend.save_state(result.state, directory / "encoder")
    result.verbalizer.save(directory / "verbalizer.json")
    schema_obj = {"labels": [t.canonical_id for t in result.verbalizer.types]}
    (directory / "schema.json").write_text(
        json.dumps(schema_obj, indent=2) + "\n", encoding="utf-8"
    )
    if result.head is not None:
        meta = {
            "types": [t.canonical_id for t in result.head.types],
            "hidden_width": int(result.head.weight.shape[1]),
        }
        (directory / "head.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        blob = (
            np.ascontiguousarray(result.head.weight, dtype="<f8").tobytes()
            + np.ascontiguousarray(result.head.bias, dtype="<f8").tobytes()
        )
        (directory / "head.bin").write_bytes(blob)


def load_checkpoint(
    directory: str | Path,
) -> tuple[ToyMlmBackend, EncoderState, FineTuneHead | None, Verbalizer]:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    directory = Path(directory)
    backend, state = ToyMlmBackend.load_state(directory / "encoder")
    schema = None
    schema_file = directory / "schema.json"
    if schema_file.exists():
        from .schema_verbalizer import parse_label_schema

        labels = json.loads(schema_file.read_text(encoding="utf-8"))["labels"]
        schema = parse_label_schema(labels, separator="/")
    verbalizer = Verbalizer.load(directory / "verbalizer.json", schema=schema)
    head = None
    head_meta = directory / "head.json"
    if head_meta.exists():
        meta = json.loads(head_meta.read_text(encoding="utf-8"))
        types = tuple(EntityType.parse(cid) for cid in meta["types"])
        width = int(meta["hidden_width"])
        blob = (directory / "head.bin").read_bytes()
        weight = np.frombuffer(blob, dtype="<f8", count=len(types) * width).reshape(
            len(types), width
        )
        bias = np.frombuffer(blob, dtype="<f8", count=len(types), offset=len(types) * width * 8)
        head = FineTuneHead(types=types, weight=weight.copy(), bias=bias.copy())
    return backend, state, head, verbalizer
