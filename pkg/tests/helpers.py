"""Shared synthetic worlds and independent oracles for the test suite.

The toy world has six hierarchical types.  Every sentence mentions one
entity and usually carries one of its type's keyword tokens; the rule
table knows only some of those keywords, which is the "pre-trained
knowledge" the prompt path starts from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from prompt_typing.datasets import TypingDataset, TypingExample
from prompt_typing.mlm_backend import EncoderState, ToyMlmBackend, ToyRuleTable
from prompt_typing.schema_verbalizer import (
    LabelSchema,
    Verbalizer,
    build_verbalizer,
    parse_label_schema,
)
from prompt_typing.selfsup import LinkedSentence, TypeDictionary
from prompt_typing.templates import TemplateSpec

COARSE_LEAVES = [
    ("location", "city"),
    ("location", "mountain"),
    ("person", "artist"),
    ("person", "politician"),
    ("organization", "company"),
    ("event", "war"),
]

FILLERS = (
    "the", "old", "grand", "near", "seen", "by",
    "with", "story", "about", "report", "from", "note",
)

KEYWORDS_PER_TYPE = 3


def make_schema() -> LabelSchema:
    return parse_label_schema(
        [f"{c}/{leaf}" for c, leaf in COARSE_LEAVES], separator="/", name="toy6"
    )


def keyword_token(leaf: str, m: int) -> str:
    return f"kw_{leaf}_{m}"


def entity_token(leaf: str, i: int) -> str:
    return f"ent_{leaf}_{i}"


def make_rules(known_keywords: int, mass: float) -> ToyRuleTable:
    """Keyword rules for the first ``known_keywords`` keywords of each type."""
    keyword_rules = {}
    for _, leaf in COARSE_LEAVES:
        for m in range(known_keywords):
            keyword_rules[keyword_token(leaf, m)] = (leaf, mass)
    return ToyRuleTable(keyword_rules=keyword_rules)


def _sentence(rng: np.random.Generator, ent: str, kw: str | None):
    lead = [FILLERS[int(i)] for i in rng.integers(0, len(FILLERS), rng.integers(1, 3))]
    mid = [FILLERS[int(i)] for i in rng.integers(0, len(FILLERS), rng.integers(1, 3))]
    tokens = lead + [ent] + mid + ([kw] if kw else [])
    tail = [FILLERS[int(i)] for i in rng.integers(0, len(FILLERS), rng.integers(0, 2))]
    tokens += tail
    pos = len(lead)
    return tuple(tokens), (pos, pos + 1)


@dataclass
class ToyWorld:
    schema: LabelSchema
    verbalizer: Verbalizer
    rules: ToyRuleTable
    backend: ToyMlmBackend
    state: EncoderState
    corpus: list[LinkedSentence]
    type_dict: TypeDictionary
    test_set: TypingDataset
    train_pool: TypingDataset


def all_world_tokens() -> list[str]:
    tokens: list[str] = list(FILLERS)
    for _, leaf in COARSE_LEAVES:
        for m in range(KEYWORDS_PER_TYPE):
            tokens.append(keyword_token(leaf, m))
        for i in range(64):
            tokens.append(entity_token(leaf, i))
    return tokens


def build_toy_world(
    seed: int = 0,
    entities_per_type: int = 8,
    mentions_per_entity: int = 6,
    known_keywords: int = 1,
    rule_mass: float = 0.55,
    keyword_prob: float = 1.0,
    test_per_type: int = 50,
    train_per_type: int = 20,
    dim: int = 16,
) -> ToyWorld:
    rng = np.random.default_rng(seed)
    schema = make_schema()
    verbalizer = build_verbalizer(schema)
    rules = make_rules(known_keywords, rule_mass)
    backend = ToyMlmBackend(rules=rules, dim=dim)

    corpus: list[LinkedSentence] = []
    dict_entries: dict[str, str] = {}
    for t, (coarse, leaf) in zip(schema, COARSE_LEAVES):
        for i in range(entities_per_type):
            ent = entity_token(leaf, i)
            qid = f"Q_{leaf}_{i}"
            dict_entries[qid] = coarse
            for _ in range(mentions_per_entity):
                kw = None
                if rng.random() < keyword_prob:
                    kw = keyword_token(leaf, int(rng.integers(KEYWORDS_PER_TYPE)))
                tokens, span = _sentence(rng, ent, kw)
                corpus.append(
                    LinkedSentence(tokens=tokens, mention_span=span, entity_id=qid)
                )

    def labeled(n_per_type: int, prefix: str) -> TypingDataset:
        examples = []
        for t, (coarse, leaf) in zip(schema, COARSE_LEAVES):
            for j in range(n_per_type):
                ent = entity_token(leaf, int(rng.integers(entities_per_type)))
                kw = None
                if rng.random() < keyword_prob:
                    kw = keyword_token(leaf, int(rng.integers(KEYWORDS_PER_TYPE)))
                tokens, span = _sentence(rng, ent, kw)
                examples.append(
                    TypingExample(
                        id=f"{prefix}-{leaf}-{j}",
                        tokens=tokens,
                        mention_span=span,
                        gold_type=t,
                    )
                )
        return TypingDataset(tuple(examples), schema=schema, split=prefix)

    test_set = labeled(test_per_type, "test")
    train_pool = labeled(train_per_type, "pool")

    words = all_world_tokens()
    words += list(TemplateSpec.hard("t3").static_tokens())
    words += list(verbalizer.union_vocabulary)
    state = backend.build_state(words, seed=seed)
    return ToyWorld(
        schema=schema,
        verbalizer=verbalizer,
        rules=rules,
        backend=backend,
        state=state,
        corpus=corpus,
        type_dict=TypeDictionary(entries=dict_entries),
        test_set=test_set,
        train_pool=train_pool,
    )


# ----------------------------------------------------------------------
# Independent oracles


def js_oracle(p, q) -> float:
    """Brute-force KL summation, term by term, natural log."""
    m = [(pi + qi) / 2.0 for pi, qi in zip(p, q)]

    def kl(x, y):
        total = 0.0
        for xi, yi in zip(x, y):
            if xi > 0.0:
                total += xi * math.log(xi / yi)
        return total

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def expand_oracle(t) -> set[str]:
    parts = t.canonical_id.split("/")
    return {"/".join(parts[: i + 1]) for i in range(len(parts))}


def metrics_oracle(preds, golds) -> dict:
    """First-principles recomputation of every evaluation metric."""
    n = len(golds)
    strict = 0
    ps, rs, fs = [], [], []
    inter_sum = pred_sum = gold_sum = 0
    for pred, gold in zip(preds, golds):
        pset, gset = expand_oracle(pred), expand_oracle(gold)
        inter = len(pset & gset)
        if pset == gset:
            strict += 1
        p_i, r_i = inter / len(pset), inter / len(gset)
        ps.append(p_i)
        rs.append(r_i)
        fs.append(0.0 if p_i + r_i == 0 else 2 * p_i * r_i / (p_i + r_i))
        inter_sum += inter
        pred_sum += len(pset)
        gold_sum += len(gset)
    macro_p = sum(ps) / n
    macro_r = sum(rs) / n
    micro_p = inter_sum / pred_sum
    micro_r = inter_sum / gold_sum

    def f1(p, r):
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    return {
        "strict_acc": strict / n,
        "loose_macro_p": macro_p,
        "loose_macro_r": macro_r,
        "loose_macro_f1": f1(macro_p, macro_r),
        "loose_macro_f1_per_example": sum(fs) / n,
        "loose_micro_p": micro_p,
        "loose_micro_r": micro_r,
        "loose_micro_f1": f1(micro_p, micro_r),
    }


def eq3_oracle(probs, verbalizer: Verbalizer, vocab) -> dict:
    """Direct summation of the per-type weighted-mean score."""
    out = {}
    for t in verbalizer.types:
        words = verbalizer.words_for(t)
        total = 0.0
        for w, weight in words:
            total += weight * float(probs[vocab.id(w)])
        out[t] = total / len(words)
    return out


def fd_gradient_violations(
    loss_fn, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
    h: float = 1e-6, rtol: float = 1e-4, atol: float = 1e-7,
) -> list[tuple[str, int, float, float]]:
    """Central-difference check; returns coordinates violating the tolerance."""
    bad = []
    for name, p in params.items():
        flat_p = p.ravel()
        flat_g = grads[name].ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            lp = loss_fn()
            flat_p[i] = orig - h
            lm = loss_fn()
            flat_p[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            if abs(numeric - flat_g[i]) > rtol * max(abs(numeric), abs(flat_g[i])) + atol:
                bad.append((name, i, float(flat_g[i]), float(numeric)))
    return bad


def random_distribution(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.dirichlet(np.ones(size))
