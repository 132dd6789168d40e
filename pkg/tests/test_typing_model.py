import numpy as np
import pytest

from helpers import eq3_oracle, random_distribution

from prompt_typing.datasets import TypingExample
from prompt_typing.errors import ConfigurationError, DegenerateScoreError
from prompt_typing.mlm_backend import (
    BackendVocabulary,
    MaskDistribution,
    ToyMlmBackend,
    ToyRuleTable,
)
from prompt_typing.schema_verbalizer import (
    EntityType,
    Verbalizer,
    build_verbalizer,
    parse_label_schema,
)
from prompt_typing.templates import MASK_TOKEN, TemplateSpec
from prompt_typing.typing_model import (
    FineTuneHead,
    ft_scores,
    predict,
    project_distribution,
    score_types,
)


def make_vocab(words):
    return BackendVocabulary(words=tuple(words) + (MASK_TOKEN,), special=(MASK_TOKEN,))


def dist(vocab, mapping):
    p = np.zeros(vocab.size)
    for w, value in mapping.items():
        p[vocab.id(w)] = value
    rest = 1.0 - p.sum()
    free = [i for i in range(vocab.size) if p[i] == 0.0]
    if free and rest > 0:
        p[free] = rest / len(free)
    return MaskDistribution(probabilities=p, vocab=vocab)


class TestProjectDistribution:
    def test_uniform_restriction(self):
        vocab = make_vocab([f"w{i}" for i in range(9)])  # 10 words with [MASK]
        d = MaskDistribution(probabilities=np.full(10, 0.1), vocab=vocab)
        schema = parse_label_schema(["w0", "w1"])
        v = build_verbalizer(schema)
        proj = project_distribution(d, v)
        assert proj == {"w0": 0.5, "w1": 0.5}

    def test_renormalization(self):
        vocab = make_vocab(["city", "person", "x", "y"])
        d = dist(vocab, {"city": 0.6, "person": 0.2})
        schema = parse_label_schema(["city", "person"])
        proj = project_distribution(d, build_verbalizer(schema))
        assert proj["city"] == pytest.approx(0.75, abs=1e-12)
        assert proj["person"] == pytest.approx(0.25, abs=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        vocab = make_vocab([f"w{i}" for i in range(20)])
        schema = parse_label_schema(["w1", "w5", "w7"])
        v = build_verbalizer(schema)
        for _ in range(100):
            d = MaskDistribution(random_distribution(rng, vocab.size), vocab=vocab)
            total = sum(project_distribution(d, v).values())
            assert abs(total - 1.0) <= 1e-9

    def test_missing_word_errors(self):
        vocab = make_vocab(["a"])
        d = dist(vocab, {"a": 1.0})
        schema = parse_label_schema(["zebra"])
        with pytest.raises(ConfigurationError):
            project_distribution(d, build_verbalizer(schema))


class TestScoreTypes:
    def test_weighted_mean(self):
        vocab = make_vocab(["w1", "w2", "other"])
        t = EntityType.parse("y")
        v = Verbalizer(per_type_words={t: (("w1", 1.0), ("w2", 1.0))})
        d = dist(vocab, {"w1": 0.2, "w2": 0.4})
        raw = score_types(d, v, normalize=False)
        assert raw.per_type[t] == pytest.approx(0.3, abs=1e-12)

    def test_normalization_across_types(self):
        vocab = make_vocab(["a", "b", "pad"])
        ta, tb = EntityType.parse("ta"), EntityType.parse("tb")
        v = Verbalizer(per_type_words={ta: (("a", 1.0),), tb: (("b", 1.0),)})
        d = dist(vocab, {"a": 0.3, "b": 0.1})
        scores = score_types(d, v)
        assert scores.normalized
        assert scores.per_type[ta] == pytest.approx(0.75, abs=1e-12)
        assert scores.per_type[tb] == pytest.approx(0.25, abs=1e-12)

    def test_lambda_weighting(self):
        vocab = make_vocab(["w1", "w2", "pad"])
        t = EntityType.parse("y")
        v = Verbalizer(per_type_words={t: (("w1", 2.0), ("w2", 0.0))})
        d = dist(vocab, {"w1": 0.2, "w2": 0.4})
        raw = score_types(d, v, normalize=False)
        assert raw.per_type[t] == pytest.approx(0.2, abs=1e-12)

    def test_degenerate_all_zero(self):
        vocab = make_vocab(["a", "b", "sink"])
        t = EntityType.parse("ta")
        v = Verbalizer(per_type_words={t: (("a", 1.0),)})
        d = dist(vocab, {"sink": 1.0})
        with pytest.raises(DegenerateScoreError):
            score_types(d, v)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(7)
        words = [f"w{i}" for i in range(30)]
        vocab = make_vocab(words)
        for _ in range(200):
            n_types = int(rng.integers(2, 7))
            per_type = {}
            for k in range(n_types):
                m = int(rng.integers(1, 5))
                chosen = rng.choice(30, size=m, replace=False)
                per_type[EntityType.parse(f"t{k}")] = tuple(
                    (words[int(i)], float(rng.uniform(0, 2))) for i in chosen
                )
            v = Verbalizer(per_type_words=per_type)
            d = MaskDistribution(random_distribution(rng, vocab.size), vocab=vocab)
            raw = score_types(d, v, normalize=False).per_type
            oracle = eq3_oracle(d.probabilities, v, vocab)
            for t in per_type:
                assert abs(raw[t] - oracle[t]) <= 1e-9

    def test_argmax_invariant_under_lambda_scaling(self):
        rng = np.random.default_rng(11)
        words = [f"w{i}" for i in range(20)]
        vocab = make_vocab(words)
        for _ in range(100):
            per_type = {}
            for k in range(4):
                m = int(rng.integers(1, 4))
                chosen = rng.choice(20, size=m, replace=False)
                per_type[EntityType.parse(f"t{k}")] = tuple(
                    (words[int(i)], float(rng.uniform(0.1, 2))) for i in chosen
                )
            v = Verbalizer(per_type_words=per_type)
            d = MaskDistribution(random_distribution(rng, vocab.size), vocab=vocab)
            base = score_types(d, v, normalize=False).argmax()
            scale = float(rng.uniform(0.5, 10))
            scaled = v.with_weights(v.weights_vector() * scale)
            assert score_types(d, scaled, normalize=False).argmax() == base

    def test_singleton_sets_match_projection(self):
        rng = np.random.default_rng(3)
        words = [f"w{i}" for i in range(10)]
        vocab = make_vocab(words)
        per_type = {
            EntityType.parse(f"t{k}"): ((words[k], 1.0),) for k in range(5)
        }
        v = Verbalizer(per_type_words=per_type)
        for _ in range(50):
            d = MaskDistribution(random_distribution(rng, vocab.size), vocab=vocab)
            scores = score_types(d, v)
            proj = project_distribution(d, v)
            for k in range(5):
                assert abs(scores.per_type[EntityType.parse(f"t{k}")] - proj[words[k]]) <= 1e-9


class TestPredict:
    def test_rule_driven_prediction(self):
        schema = parse_label_schema(["location/city", "person"])
        v = build_verbalizer(schema)
        rules = ToyRuleTable(mention_rules={"new york": ("city", 0.9)})
        backend = ToyMlmBackend(rules=rules, dim=8)
        x = TypingExample(
            id="ny", tokens=("He", "is", "from", "New", "York"), mention_span=(3, 5),
            gold_type=schema.get("location/city"),
        )
        spec = TemplateSpec.hard("t3")
        words = list(x.tokens) + list(spec.static_tokens()) + list(v.union_vocabulary)
        state = backend.build_state(words, seed=0)
        assert predict(x, spec, v, backend, state).canonical_id == "location/city"

    def test_tie_breaks_to_smaller_id(self):
        schema = parse_label_schema(["b/x", "a/y"])
        v = build_verbalizer(schema)
        backend = ToyMlmBackend(rules=ToyRuleTable(), dim=4)
        x = TypingExample(
            id="t", tokens=("alpha", "beta"), mention_span=(0, 1),
            gold_type=schema.get("b/x"),
        )
        spec = TemplateSpec.hard("t1")
        words = list(x.tokens) + list(spec.static_tokens()) + list(v.union_vocabulary)
        state = backend.build_state(words, seed=0)
        # exact uniform distribution: zero the trainable correction
        state.params["out_w"][:] = 0.0
        state.params["out_b"][:] = 0.0
        assert predict(x, spec, v, backend, state).canonical_id == "a/y"

    def test_deterministic_and_total(self, weak_world):
        spec = TemplateSpec.hard("t3")
        ids = set(weak_world.schema.canonical_ids)
        for ex in list(weak_world.test_set)[:50]:
            p1 = predict(ex, spec, weak_world.verbalizer, weak_world.backend, weak_world.state)
            p2 = predict(ex, spec, weak_world.verbalizer, weak_world.backend, weak_world.state)
            assert p1 == p2
            assert p1.canonical_id in ids


class TestFtScores:
    def test_zero_head_uniform(self):
        schema = parse_label_schema(["a", "b", "c", "d"])
        backend = ToyMlmBackend(dim=4)
        x = TypingExample(
            id="x", tokens=("tok",), mention_span=(0, 1), gold_type=schema.get("a")
        )
        head = FineTuneHead(
            types=tuple(schema), weight=np.zeros((4, 32)), bias=np.zeros(4)
        )
        state = backend.build_state(["tok"], seed=0)
        scores = ft_scores(x, head, backend, state)
        for t in schema:
            assert scores.per_type[t] == pytest.approx(0.25, abs=1e-9)

    def test_one_hot_bias_peaks(self):
        schema = parse_label_schema(["a", "b", "c"])
        backend = ToyMlmBackend(dim=4)
        x = TypingExample(
            id="x", tokens=("tok",), mention_span=(0, 1), gold_type=schema.get("a")
        )
        bias = np.array([0.0, 50.0, 0.0])
        head = FineTuneHead(types=tuple(schema), weight=np.zeros((3, 32)), bias=bias)
        state = backend.build_state(["tok"], seed=0)
        scores = ft_scores(x, head, backend, state)
        assert scores.argmax().canonical_id == "b"
        assert scores.per_type[schema.get("b")] > 0.999

    def test_sums_to_one(self):
        schema = parse_label_schema(["a", "b", "c"])
        backend = ToyMlmBackend(dim=4)
        x = TypingExample(
            id="x", tokens=("tok",), mention_span=(0, 1), gold_type=schema.get("a")
        )
        head = FineTuneHead.initialize(schema, 32, seed=1)
        state = backend.build_state(["tok"], seed=0)
        scores = ft_scores(x, head, backend, state)
        assert sum(scores.per_type.values()) == pytest.approx(1.0, abs=1e-6)

    def test_shape_mismatch(self):
        schema = parse_label_schema(["a", "b"])
        backend = ToyMlmBackend(dim=4)
        x = TypingExample(
            id="x", tokens=("tok",), mention_span=(0, 1), gold_type=schema.get("a")
        )
        head = FineTuneHead(types=tuple(schema), weight=np.zeros((2, 8)), bias=np.zeros(2))
        state = backend.build_state(["tok"], seed=0)
        with pytest.raises(ConfigurationError):
            ft_scores(x, head, backend, state)

    def test_head_shape_validation(self):
        schema = parse_label_schema(["a", "b"])
        with pytest.raises(ConfigurationError):
            FineTuneHead(types=tuple(schema), weight=np.zeros((3, 8)), bias=np.zeros(3))
