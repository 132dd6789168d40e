import numpy as np
import pytest

from prompt_typing.datasets import TypingExample
from prompt_typing.errors import ConfigurationError, EncodeError
from prompt_typing.mlm_backend import (
    BackendVocabulary,
    MaskDistribution,
    ToyMlmBackend,
    ToyRuleTable,
)
from prompt_typing.schema_verbalizer import EntityType
from prompt_typing.templates import (
    HIDE_TOKEN,
    MASK_TOKEN,
    TemplateSpec,
    apply_hiding,
    render_hard,
)

TYPE = EntityType.parse("location/city")

NY = TypingExample(
    id="ny", tokens=("He", "is", "from", "New", "York"), mention_span=(3, 5), gold_type=TYPE
)

T3 = TemplateSpec.hard("t3")


@pytest.fixture()
def backend_and_state():
    rules = ToyRuleTable(
        mention_rules={"new york": ("city", 0.9)},
        keyword_rules={"cliff": ("mountain", 0.6)},
    )
    backend = ToyMlmBackend(rules=rules, dim=8)
    words = list(NY.tokens) + ["cliff", "walk", "person"] + list(T3.static_tokens())
    state = backend.build_state(words, seed=1)
    return backend, state


class TestVocabulary:
    def test_duplicate_rejected(self):
        with pytest.raises(ConfigurationError):
            BackendVocabulary(words=("a", "a", MASK_TOKEN), special=(MASK_TOKEN,))

    def test_mask_required(self):
        with pytest.raises(ConfigurationError):
            BackendVocabulary(words=("a",), special=())

    def test_oov_raises_encode_error(self):
        vocab = BackendVocabulary(words=("a", MASK_TOKEN), special=(MASK_TOKEN,))
        with pytest.raises(EncodeError, match="zzz"):
            vocab.id("zzz")

    def test_build_state_includes_rule_targets(self, backend_and_state):
        _, state = backend_and_state
        assert "city" in state.vocab.index
        assert "mountain" in state.vocab.index
        assert MASK_TOKEN in state.vocab.index


class TestRegisterSpecialTokens:
    def test_fresh_ids(self, backend_and_state):
        backend, state = backend_and_state
        ids, state2 = backend.register_special_tokens(state, ["[P]", "[P1]"], seed=0)
        assert len(ids) == 2 and len(set(ids)) == 2
        assert state2.vocab.size == state.vocab.size + 2
        assert state2.params["emb"].shape[0] == state2.vocab.size

    def test_idempotent(self, backend_and_state):
        backend, state = backend_and_state
        ids1, state2 = backend.register_special_tokens(state, ["[P]"], seed=0)
        ids2, state3 = backend.register_special_tokens(state2, ["[P]"], seed=5)
        assert ids1 == ids2
        assert state3 is state2

    def test_ordinary_word_rejected(self, backend_and_state):
        backend, state = backend_and_state
        with pytest.raises(ConfigurationError):
            backend.register_special_tokens(state, ["walk"], seed=0)

    def test_hide_token_usable_after_registration(self, backend_and_state):
        backend, state = backend_and_state
        _, state = backend.register_special_tokens(state, [HIDE_TOKEN], seed=0)
        hidden = apply_hiding(render_hard(T3, NY), 1.0, np.random.default_rng(0))
        d = backend.mask_distribution(hidden, state)
        assert abs(float(d.probabilities.sum()) - 1.0) <= 1e-6

    def test_duplicate_names_in_call_rejected(self, backend_and_state):
        backend, state = backend_and_state
        with pytest.raises(ConfigurationError):
            backend.register_special_tokens(state, ["[P]", "[P]"], seed=0)


class TestMaskDistribution:
    def test_normalized(self, backend_and_state):
        backend, state = backend_and_state
        d = backend.mask_distribution(render_hard(T3, NY), state)
        assert abs(float(d.probabilities.sum()) - 1.0) <= 1e-6
        assert np.all(d.probabilities >= 0)

    def test_length_includes_registered_specials(self, backend_and_state):
        backend, state = backend_and_state
        _, state = backend.register_special_tokens(state, ["[P]", "[P1]"], seed=0)
        d = backend.mask_distribution(render_hard(T3, NY), state)
        assert d.probabilities.shape == (state.vocab.size,)

    def test_mention_rule_peaks_distribution(self, backend_and_state):
        backend, state = backend_and_state
        d = backend.mask_distribution(render_hard(T3, NY), state)
        assert d.top_words(1)[0][0] == "city"
        assert d.probability_of("city") > 0.8

    def test_hidden_input_skips_mention_rule(self, backend_and_state):
        backend, state = backend_and_state
        _, state = backend.register_special_tokens(state, [HIDE_TOKEN], seed=0)
        hidden = apply_hiding(render_hard(T3, NY), 1.0, np.random.default_rng(0))
        d = backend.mask_distribution(hidden, state)
        assert d.probability_of("city") < 0.5

    def test_keyword_rule(self, backend_and_state):
        backend, state = backend_and_state
        x = TypingExample(
            id="k", tokens=("He", "walk", "cliff"), mention_span=(2, 3), gold_type=TYPE
        )
        d = backend.mask_distribution(render_hard(T3, x), state)
        assert d.top_words(1)[0][0] == "mountain"

    def test_deterministic(self, backend_and_state):
        backend, state = backend_and_state
        p = render_hard(T3, NY)
        a = backend.mask_distribution(p, state).probabilities
        b = backend.mask_distribution(p, state).probabilities
        assert np.array_equal(a, b)

    def test_oov_token_errors(self, backend_and_state):
        backend, state = backend_and_state
        x = TypingExample(
            id="o", tokens=("He", "is", "zzz"), mention_span=(2, 3), gold_type=TYPE
        )
        with pytest.raises(EncodeError, match="zzz"):
            backend.mask_distribution(render_hard(T3, x), state)

    def test_validation_of_manual_distribution(self):
        vocab = BackendVocabulary(words=("a", "b", MASK_TOKEN), special=(MASK_TOKEN,))
        MaskDistribution(probabilities=np.array([0.5, 0.5, 0.0]), vocab=vocab)
        with pytest.raises(ConfigurationError):
            MaskDistribution(probabilities=np.array([0.7, 0.6, 0.0]), vocab=vocab)
        with pytest.raises(ConfigurationError):
            MaskDistribution(probabilities=np.array([0.5, 0.5]), vocab=vocab)


class TestClsEmbedding:
    def test_width_and_determinism(self, backend_and_state):
        backend, state = backend_and_state
        h1 = backend.cls_embedding(NY, state)
        h2 = backend.cls_embedding(NY, state)
        assert h1.shape == (32,)
        assert np.array_equal(h1, h2)

    def test_distinct_sentences_distinct_vectors(self, backend_and_state):
        backend, state = backend_and_state
        other = TypingExample(
            id="o", tokens=("He", "is", "from", "York", "New"), mention_span=(3, 5),
            gold_type=TYPE,
        )
        assert not np.array_equal(
            backend.cls_embedding(NY, state), backend.cls_embedding(other, state)
        )

    def test_span_marking_changes_vector(self, backend_and_state):
        backend, state = backend_and_state
        moved = TypingExample(
            id="m", tokens=NY.tokens, mention_span=(4, 5), gold_type=TYPE
        )
        assert not np.array_equal(
            backend.cls_embedding(NY, state), backend.cls_embedding(moved, state)
        )


class TestPersistence:
    def test_save_load_reproduces_outputs(self, backend_and_state, tmp_path):
        backend, state = backend_and_state
        _, state = backend.register_special_tokens(state, [HIDE_TOKEN, "[P]"], seed=3)
        p = render_hard(T3, NY)
        before = backend.mask_distribution(p, state).probabilities
        backend.save_state(state, tmp_path / "ckpt")
        backend2, state2 = ToyMlmBackend.load_state(tmp_path / "ckpt")
        after = backend2.mask_distribution(p, state2).probabilities
        assert np.array_equal(before, after)

    def test_saved_bytes_stable(self, backend_and_state, tmp_path):
        backend, state = backend_and_state
        backend.save_state(state, tmp_path / "a")
        backend.save_state(state, tmp_path / "b")
        assert (tmp_path / "a" / "weights.bin").read_bytes() == (
            tmp_path / "b" / "weights.bin"
        ).read_bytes()
        assert (tmp_path / "a" / "metadata.json").read_bytes() == (
            tmp_path / "b" / "metadata.json"
        ).read_bytes()

    def test_vocab_hash_checked(self, backend_and_state, tmp_path):
        backend, state = backend_and_state
        backend.save_state(state, tmp_path / "ckpt")
        meta = (tmp_path / "ckpt" / "metadata.json").read_text()
        (tmp_path / "ckpt" / "metadata.json").write_text(
            meta.replace('"vocab_hash": "', '"vocab_hash": "00')
        )
        with pytest.raises(ConfigurationError):
            ToyMlmBackend.load_state(tmp_path / "ckpt")


class TestRuleTable:
    def test_mass_bounds(self):
        with pytest.raises(ConfigurationError):
            ToyRuleTable(mention_rules={"x": ("y", 1.5)})

    def test_json_roundtrip(self, tmp_path):
        rules = ToyRuleTable(
            mention_rules={"new york": ("city", 0.9)},
            keyword_rules={"cliff": ("mountain", 0.6)},
        )
        path = tmp_path / "rules.json"
        import json

        path.write_text(json.dumps(rules.to_json_obj()))
        loaded = ToyRuleTable.from_file(path)
        assert loaded == rules
