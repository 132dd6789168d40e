import pytest

from helpers import build_toy_world, make_schema

from prompt_typing.schema_verbalizer import build_verbalizer


@pytest.fixture(scope="session")
def schema6():
    return make_schema()


@pytest.fixture(scope="session")
def verbalizer6(schema6):
    return build_verbalizer(schema6)


@pytest.fixture(scope="session")
def weak_world():
    """Rules know one of three keywords per type: mediocre zero-shot start."""
    return build_toy_world(seed=7, known_keywords=1, rule_mass=0.55)


@pytest.fixture(scope="session")
def strong_world():
    """Rules know every keyword: high zero-shot accuracy out of the box."""
    return build_toy_world(seed=11, known_keywords=3, rule_mass=0.7)
