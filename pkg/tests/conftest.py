import os

import pytest

from svaforge import domain, specgram

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "src", "svaforge", "fixtures")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def read_fixture(name: str) -> str:
    with open(fixture_path(name), encoding="utf-8") as fh:
        return fh.read()


def read_golden(name: str) -> str:
    with open(os.path.join(GOLDEN, name), encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture
def handshake():
    return domain.load_design(read_fixture("handshake.dsn"))


@pytest.fixture
def handshake_slow_ack():
    return domain.load_design(read_fixture("handshake_slow_ack.dsn"))


@pytest.fixture
def encoder():
    return domain.load_design(read_fixture("encoder.dsn"))


@pytest.fixture
def handshake_spec():
    return specgram.parse_structured_spec(read_fixture("handshake.rb"))


@pytest.fixture
def encoder_spec():
    return specgram.parse_structured_spec(read_fixture("encoder.rb"))
