import pytest

from scry import corpus
from scry.assembler import assemble


@pytest.fixture(scope="session")
def programs():
    return {name: assemble(corpus.source(name)) for name in corpus.names()}
