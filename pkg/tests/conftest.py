from importlib import resources

import pytest

from indukt.corpus import load_corpus


@pytest.fixture(scope="session")
def mini_corpus():
    path = resources.files("indukt.data").joinpath("mini_corpus.json")
    return load_corpus(str(path))
