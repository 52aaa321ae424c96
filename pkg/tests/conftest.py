import pytest

from bbcsim.core import thresholds
from bbcsim.primitives import Keyring


@pytest.fixture
def p4():
    return thresholds(4)


@pytest.fixture
def ring4(p4):
    return Keyring(p4, seed=1)
