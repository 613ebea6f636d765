import pytest

from adept.chain import build_chain, default_registry
from adept.sim import uniform_model


@pytest.fixture
def chain9():
    return build_chain(9)


@pytest.fixture
def setup9(chain9):
    return chain9, default_registry(chain9), uniform_model(chain9)
