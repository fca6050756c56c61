from typing import Callable

import numpy as np
import pytest

from pyscora_quorum.crypto import KeyRegistry
from pyscora_quorum.params import QuorumParams
from support import LocalNetwork


@pytest.fixture
def canonical_params() -> QuorumParams:
    return QuorumParams(n=1000, f=100, m=40, k1=1, k2=24)


@pytest.fixture
def small_params() -> QuorumParams:
    return QuorumParams(n=25, f=3, m=5, k1=1, k2=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def registry() -> KeyRegistry:
    return KeyRegistry(np.random.default_rng(11))


@pytest.fixture
def local_network(small_params: QuorumParams) -> LocalNetwork:
    return LocalNetwork(small_params, seed=3)


@pytest.fixture
def make_network() -> Callable[..., LocalNetwork]:
    return LocalNetwork
