import itertools
import pathlib

import pytest

from lcft_lab.correlators import InsertionConfig
from lcft_lab.rewrite import DerivativeRequest, expand_derivative

GOLDEN = pathlib.Path(__file__).parent / "golden"

DEFAULT_CONFIG = InsertionConfig(
    points=(0.0, 1.0, -1.0), momenta=(2.0, 2.0, 2.0), gamma=1.0
)


@pytest.fixture(scope="session")
def default_config():
    return DEFAULT_CONFIG


@pytest.fixture(scope="session")
def fuzz_corpus():
    """>= 10^3 engine-produced terms covering all n <= 3 index sequences."""
    terms = []
    for n in (1, 2, 3):
        for seq in itertools.product((1, 2, 3), repeat=n):
            terms.extend(expand_derivative(DerivativeRequest(n, seq, DEFAULT_CONFIG)))
    assert len(terms) >= 1000
    return terms[:2000]
