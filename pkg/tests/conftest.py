"""Shared fixtures: the symmetric two-state chain and seeded random models"""

from pathlib import Path
import logging

import numpy as np
import pytest

from riskctmc.markov_core import CostSpec, GeneratorSchedule, MarkovModel, StateSpace, random_model

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# v_0(state 1) for the symmetric chain with f = (0, 1)
EXPECTATION_VALUE = (1.0 - np.exp(-2.0)) / 2.0
AVAR_HALF_VALUE = 1.0 - np.exp(-2.0)


def symmetric_chain(rate: float = 1.0, terminal=(0.0, 1.0), running=(0.0, 0.0), horizon: float = 1.0) -> MarkovModel:
    return MarkovModel(
        states=StateSpace(("1", "2")),
        schedule=GeneratorSchedule.constant([[-rate, rate], [rate, -rate]], horizon),
        cost=CostSpec.constant(list(running), list(terminal)),
    )


@pytest.fixture
def two_state():
    return symmetric_chain()


@pytest.fixture
def three_state():
    return random_model(3, seed=11)


@pytest.fixture
def two_piece():
    return random_model(3, seed=5, pieces=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def configs_dir():
    return CONFIGS


def random_generator(rng: np.random.Generator, n: int, scale: float = 2.0) -> np.ndarray:
    G = rng.uniform(0.0, scale, size=(n, n))
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    return G


@pytest.fixture(autouse=True)
def restore_logging():
    """setup_logging replaces the root handlers; put pytest's back afterwards"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)
