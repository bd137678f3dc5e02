import logging

import numpy as np
import pytest

from aafib.model import PomdpModel
from aafib.problems import generate_grid_nav, tiger


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance runs (deselect with -m 'not slow')")


def make_model(transition, observation, reward, discount, start=None) -> PomdpModel:
    transition = np.asarray(transition, dtype=float)
    observation = np.asarray(observation, dtype=float)
    return PomdpModel(
        num_states=transition.shape[1],
        num_actions=transition.shape[0],
        num_observations=observation.shape[2],
        transition=transition,
        observation=observation,
        reward=np.asarray(reward, dtype=float),
        discount=discount,
        start_belief=None if start is None else np.asarray(start, dtype=float),
    )


@pytest.fixture(autouse=True)
def reset_root_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()


@pytest.fixture(scope="session")
def tiger_model():
    return tiger()


@pytest.fixture
def one_state_model():
    """|S| = |A| = |O| = 1, r = 1, gamma = 0.9: F(alpha) = 1 + 0.9 alpha"""
    return make_model([[[1.0]]], [[[1.0]]], [[1.0]], 0.9, start=[1.0])


@pytest.fixture
def deterministic_model():
    """3 states, 2 actions, one-hot T and Omega"""
    T = np.zeros((2, 3, 3))
    T[0] = np.eye(3)[[1, 2, 0]]   # action 0 cycles forward
    T[1] = np.eye(3)[[0, 0, 1]]   # action 1 steps back, sticking at 0
    O = np.zeros((2, 3, 2))
    O[:, :, 0] = [[1, 0, 1], [1, 0, 1]]
    O[:, :, 1] = [[0, 1, 0], [0, 1, 0]]
    reward = [[0.0, 1.0], [0.5, -1.0], [2.0, 0.0]]
    return make_model(T, O, reward, 0.9, start=[1.0, 0.0, 0.0])


@pytest.fixture
def zero_reward_model():
    T = np.full((2, 2, 2), 0.5)
    O = np.full((2, 2, 2), 0.5)
    return make_model(T, O, np.zeros((2, 2)), 0.9, start=[0.5, 0.5])


@pytest.fixture(scope="session")
def small_grid():
    return generate_grid_nav(2, 2, 0.0, 0.0, seed=0)
