import numpy as np
import pytest

from bucmatrixrl.linear_mdp import Features, LinearMdp, default_mdp, peaked_core
from bucmatrixrl.task_family import dirichlet_family


@pytest.fixture
def mdp():
    return default_mdp()


@pytest.fixture
def family(mdp):
    return dirichlet_family(mdp, peaked_core(3, 4, 0.85), 200.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def chain_mdp(horizon=2):
    """Two states; action 0 stays, action 1 switches. Reward 1 only at (s1, a0)."""
    eye = np.eye(2)
    phi = np.stack([eye[0], eye[1], eye[1], eye[0]])  # (s0,a0),(s0,a1),(s1,a0),(s1,a1)
    features = Features(phi=phi, psi=eye, num_actions=2)
    reward = np.array([0.0, 0.0, 1.0, 0.0])
    return LinearMdp(features, eye, reward, horizon, 0)
