"""Distributions over transition cores sharing features, rewards and horizon."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidFamily
from .linear_mdp import Features, LinearMdp, induced_kernel

DIRICHLET_FLOOR = 1e-6

ANCHOR_DIRICHLET = "anchor_dirichlet"
FINITE_SET = "finite_set"


@dataclass(frozen=True, eq=False)
class TaskFamily:
    """A distribution over cores around ``mean_core``.

    ``kind == "anchor_dirichlet"``: each row of a sampled core is drawn
    ``Dirichlet(spread * mean_row)``. ``kind == "finite_set"``: a weighted
    draw from ``cores``; ``mean_core`` is then the exact weighted mean.
    """

    base: LinearMdp
    mean_core: np.ndarray
    kind: str = ANCHOR_DIRICHLET
    spread: float = 100.0
    cores: tuple = field(default=())
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == FINITE_SET:
            if not self.cores:
                raise InvalidFamily("finite family needs at least one core")
            w = np.full(len(self.cores), 1.0 / len(self.cores)) if self.weights is None else np.asarray(self.weights, float)
            if w.shape != (len(self.cores),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidFamily("weights must be a probability vector over the cores")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "cores", tuple(np.asarray(c, float) for c in self.cores))
        elif self.kind == ANCHOR_DIRICHLET:
            if not self.spread > 0:
                raise InvalidFamily("spread (Dirichlet concentration) must be positive")
        else:
            raise InvalidFamily(f"unknown family kind {self.kind!r}")
        for c in self.support():
            induced_kernel(self.features, c)

    @property
    def features(self) -> Features:
        return self.base.features

    def support(self):
        return self.cores if self.kind == FINITE_SET else (self.mean_core,)

    def task(self, core: np.ndarray) -> LinearMdp:
        return self.base.with_core(core)


def dirichlet_family(base: LinearMdp, mean_core: np.ndarray, spread: float) -> TaskFamily:
    mean_core = np.asarray(mean_core, dtype=np.float64)
    return TaskFamily(base.with_core(mean_core), mean_core, ANCHOR_DIRICHLET, spread)


def finite_family(base: LinearMdp, cores: Sequence[np.ndarray], weights=None) -> TaskFamily:
    cores = [np.asarray(c, dtype=np.float64) for c in cores]
    if not cores:
        raise InvalidFamily("finite family needs at least one core")
    w = np.full(len(cores), 1.0 / len(cores)) if weights is None else np.asarray(weights, float)
    mean = np.tensordot(w, np.stack(cores), axes=1)
    return TaskFamily(base.with_core(mean), mean, FINITE_SET, cores=tuple(cores), weights=w)


def point_mass_family(base: LinearMdp, core: np.ndarray) -> TaskFamily:
    return finite_family(base, [core])


def sample_core(family: TaskFamily, rng: np.random.Generator) -> np.ndarray:
    if family.kind == FINITE_SET:
        idx = rng.choice(len(family.cores), p=family.weights)
        return family.cores[idx].copy()
    alpha = family.spread * np.maximum(family.mean_core, DIRICHLET_FLOOR)
    if not np.all(alpha > 0):
        raise InvalidFamily("Dirichlet parameters must be positive")
    core = np.stack([rng.dirichlet(row) for row in alpha])
    induced_kernel(family.features, core)
    return core


def sample_task(family: TaskFamily, rng: np.random.Generator) -> LinearMdp:
    return family.task(sample_core(family, rng))


@dataclass(frozen=True)
class FamilyStats:
    var_w: float
    mad_w: float
    reference: np.ndarray
    n_samples: int | None  # None when computed exactly


def family_stats(family: TaskFamily, w: np.ndarray, n_samples: int = 1000, rng=None) -> FamilyStats:
    """``E||M - W||_F^2`` and ``E||M - W||_F``; exact for finite families."""
    w = np.asarray(w, dtype=np.float64)
    if family.kind == FINITE_SET:
        dist = np.array([np.linalg.norm(c - w) for c in family.cores])
        return FamilyStats(
            float(family.weights @ dist**2), float(family.weights @ dist), w, None
        )
    if n_samples < 1:
        raise InvalidFamily("n_samples must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    dist = np.array([np.linalg.norm(sample_core(family, rng) - w) for _ in range(n_samples)])
    return FamilyStats(float(np.mean(dist**2)), float(np.mean(dist)), w, n_samples)


def uniform_core(d: int, num_states: int) -> np.ndarray:
    return np.full((d, num_states), 1.0 / num_states)


def orthogonal_family(d: int, horizon: int = 4, num_actions: int = 2) -> TaskFamily:
    """``d`` deterministic cycle MDPs whose cores are the cyclic shifts of ``I``.

    States, feature anchors and next-state features are all indexed by
    ``0..d-1`` with ``psi = I``. Action ``a`` in state ``s`` has feature
    ``e_{(s + a) % d}``, so under core ``k`` it moves to ``(s + a + k) % d``.
    Column ``j`` of core ``k`` is ``e_{(j - k) % d}``: distinct cores have
    orthogonal columns. Reward 1 is collected only in state ``d - 1``.
    """
    if d < 2:
        raise InvalidFamily("orthogonal family needs d >= 2")
    eye = np.eye(d)
    phi = np.stack([eye[(s + a) % d] for s in range(d) for a in range(num_actions)])
    features = Features(phi=phi, psi=eye, num_actions=num_actions)
    reward = np.zeros(d * num_actions)
    reward[(d - 1) * num_actions:] = 1.0
    cores = [np.roll(eye, k, axis=1) for k in range(d)]
    base = LinearMdp(features, cores[0], reward, horizon, 0)
    return finite_family(base, cores)
