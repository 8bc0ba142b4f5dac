"""Finite MDPs whose transition kernel factors through a transition core.

A state-action pair ``(s, a)`` maps to feature row ``s * num_actions + a`` of
``phi``; next states map to rows of ``psi``. Given a core ``M`` of shape
``(d, d')`` the kernel is ``P = phi @ M @ psi.T``.

Cores are plain ``numpy`` arrays of shape ``(d, d')``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidModel, SingularKPsi

NEG_REJECT_TOL = 1e-9
ROW_SUM_TOL = 1e-6
KPSI_SV_TOL = 1e-10
EXACT_CPSI_MAX_STATES = 12


@dataclass(frozen=True, eq=False)
class Features:
    """Feature maps as matrices: ``phi`` is ``(S*A, d)``, ``psi`` is ``(S, d')``."""

    phi: np.ndarray
    psi: np.ndarray
    num_actions: int

    def __post_init__(self):
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if phi.ndim != 2 or psi.ndim != 2:
            raise DimensionMismatch("phi and psi must be 2-d arrays")
        if phi.shape[0] != psi.shape[0] * self.num_actions:
            raise DimensionMismatch(
                f"phi has {phi.shape[0]} rows, expected "
                f"{psi.shape[0]} states x {self.num_actions} actions"
            )
        phi.flags.writeable = False
        psi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def num_states(self) -> int:
        return self.psi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def d_prime(self) -> int:
        return self.psi.shape[1]

    def phi_of(self, s: int, a: int) -> np.ndarray:
        return self.phi[s * self.num_actions + a]

    @cached_property
    def kpsi(self) -> np.ndarray:
        return self.psi.T @ self.psi

    @cached_property
    def kpsi_condition(self) -> float:
        sv = np.linalg.svd(self.kpsi, compute_uv=False)
        if sv[-1] < KPSI_SV_TOL:
            return float("inf")
        return float(sv[0] / sv[-1])

    @cached_property
    def kpsi_inv(self) -> np.ndarray:
        sv = np.linalg.svd(self.kpsi, compute_uv=False)
        if sv[-1] < KPSI_SV_TOL:
            raise SingularKPsi(f"smallest singular value of K_psi is {sv[-1]:.3e}")
        # K_psi is SPD once nonsingular
        chol = np.linalg.cholesky(self.kpsi)
        eye = np.eye(self.d_prime)
        inv = np.linalg.solve(chol.T, np.linalg.solve(chol, eye))
        return (inv + inv.T) / 2.0

    def regression_target(self, psi_next: np.ndarray) -> np.ndarray:
        """``K_psi^{-1} psi(s')``, the per-transition regression target."""
        return self.kpsi_inv @ psi_next


@dataclass(frozen=True)
class RegularityConstants:
    c_phi: float
    c_psi: float
    c_psi_prime: float
    c_m: float


@dataclass(frozen=True, eq=False)
class LinearMdp:
    features: Features
    core: np.ndarray
    reward: np.ndarray
    horizon: int
    start_state: int = 0

    def __post_init__(self):
        core = np.array(self.core, dtype=np.float64)
        reward = np.ascontiguousarray(self.reward, dtype=np.float64).reshape(-1)
        f = self.features
        if core.shape != (f.d, f.d_prime):
            raise DimensionMismatch(f"core shape {core.shape} != {(f.d, f.d_prime)}")
        if reward.shape[0] != f.phi.shape[0]:
            raise DimensionMismatch("reward table must have one entry per (s, a)")
        if np.any(reward < 0.0) or np.any(reward > 1.0):
            raise InvalidModel("rewards must lie in [0, 1]")
        if self.horizon < 1:
            raise InvalidModel("horizon must be >= 1")
        if not 0 <= self.start_state < f.num_states:
            raise InvalidModel("start_state out of range")
        core.flags.writeable = False
        reward.flags.writeable = False
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "reward", reward)

    @property
    def num_states(self) -> int:
        return self.features.num_states

    @property
    def num_actions(self) -> int:
        return self.features.num_actions

    @cached_property
    def transition_matrix(self) -> np.ndarray:
        """Validated ``(S*A, S)`` kernel with floating-point dust removed."""
        return induced_kernel(self.features, self.core)

    def with_core(self, core: np.ndarray) -> "LinearMdp":
        return LinearMdp(self.features, core, self.reward, self.horizon, self.start_state)


def induced_kernel(features: Features, core: np.ndarray) -> np.ndarray:
    """``phi @ M @ psi.T`` validated and renormalized row by row."""
    raw = features.phi @ np.asarray(core, dtype=np.float64) @ features.psi.T
    if raw.min() < -NEG_REJECT_TOL:
        raise InvalidModel(f"negative transition probability {raw.min():.3e}")
    sums = raw.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise InvalidModel(f"row {row} sums to {sums[row]!r}")
    p = np.maximum(raw, 0.0)
    p /= p.sum(axis=1, keepdims=True)
    return np.ascontiguousarray(p)


def transition_distribution(mdp: LinearMdp, s: int, a: int) -> np.ndarray:
    return mdp.transition_matrix[s * mdp.num_actions + a].copy()


def sample_next_state(mdp: LinearMdp, s: int, a: int, rng: np.random.Generator) -> int:
    """Inverse-CDF draw, the same rule the rollout kernel uses."""
    row = mdp.transition_matrix[s * mdp.num_actions + a]
    u = rng.random()
    nxt = int(np.searchsorted(np.cumsum(row), u, side="right"))
    if nxt >= row.shape[0]:
        nxt = int(np.flatnonzero(row > 0.0)[-1])
    return nxt


def optimal_q_values(mdp: LinearMdp) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``Q*`` of shape ``(H, S, A)`` and ``V*`` of shape ``(H+1, S)``.

    Stage index ``h`` is zero-based; ``V*[H]`` is the terminal zero.
    """
    zero = np.zeros_like(mdp.reward)
    q, v, _ = kernels.backward_induction(
        mdp.transition_matrix, mdp.reward, zero, mdp.horizon, mdp.num_actions, False
    )
    return q, v


def optimal_values(mdp: LinearMdp) -> np.ndarray:
    return optimal_q_values(mdp)[1]


def policy_values(mdp: LinearMdp, actions: np.ndarray) -> np.ndarray:
    """Values ``(H+1, S)`` of the nonstationary deterministic policy ``actions[h, s]``."""
    p = mdp.transition_matrix
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    v = np.zeros((H + 1, S))
    rows = np.arange(S) * A
    for h in range(H - 1, -1, -1):
        sa = rows + actions[h]
        v[h] = mdp.reward[sa] + p[sa] @ v[h + 1]
    return v


def _max_sign_norm(psi: np.ndarray) -> float:
    # ||psi.T v||_2 over the l_inf ball is maximized at a vertex
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=psi.shape[0])))
    return float(np.linalg.norm(signs @ psi, axis=1).max())


def compute_regularity_constants(features: Features, core: np.ndarray) -> RegularityConstants:
    kinv = features.kpsi_inv
    psi_k = features.psi @ kinv
    if features.num_states <= EXACT_CPSI_MAX_STATES:
        c_psi = _max_sign_norm(features.psi)
    else:
        c_psi = float(np.linalg.norm(features.psi, axis=1).sum())
    core = np.asarray(core, dtype=np.float64)
    return RegularityConstants(
        c_phi=float((features.phi**2).sum(axis=1).max()),
        c_psi=c_psi,
        c_psi_prime=float(np.linalg.norm(psi_k, axis=1).max()),
        c_m=float((core**2).sum() / features.d),
    )


def check_assumptions(features: Features, core: np.ndarray, c: RegularityConstants, tol=1e-9) -> bool:
    """True when every feature-regularity inequality holds for ``c``."""
    psi_k = features.psi @ features.kpsi_inv
    ok = (features.phi**2).sum(axis=1).max() <= c.c_phi + tol
    ok &= np.linalg.norm(psi_k, axis=1).max() <= c.c_psi_prime + tol
    if features.num_states <= EXACT_CPSI_MAX_STATES:
        ok &= _max_sign_norm(features.psi) <= c.c_psi + tol
    ok &= (np.asarray(core) ** 2).sum() <= c.c_m * features.d + tol
    return bool(ok)


# -- generators ---------------------------------------------------------------

def simplex_features(num_states, num_actions, d, rng, sharpness=0.7) -> Features:
    """One-hot ``psi`` and ``phi`` rows on the probability simplex.

    Each ``(s, a)`` leans on anchor ``(s * A + a) % d`` with weight
    ``sharpness``; the remainder is a random Dirichlet mixture. The first ``d``
    rows are exact anchors so that ``phi`` has full column rank.
    """
    sa = num_states * num_actions
    mix = rng.dirichlet(np.ones(d), size=sa)
    anchors = np.eye(d)[np.arange(sa) % d]
    phi = sharpness * anchors + (1.0 - sharpness) * mix
    phi[: min(d, sa)] = anchors[: min(d, sa)]
    return Features(phi=phi, psi=np.eye(num_states), num_actions=num_actions)


def random_stochastic_core(d, num_states, rng, concentration=1.0) -> np.ndarray:
    return rng.dirichlet(np.full(num_states, concentration), size=d)


def peaked_core(d, num_states, peak=0.85) -> np.ndarray:
    """Rows put ``peak`` mass on state ``(i + 1) % S``, the rest spread evenly."""
    m = np.full((d, num_states), (1.0 - peak) / (num_states - 1))
    m[np.arange(d), (np.arange(d) + 1) % num_states] = peak
    return m


def random_rewards(num_states, num_actions, rng) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=num_states * num_actions)


def default_mdp(num_states=4, num_actions=2, d=3, horizon=5, seed=0, core=None) -> LinearMdp:
    """The small reference instance used across tests and presets."""
    rng = np.random.default_rng(seed)
    features = simplex_features(num_states, num_actions, d, rng)
    if core is None:
        core = random_stochastic_core(d, num_states, rng)
    reward = random_rewards(num_states, num_actions, rng)
    return LinearMdp(features, core, reward, horizon, 0)


# -- serialization ---------------------------------------------------------------

def mdp_to_dict(mdp: LinearMdp) -> dict:
    f = mdp.features
    consts = compute_regularity_constants(f, mdp.core)
    return {
        "num_states": f.num_states,
        "num_actions": f.num_actions,
        "d": f.d,
        "d_prime": f.d_prime,
        "phi": f.phi.reshape(-1).tolist(),
        "psi": f.psi.reshape(-1).tolist(),
        "core": mdp.core.reshape(-1).tolist(),
        "reward": mdp.reward.tolist(),
        "horizon": mdp.horizon,
        "start_state": mdp.start_state,
        "regularity": {
            "c_phi": consts.c_phi,
            "c_psi": consts.c_psi,
            "c_psi_prime": consts.c_psi_prime,
            "c_m": consts.c_m,
        },
    }


def mdp_from_dict(doc: dict) -> LinearMdp:
    S, A, d, dp = doc["num_states"], doc["num_actions"], doc["d"], doc["d_prime"]
    features = Features(
        phi=np.array(doc["phi"], dtype=np.float64).reshape(S * A, d),
        psi=np.array(doc["psi"], dtype=np.float64).reshape(S, dp),
        num_actions=A,
    )
    return LinearMdp(
        features,
        np.array(doc["core"], dtype=np.float64).reshape(d, dp),
        np.array(doc["reward"], dtype=np.float64),
        int(doc["horizon"]),
        int(doc["start_state"]),
    )


def mdp_to_json(mdp: LinearMdp) -> str:
    # json writes floats with repr, which round-trips float64 exactly
    return json.dumps(mdp_to_dict(mdp), indent=1)


def mdp_from_json(text: str) -> LinearMdp:
    return mdp_from_dict(json.loads(text))
