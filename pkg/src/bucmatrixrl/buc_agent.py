"""Within-task biased UC-MatrixRL: optimistic planning and episode rollouts."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core_regression import RidgeState, ellipsoid_radius
from .linear_mdp import (
    LinearMdp,
    RegularityConstants,
    compute_regularity_constants,
    optimal_values,
    policy_values,
)

CSV_COLUMNS = (
    "episode",
    "return",
    "v_star",
    "regret_increment",
    "cum_regret",
    "beta",
    "in_ellipsoid",
    "core_error",
    "lambda_min",
)


@dataclass
class OptimisticPlan:
    q: np.ndarray  # (H, S, A), stage h zero-based
    v: np.ndarray  # (H + 1, S), v[H] == 0
    bonus_scale: float
    clipped: np.ndarray  # (H, S, A) bool


def exploration_bonus(beta, ridge: RidgeState, phi_rows, c_psi) -> np.ndarray:
    """Per-(s, a) coefficient multiplying ``||V_{h+1}||_inf`` in the backup."""
    return beta * c_psi * ridge.feature_norms(phi_rows)


def build_optimistic_q(m_hat, beta, ridge: RidgeState, mdp: LinearMdp, c_psi, clip=True) -> OptimisticPlan:
    """Backward induction on the estimated kernel with an additive bonus.

    ``Q_h(s,a) = clip(r + phi^T M_hat Psi^T V_{h+1}
    + beta * ||phi||_{(V^lambda)^{-1}} * C_psi * ||V_{h+1}||_inf, 0, H - h)``.

    The bonus upper-bounds ``max_{M in ball} phi^T (M - M_hat) Psi^T V_{h+1}``.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    f = mdp.features
    p_hat = np.ascontiguousarray(f.phi @ np.asarray(m_hat, dtype=np.float64) @ f.psi.T)
    bonus = exploration_bonus(beta, ridge, f.phi, c_psi)
    q, v, clipped = kernels.backward_induction(
        p_hat, mdp.reward, bonus, mdp.horizon, mdp.num_actions, clip
    )
    return OptimisticPlan(q, v, float(beta), clipped)


def greedy_action(plan: OptimisticPlan, s: int, h: int) -> int:
    """Argmax over actions; the lowest index wins ties."""
    return int(np.argmax(plan.q[h, s]))


@dataclass
class RunRecord:
    returns: np.ndarray
    v_star: float
    regret: np.ndarray
    beta: np.ndarray
    in_ellipsoid: np.ndarray
    in_weighted_ellipsoid: np.ndarray
    core_error: np.ndarray
    lambda_min: np.ndarray
    plan_value: np.ndarray  # V_{n,1}(s_0) of the optimistic plan
    policy_value: np.ndarray  # true value of the greedy policy played in episode n
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    phis: np.ndarray  # (N, H, d)
    lam: float
    delta: float
    bias_final: np.ndarray
    m_hat_final: np.ndarray
    gram_final: np.ndarray
    radius_mode: str = "oracle"
    meta: dict = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return self.returns.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def cum_regret(self) -> float:
        return float(self.regret.sum())

    @property
    def pseudo_regret(self) -> np.ndarray:
        """Expected per-episode regret ``V*(s_0) - V^{pi_n}(s_0)``; never negative."""
        return self.v_star - self.policy_value

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret)

    def rows(self):
        cum = self.cumulative()
        for n in range(self.episodes):
            yield (
                n,
                float(self.returns[n]),
                float(self.v_star),
                float(self.regret[n]),
                float(cum[n]),
                float(self.beta[n]),
                int(self.in_ellipsoid[n]),
                float(self.core_error[n]),
                float(self.lambda_min[n]),
            )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            write_episode_csv(fh, self)


def write_episode_csv(fh, record: RunRecord):
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for row in record.rows():
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def run_task(
    mdp: LinearMdp,
    bias,
    lam: float,
    episodes: int,
    delta: float | None = None,
    rng: np.random.Generator | None = None,
    *,
    constants: RegularityConstants | None = None,
    radius_mode: str = "oracle",
    estimator=None,
) -> RunRecord:
    """Run biased UC-MatrixRL for ``episodes`` episodes on ``mdp``.

    ``radius_mode="oracle"`` evaluates the confidence radius with the true
    ``||W - M*||_F``; ``"assumption"`` uses the bound from the regularity
    constants. ``estimator`` (see ``meta_learner``) may observe transitions
    and replace the bias between episodes.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if radius_mode not in ("oracle", "assumption"):
        raise ValueError(f"unknown radius mode {radius_mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    f = mdp.features
    H, d = mdp.horizon, f.d
    A = mdp.num_actions
    delta = 1.0 / (episodes * H) if delta is None else float(delta)
    if constants is None:
        constants = compute_regularity_constants(f, mdp.core)
    m_star = mdp.core
    p_true = mdp.transition_matrix
    v_star = float(optimal_values(mdp)[0, mdp.start_state])

    ridge = RidgeState.for_features(f, lam, bias)
    if estimator is not None:
        ridge.set_bias(estimator.begin_task(ridge))

    N = episodes
    returns = np.empty(N)
    betas = np.empty(N)
    in_ell = np.empty(N, dtype=bool)
    in_wt = np.empty(N, dtype=bool)
    errs = np.empty(N)
    lmins = np.empty(N)
    plan_vals = np.empty(N)
    pol_vals = np.empty(N)
    states = np.empty((N, H + 1), dtype=np.int64)
    actions = np.empty((N, H), dtype=np.int64)
    rewards = np.empty((N, H))
    phis = np.empty((N, H, d))

    for n in range(N):
        m_hat = ridge.solve()
        w_dist = float(np.linalg.norm(ridge.bias - m_star)) if radius_mode == "oracle" else None
        beta = ellipsoid_radius(ridge, delta, constants, w_dist)
        diff = m_hat - m_star
        errs[n] = np.linalg.norm(diff)
        in_ell[n] = errs[n] <= beta
        in_wt[n] = np.sqrt(max(np.sum(diff * (ridge.v_lambda @ diff)), 0.0)) <= beta
        lmins[n] = ridge.lambda_min()
        betas[n] = beta

        plan = build_optimistic_q(m_hat, beta, ridge, mdp, constants.c_psi)
        plan_vals[n] = plan.v[0, mdp.start_state]
        greedy = np.argmax(plan.q, axis=2)
        pol_vals[n] = policy_values(mdp, greedy)[0, mdp.start_state]
        st, ac, rw = kernels.rollout(p_true, mdp.reward, plan.q, mdp.start_state, rng.random(H))
        states[n], actions[n], rewards[n] = st, ac, rw
        returns[n] = rw.sum()

        for h in range(H):
            phi = f.phi[st[h] * A + ac[h]]
            psi = f.psi[st[h + 1]]
            phis[n, h] = phi
            ridge.update(phi, psi)
            if estimator is not None:
                estimator.observe(phi, psi)
        if estimator is not None:
            ridge.set_bias(estimator.episode_bias(ridge))

    return RunRecord(
        returns=returns,
        v_star=v_star,
        regret=v_star - returns,
        beta=betas,
        in_ellipsoid=in_ell,
        in_weighted_ellipsoid=in_wt,
        core_error=errs,
        lambda_min=lmins,
        plan_value=plan_vals,
        policy_value=pol_vals,
        states=states,
        actions=actions,
        rewards=rewards,
        phis=phis,
        lam=float(lam),
        delta=delta,
        bias_final=ridge.bias.copy(),
        m_hat_final=ridge.solve(),
        gram_final=ridge.gram,
        radius_mode=radius_mode,
    )
