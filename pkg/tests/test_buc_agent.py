import csv
import io

import numpy as np
import pytest

from bucmatrixrl.buc_agent import (
    CSV_COLUMNS,
    OptimisticPlan,
    build_optimistic_q,
    greedy_action,
    run_task,
    write_episode_csv,
)
from bucmatrixrl.core_regression import RidgeState
from bucmatrixrl.linear_mdp import (
    Features,
    LinearMdp,
    compute_regularity_constants,
    optimal_q_values,
    optimal_values,
    random_stochastic_core,
    simplex_features,
)


def plan_from_q(rows):
    q = np.array(rows, dtype=float).reshape(1, 1, -1)
    return OptimisticPlan(q, np.zeros((2, 1)), 0.0, np.zeros_like(q, dtype=bool))


def test_greedy_examples():
    assert greedy_action(plan_from_q([0.2, 0.9]), 0, 0) == 1
    assert greedy_action(plan_from_q([0.5, 0.5]), 0, 0) == 0


def test_saturated_tie_goes_to_first_action(mdp):
    ridge = RidgeState.for_features(mdp.features, 1.0)
    plan = build_optimistic_q(mdp.core, 1e6, ridge, mdp, 2.0)
    H = mdp.horizon
    for h in range(H - 1):
        assert np.all(plan.q[h] == H - h)
        assert all(greedy_action(plan, s, h) == 0 for s in range(mdp.num_states))
    assert plan.clipped[: H - 1].all()
    # the final continuation is zero, so the last stage carries no bonus
    np.testing.assert_array_equal(plan.q[H - 1].ravel(), mdp.reward)


def test_exact_model_no_bonus_recovers_truth(mdp):
    ridge = RidgeState.for_features(mdp.features, 1.0)
    plan = build_optimistic_q(mdp.core, 0.0, ridge, mdp, 2.0)
    q_star, _ = optimal_q_values(mdp)
    np.testing.assert_allclose(plan.q, q_star, atol=1e-12)
    np.testing.assert_allclose(plan.v, optimal_values(mdp), atol=1e-12)


def test_zero_reward_zero_q(mdp):
    m = LinearMdp(mdp.features, mdp.core, np.zeros_like(mdp.reward), mdp.horizon)
    plan = build_optimistic_q(m.core, 0.0, RidgeState.for_features(m.features, 1.0), m, 2.0)
    assert np.all(plan.q == 0)


def test_negative_beta_rejected(mdp):
    with pytest.raises(ValueError):
        build_optimistic_q(mdp.core, -1.0, RidgeState.for_features(mdp.features, 1.0), mdp, 1.0)


def test_clipping_soundness(mdp, rng):
    ridge = RidgeState.for_features(mdp.features, 0.5)
    for _ in range(20):
        ridge.update(mdp.features.phi[rng.integers(8)], mdp.features.psi[rng.integers(4)])
    m_hat = ridge.solve() + rng.normal(scale=0.3, size=(3, 4))  # not a stochastic kernel
    clipped = build_optimistic_q(m_hat, 0.7, ridge, mdp, 2.0, clip=True)
    raw = build_optimistic_q(m_hat, 0.7, ridge, mdp, 2.0, clip=False)
    H = mdp.horizon
    for h in range(H):
        assert clipped.q[h].min() >= 0 and clipped.q[h].max() <= H - h
    np.testing.assert_array_equal(clipped.v[:H], clipped.q.max(axis=2))
    assert np.all(clipped.v[H] == 0)
    # at the last stage clip only truncates; earlier stages see different continuations
    last = raw.q[H - 1]
    np.testing.assert_allclose(clipped.q[H - 1], np.clip(last, 0, 1))


def test_bonus_dominates_ball_maximum():
    """Random search over the V^lambda-weighted ball never beats the bonus backup."""
    rng = np.random.default_rng(2024)
    phi = np.array([[1.0, 0.0], [0.4, 0.6], [0.0, 1.0], [0.7, 0.3]])
    f = Features(phi=phi, psi=np.eye(2), num_actions=2)
    core = np.array([[0.8, 0.2], [0.3, 0.7]])
    mdp = LinearMdp(f, core, np.array([0.1, 0.5, 0.9, 0.2]), 2)
    ridge = RidgeState.for_features(f, 1.0)
    for sa in [0, 1, 1, 2, 3, 0, 2]:
        ridge.update(phi[sa], np.eye(2)[rng.integers(2)])
    m_hat = ridge.solve()
    beta = 0.3
    c_psi = compute_regularity_constants(f, core).c_psi
    plan = build_optimistic_q(m_hat, beta, ridge, mdp, c_psi, clip=False)
    v_next = plan.v[1]

    # M = M_hat + (V^lambda)^{-1/2} U with ||U||_F <= beta covers the weighted ball
    evals, evecs = np.linalg.eigh(ridge.v_lambda)
    root_inv = evecs @ np.diag(evals**-0.5) @ evecs.T
    u = rng.normal(size=(10**6, 2, 2))
    u *= beta * rng.uniform(size=(10**6, 1, 1)) ** 0.25 / np.linalg.norm(u, axis=(1, 2), keepdims=True)
    ms = m_hat + np.einsum("ij,njk->nik", root_inv, u)
    best = np.einsum("si,nij,j->ns", phi, ms, f.psi.T @ v_next).max(axis=0)
    nominal = phi @ m_hat @ f.psi.T @ v_next
    bonus = plan.q[0].ravel() - mdp.reward - nominal
    closed = beta * ridge.feature_norms(phi) * np.linalg.norm(f.psi.T @ v_next)
    assert np.all(best <= nominal + closed + 1e-12)
    assert np.all(closed <= bonus + 1e-12)
    # the random search gets close to the exact ball maximum
    assert np.all(best >= nominal + 0.99 * closed)


def test_single_action_has_zero_expected_regret(rng):
    f = simplex_features(4, 1, 3, rng)
    mdp = LinearMdp(f, random_stochastic_core(3, 4, rng), rng.uniform(size=4), 4)
    rec = run_task(mdp, np.zeros((3, 4)), 1.0, 30, 0.1, rng)
    np.testing.assert_allclose(rec.pseudo_regret, 0, atol=1e-12)
    assert np.all(rec.actions == 0)


def test_deterministic_single_action_zero_realized_regret():
    f = Features(phi=np.eye(2), psi=np.eye(2), num_actions=1)
    mdp = LinearMdp(f, np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 0.0]), 3)
    rec = run_task(mdp, np.zeros((2, 2)), 1.0, 10, 0.1, np.random.default_rng(0))
    assert np.all(rec.regret == 0) and rec.cum_regret == 0


def test_regret_accounting(mdp):
    rec = run_task(mdp, np.zeros((3, 4)), 1.0, 60, 0.1, np.random.default_rng(3))
    realized = sum(mdp.reward[s * 2 + a] for s_row, a_row in zip(rec.states, rec.actions)
                   for s, a in zip(s_row[:-1], a_row))
    assert rec.cum_regret == pytest.approx(60 * rec.v_star - realized, abs=1e-9)
    assert rec.cumulative()[-1] == pytest.approx(rec.cum_regret, abs=1e-12)
    assert rec.v_star == optimal_values(mdp)[0, 0]
    assert np.all(rec.pseudo_regret >= -1e-12)
    # logged features are the features of the visited pairs
    np.testing.assert_array_equal(rec.phis, mdp.features.phi[rec.states[:, :-1] * 2 + rec.actions])


def test_optimism_under_membership(mdp):
    for seed in range(10):
        for lam in (0.3, 1.0, 4.0):
            rec = run_task(mdp, np.zeros((3, 4)), lam, 80, 0.1, np.random.default_rng(seed))
            ok = rec.in_ellipsoid | rec.in_weighted_ellipsoid
            assert np.all(rec.plan_value[ok] >= rec.v_star - 1e-9)


def test_runs_are_reproducible(mdp):
    a = run_task(mdp, np.zeros((3, 4)), 1.0, 40, 0.1, np.random.default_rng(5))
    b = run_task(mdp, np.zeros((3, 4)), 1.0, 40, 0.1, np.random.default_rng(5))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.returns, b.returns)


def test_default_delta_and_modes(mdp):
    rec = run_task(mdp, np.zeros((3, 4)), 1.0, 10, rng=np.random.default_rng(0))
    assert rec.delta == pytest.approx(1 / (10 * mdp.horizon))
    assumed = run_task(mdp, np.zeros((3, 4)), 1.0, 10, 0.1, np.random.default_rng(0), radius_mode="assumption")
    oracle = run_task(mdp, np.zeros((3, 4)), 1.0, 10, 0.1, np.random.default_rng(0))
    assert np.all(assumed.beta >= oracle.beta - 1e-12)
    with pytest.raises(ValueError):
        run_task(mdp, np.zeros((3, 4)), 1.0, 0)
    with pytest.raises(ValueError):
        run_task(mdp, np.zeros((3, 4)), 1.0, 5, radius_mode="bogus")


def test_oracle_bias_collapses_regret(mdp):
    per_ep = []
    for seed in range(5):
        rec = run_task(mdp, mdp.core, 1e9, 50, rng=np.random.default_rng(seed))
        per_ep.append(rec.cum_regret / 50)
        assert np.all(rec.pseudo_regret <= 1e-6)
    assert np.median(per_ep) <= 0.05 * mdp.horizon


def test_episode_csv(mdp):
    rec = run_task(mdp, np.zeros((3, 4)), 1.0, 5, 0.1, np.random.default_rng(1))
    buf = io.StringIO(newline="")
    write_episode_csv(buf, rec)
    text = buf.getvalue()
    assert text.count("\r\n") == 6
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[3][4]) == rec.cumulative()[2]  # full precision round-trips
    assert rows[1][6] in ("0", "1")


@pytest.mark.slow
def test_sublinear_regret(mdp):
    r250, r500, r1000, r2000 = [], [], [], []
    for seed in range(20):
        cum = run_task(mdp, np.zeros((3, 4)), 1.0, 2000, rng=np.random.default_rng(seed)).cumulative()
        r250.append(cum[249]), r500.append(cum[499]), r1000.append(cum[999]), r2000.append(cum[1999])
    assert np.median(np.array(r500) / np.array(r250)) < 2
    assert np.median(np.array(r1000) / np.array(r500)) < 2
