import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bucmatrixrl.errors import DimensionMismatch, InvalidModel, SingularKPsi
from bucmatrixrl.linear_mdp import (
    Features,
    LinearMdp,
    check_assumptions,
    compute_regularity_constants,
    default_mdp,
    mdp_from_json,
    mdp_to_json,
    optimal_q_values,
    optimal_values,
    policy_values,
    random_stochastic_core,
    sample_next_state,
    simplex_features,
    transition_distribution,
)

from conftest import chain_mdp


def two_by_two(phi_row, core):
    features = Features(phi=np.array([phi_row, phi_row]), psi=np.eye(2), num_actions=1)
    return LinearMdp(features, core, np.zeros(2), 1, 0)


M = np.array([[0.7, 0.3], [0.2, 0.8]])


def test_basis_feature_selects_core_row():
    np.testing.assert_allclose(transition_distribution(two_by_two([1, 0], M), 0, 0), [0.7, 0.3])


def test_mixed_feature_mixes_rows():
    np.testing.assert_allclose(
        transition_distribution(two_by_two([0.5, 0.5], M), 0, 0), [0.45, 0.55], atol=1e-15
    )


def test_identity_core_is_deterministic():
    np.testing.assert_array_equal(transition_distribution(two_by_two([1, 0], np.eye(2)), 0, 0), [1, 0])


def test_negative_entries_rejected():
    bad = np.array([[1.1, -0.1], [0.5, 0.5]])
    with pytest.raises(InvalidModel):
        two_by_two([1, 0], bad).transition_matrix


def test_row_sum_rejected():
    with pytest.raises(InvalidModel):
        two_by_two([1, 0], np.array([[0.7, 0.31], [0.5, 0.5]])).transition_matrix


def test_dust_is_clamped_and_renormalized():
    core = np.array([[1.0 + 5e-13, -5e-13], [0.5, 0.5]])
    row = transition_distribution(two_by_two([1, 0], core), 0, 0)
    assert row[1] == 0.0 and row.sum() == 1.0


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        Features(phi=np.ones((3, 2)), psi=np.eye(2), num_actions=2)
    f = Features(phi=np.eye(2), psi=np.eye(2), num_actions=1)
    with pytest.raises(DimensionMismatch):
        LinearMdp(f, np.eye(3), np.zeros(2), 1)
    with pytest.raises(InvalidModel):
        LinearMdp(f, np.eye(2), np.array([0.0, 1.5]), 1)


def test_sample_deterministic_row():
    mdp = two_by_two([1, 0], np.eye(2))
    for seed in range(20):
        assert sample_next_state(mdp, 0, 0, np.random.default_rng(seed)) == 0


def test_sample_frequency_matches_distribution():
    mdp = two_by_two([0.5, 0.5], np.eye(2))
    rng = np.random.default_rng(0)
    draws = [sample_next_state(mdp, 0, 0, rng) for _ in range(100_000)]
    assert abs(np.mean(np.array(draws) == 0) - 0.5) <= 0.01


def test_sampling_is_deterministic(mdp):
    def seq():
        rng = np.random.default_rng(42)
        return [sample_next_state(mdp, s % 4, s % 2, rng) for s in range(200)]

    assert seq() == seq()


def test_zero_reward_zero_values(mdp):
    m = LinearMdp(mdp.features, mdp.core, np.zeros_like(mdp.reward), 4)
    assert np.all(optimal_values(m) == 0)


def test_unit_reward_saturates(mdp):
    m = LinearMdp(mdp.features, mdp.core, np.ones_like(mdp.reward), 4)
    v = optimal_values(m)
    np.testing.assert_allclose(v[0], 4.0)
    np.testing.assert_allclose(v[:, 0], [4, 3, 2, 1, 0])


def test_chain_matches_policy_enumeration():
    mdp = chain_mdp(horizon=2)
    p = mdp.transition_matrix
    best = -np.inf
    for a1, a2 in itertools.product(range(2), repeat=2):
        s, total = 0, 0.0
        for a in (a1, a2):
            total += mdp.reward[s * 2 + a]
            s = int(np.argmax(p[s * 2 + a]))
        best = max(best, total)
    assert optimal_values(mdp)[0, 0] == best == 1.0


def test_dp_matches_all_deterministic_policies(mdp):
    # exhaustive over nonstationary deterministic policies on a 2-stage instance
    small = LinearMdp(mdp.features, mdp.core, mdp.reward, 2, 0)
    best = -np.inf
    for flat in itertools.product(range(2), repeat=2 * 4):
        acts = np.array(flat).reshape(2, 4)
        best = max(best, policy_values(small, acts)[0, 0])
    assert optimal_values(small)[0, 0] == pytest.approx(best, abs=1e-12)


def test_dp_sanity(mdp):
    v = optimal_values(mdp)
    H = mdp.horizon
    assert np.all(v[H] == 0)
    assert np.all(np.diff(v, axis=0) <= 1e-12)  # nonincreasing in h
    for h in range(H + 1):
        assert np.all(v[h] <= H - h + 1e-12) and np.all(v[h] >= 0)
    q, _ = optimal_q_values(mdp)
    np.testing.assert_allclose(q.max(axis=2), v[:H])


def test_identity_psi_constants():
    f = Features(phi=np.eye(3)[[0, 1, 2, 0, 1, 2]], psi=np.eye(3), num_actions=2)
    c = compute_regularity_constants(f, np.full((3, 3), 1 / 3))
    np.testing.assert_array_equal(f.kpsi, np.eye(3))
    assert c.c_psi_prime == 1.0
    assert c.c_phi == 1.0
    assert c.c_psi == pytest.approx(np.sqrt(3))
    assert c.c_m == pytest.approx(1 / 3)


def test_c_psi_matches_sign_enumeration():
    rng = np.random.default_rng(3)
    psi = rng.normal(size=(4, 3))
    f = Features(phi=rng.dirichlet(np.ones(2), size=4), psi=psi, num_actions=1)
    c = compute_regularity_constants(f, np.zeros((2, 3)))
    brute = max(np.linalg.norm(psi.T @ np.array(v)) for v in itertools.product((-1, 1), repeat=4))
    assert c.c_psi == pytest.approx(brute, rel=1e-12)
    # any v in the unit l_inf ball stays below
    for v in rng.uniform(-1, 1, size=(1000, 4)):
        assert np.linalg.norm(psi.T @ v) <= c.c_psi + 1e-12


def test_c_psi_fallback_is_upper_bound():
    rng = np.random.default_rng(4)
    psi = rng.normal(size=(13, 3))
    f = Features(phi=np.ones((13, 1)), psi=psi, num_actions=1)
    c = compute_regularity_constants(f, np.zeros((1, 3)))
    assert c.c_psi == pytest.approx(np.linalg.norm(psi, axis=1).sum())
    for v in rng.choice([-1.0, 1.0], size=(2000, 13)):
        assert np.linalg.norm(psi.T @ v) <= c.c_psi


def test_singular_kpsi():
    f = Features(phi=np.ones((2, 1)), psi=np.array([[1.0, 1.0], [1.0, 1.0]]), num_actions=1)
    with pytest.raises(SingularKPsi):
        compute_regularity_constants(f, np.zeros((1, 2)))
    assert f.kpsi_condition == float("inf")


def test_regularity_closure(mdp):
    c = compute_regularity_constants(mdp.features, mdp.core)
    assert check_assumptions(mdp.features, mdp.core, c)
    assert (mdp.features.phi**2).sum(axis=1).max() == pytest.approx(c.c_phi, abs=1e-9)
    assert (mdp.core**2).sum() == pytest.approx(c.c_m * mdp.features.d, abs=1e-9)


def test_json_round_trip_is_lossless(mdp):
    back = mdp_from_json(mdp_to_json(mdp))
    assert np.array_equal(back.features.phi, mdp.features.phi)
    assert np.array_equal(back.features.psi, mdp.features.psi)
    assert np.array_equal(back.core, mdp.core)
    assert np.array_equal(back.reward, mdp.reward)
    assert (back.horizon, back.start_state, back.num_actions) == (mdp.horizon, mdp.start_state, mdp.num_actions)
    assert '"regularity"' in mdp_to_json(mdp)


@settings(max_examples=40, deadline=None)
@given(
    S=st.integers(2, 6), A=st.integers(1, 3), d=st.integers(1, 5),
    seed=st.integers(0, 2**31 - 1), H=st.integers(1, 5),
)
def test_generated_instances_are_valid(S, A, d, seed, H):
    rng = np.random.default_rng(seed)
    f = simplex_features(S, A, d, rng)
    core = random_stochastic_core(d, S, rng)
    mdp = LinearMdp(f, core, rng.uniform(size=S * A), H)
    p = mdp.transition_matrix
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert p.min() >= 0 and p.max() <= 1
    v = optimal_values(mdp)
    assert np.all(np.diff(v, axis=0) <= 1e-12)
    assert check_assumptions(f, core, compute_regularity_constants(f, core))
