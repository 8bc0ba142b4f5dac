"""NumPy implementations of the hot loops, used when the extension is absent."""
import numpy as np


def backward_induction(p, reward, bonus, horizon, num_actions, clip):
    sa_count, num_states = p.shape
    if sa_count != num_states * num_actions:
        raise ValueError("transition rows must equal num_states * num_actions")
    q = np.zeros((horizon, num_states, num_actions))
    v = np.zeros((horizon + 1, num_states))
    clipped = np.zeros((horizon, num_states, num_actions), dtype=bool)
    for h in range(horizon - 1, -1, -1):
        nxt = v[h + 1]
        raw = reward + p @ nxt + bonus * np.abs(nxt).max()
        if clip:
            cap = float(horizon - h)
            qh = np.clip(raw, 0.0, cap)
            clipped[h] = (raw > cap).reshape(num_states, num_actions) | (
                raw < 0.0
            ).reshape(num_states, num_actions)
        else:
            qh = raw
        q[h] = qh.reshape(num_states, num_actions)
        v[h] = q[h].max(axis=1)
    return q, v, clipped


def rollout(p, reward, q, start, uniforms):
    horizon, _, num_actions = q.shape
    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    s = int(start)
    states[0] = s
    for h in range(horizon):
        a = int(np.argmax(q[h, s]))
        sa = s * num_actions + a
        actions[h] = a
        rewards[h] = reward[sa]
        row = p[sa]
        nxt = int(np.searchsorted(np.cumsum(row), uniforms[h], side="right"))
        if nxt >= row.shape[0]:
            nxt = int(np.flatnonzero(row > 0.0)[-1]) if np.any(row > 0.0) else 0
        s = nxt
        states[h + 1] = s
    return states, actions, rewards


def sherman_morrison_update(vinv, phi):
    u = vinv @ phi
    denom = 1.0 + phi @ u
    vinv -= np.outer(u, u) / denom
    return denom


def feature_potentials(phis, lam):
    n_ep, horizon, d = phis.shape
    frozen = np.empty((n_ep, horizon))
    step = np.empty((n_ep, horizon))
    step_inv = np.eye(d) / lam
    for n in range(n_ep):
        frozen_inv = step_inv.copy()
        for h in range(horizon):
            x = phis[n, h]
            frozen[n, h] = x @ frozen_inv @ x
            step[n, h] = x @ step_inv @ x
            sherman_morrison_update(step_inv, x)
    return frozen, step
