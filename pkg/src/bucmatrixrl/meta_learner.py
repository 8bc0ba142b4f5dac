"""Meta-training with learned bias cores.

Estimators share one protocol used by :func:`buc_agent.run_task`:

* ``begin_task(ridge)`` returns the bias for the first episode of a task;
* ``observe(phi, psi_next)`` sees every transition;
* ``episode_bias(ridge)`` returns the bias for the next episode;
* ``end_task(ridge)`` folds the finished task into the estimator.

Once ``frozen`` the estimator keeps returning ``current_w`` and ignores data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .buc_agent import RunRecord, run_task
from .core_regression import RidgeState
from .errors import EmptyHistory
from .evaluation import transfer_regret
from .task_family import ANCHOR_DIRICHLET, DIRICHLET_FLOOR, TaskFamily, family_stats, sample_core

ZERO = "zero"
ORACLE = "oracle"
LOW_BIAS = "low_bias"
GLOBAL_RIDGE = "global_ridge"
ESTIMATOR_KINDS = (ZERO, ORACLE, LOW_BIAS, GLOBAL_RIDGE)

VAR_FLOOR = 1e-6


def low_bias_w(prev_cores: Sequence[np.ndarray], current, T, n, h, H) -> np.ndarray:
    """Weighted average of finished-task estimates and the running one.

    Finished tasks weigh ``T / Z`` each, the current estimate ``(nH + h) / Z``,
    with ``Z = T (G - 1) + nH + h``.
    """
    count = n * H + h
    z = T * len(prev_cores) + count
    if z <= 0:
        raise EmptyHistory("no finished tasks and no transitions in the current task")
    w = np.zeros_like(np.asarray(current if current is not None else prev_cores[0], dtype=float))
    for m in prev_cores:
        w += (T / z) * m
    if count:
        w += (count / z) * current
    return w


@dataclass
class GlobalRidgePool:
    """Pooled Gram matrix and cross moment over every transition seen."""

    gram: np.ndarray
    xy: np.ndarray

    @classmethod
    def empty(cls, d, d_prime):
        return cls(np.zeros((d, d)), np.zeros((d, d_prime)))

    def add(self, phi, target):
        self.gram += np.outer(phi, phi)
        self.xy += np.outer(phi, target)

    def merged(self, other: "GlobalRidgePool") -> "GlobalRidgePool":
        return GlobalRidgePool(self.gram + other.gram, self.xy + other.xy)


def global_ridge_w(pooled: GlobalRidgePool, lam) -> np.ndarray:
    """One unbiased ridge solve over the pooled data."""
    d = pooled.gram.shape[0]
    return np.linalg.solve(lam * np.eye(d) + pooled.gram, pooled.xy)


def lambda_schedule(var_estimate, T, var_floor=VAR_FLOOR) -> float:
    """``1 / (T * Var)``: less prior reliance for long tasks and broad families."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return 1.0 / (T * max(float(var_estimate), var_floor))


def plug_in_variance(cores: Sequence[np.ndarray]) -> float:
    """Mean squared Frobenius distance of ``cores`` to their average."""
    stack = np.stack(cores)
    return float(((stack - stack.mean(axis=0)) ** 2).sum(axis=(1, 2)).mean())


def exact_variance(family: TaskFamily, w) -> float:
    """``E||M - W||_F^2`` in closed form (Dirichlet rows) or by exact summation."""
    w = np.asarray(w, dtype=float)
    if family.kind != ANCHOR_DIRICHLET:
        return family_stats(family, w).var_w
    alpha = family.spread * np.maximum(family.mean_core, DIRICHLET_FLOOR)
    a0 = alpha.sum(axis=1, keepdims=True)
    p = alpha / a0
    row_var = (1.0 - (p**2).sum(axis=1)) / (a0[:, 0] + 1.0)
    return float(row_var.sum() + ((p - w) ** 2).sum())


class BiasEstimator:
    kind = "base"

    def __init__(self, d, d_prime, w0=None):
        self.d, self.d_prime = d, d_prime
        self.current_w = np.zeros((d, d_prime)) if w0 is None else np.array(w0, dtype=float)
        self.frozen = False

    def begin_task(self, ridge: RidgeState) -> np.ndarray:
        return self.current_w

    def observe(self, phi, psi_next):
        pass

    def episode_bias(self, ridge: RidgeState) -> np.ndarray:
        return self.current_w

    def end_task(self, ridge: RidgeState):
        pass

    def freeze(self):
        self.frozen = True


class ZeroBias(BiasEstimator):
    kind = ZERO


class OracleBias(BiasEstimator):
    kind = ORACLE

    def __init__(self, core):
        core = np.asarray(core, dtype=float)
        super().__init__(*core.shape, w0=core)


class LowBiasAverage(BiasEstimator):
    """Refreshes the bias once per episode from finished and running estimates."""

    kind = LOW_BIAS

    def __init__(self, d, d_prime, T, H, w0=None):
        super().__init__(d, d_prime, w0)
        self.T, self.H = T, H
        self.prev_cores: list[np.ndarray] = []
        self._t = 0

    def begin_task(self, ridge):
        self._t = 0
        if not self.frozen and self.prev_cores:
            self.current_w = low_bias_w(self.prev_cores, None, self.T, 0, 0, self.H)
        return self.current_w

    def observe(self, phi, psi_next):
        self._t += 1

    def episode_bias(self, ridge):
        if self.frozen:
            return self.current_w
        n, h = divmod(self._t, self.H)
        self.current_w = low_bias_w(self.prev_cores, ridge.solve(), self.T, n, h, self.H)
        return self.current_w

    def end_task(self, ridge):
        if self.frozen:
            return
        self.prev_cores.append(ridge.solve())
        self.current_w = low_bias_w(self.prev_cores, None, self.T, 0, 0, self.H)


class GlobalRidge(BiasEstimator):
    """Pools every transition; re-solves the bias once per episode."""

    kind = GLOBAL_RIDGE

    def __init__(self, d, d_prime, lam, kpsi_inv=None, w0=None):
        super().__init__(d, d_prime, w0)
        self.lam = float(lam)
        self.kpsi_inv = np.eye(d_prime) if kpsi_inv is None else np.asarray(kpsi_inv, dtype=float)
        self.pool = GlobalRidgePool.empty(d, d_prime)
        self.current = GlobalRidgePool.empty(d, d_prime)
        self.task_grams: list[np.ndarray] = []

    def _solve(self):
        total = self.pool.merged(self.current)
        if not np.any(total.gram):
            return self.current_w
        return global_ridge_w(total, self.lam)

    def begin_task(self, ridge):
        self.current = GlobalRidgePool.empty(self.d, self.d_prime)
        return self.current_w

    def observe(self, phi, psi_next):
        if not self.frozen:
            self.current.add(phi, self.kpsi_inv @ psi_next)

    def episode_bias(self, ridge):
        if not self.frozen:
            self.current_w = self._solve()
        return self.current_w

    def end_task(self, ridge):
        if self.frozen:
            return
        self.task_grams.append(self.current.gram.copy())
        self.pool = self.pool.merged(self.current)
        self.current = GlobalRidgePool.empty(self.d, self.d_prime)
        self.current_w = self._solve()

    @property
    def v_tilde(self) -> np.ndarray:
        return self.pool.merged(self.current).gram


def make_estimator(kind, family: TaskFamily, T, H, lam_train=1.0) -> BiasEstimator:
    f = family.features
    if kind == ZERO:
        return ZeroBias(f.d, f.d_prime)
    if kind == ORACLE:
        return OracleBias(family.mean_core)
    if kind == LOW_BIAS:
        return LowBiasAverage(f.d, f.d_prime, T, H)
    if kind == GLOBAL_RIDGE:
        return GlobalRidge(f.d, f.d_prime, lam_train, f.kpsi_inv)
    raise ValueError(f"unknown estimator kind {kind!r}")


@dataclass
class TaskResult:
    role: str  # "train" or "test"
    index: int
    core: np.ndarray
    record: RunRecord
    lam: float
    bias_start: np.ndarray
    w_after: np.ndarray


@dataclass
class MetaRunRecord:
    estimator: str
    tasks: list[TaskResult] = field(default_factory=list)
    eps: list[float] = field(default_factory=list)
    h_m: list[float] = field(default_factory=list)
    var_estimate: float | None = None
    completed: bool = False
    error: str | None = None

    @property
    def train(self) -> list[TaskResult]:
        return [t for t in self.tasks if t.role == "train"]

    @property
    def test(self) -> list[TaskResult]:
        return [t for t in self.tasks if t.role == "test"]

    @property
    def lambdas(self) -> list[float]:
        return [t.lam for t in self.tasks]

    def transfer_regret(self) -> tuple[float, float]:
        return transfer_regret([t.record for t in self.test])


def task_streams(seed):
    """Independent generators keyed by role and index; extra tasks never shift earlier ones."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    def stream(*key):
        return np.random.default_rng(
            np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key)
        )

    return stream


def _test_lambda(kind, family, estimator, train_cores_est, T, lam_mode, lam_fixed):
    if kind == ZERO or lam_mode == "fixed":
        return 1.0 if kind == ZERO else lam_fixed
    if kind == ORACLE:
        return lambda_schedule(exact_variance(family, family.mean_core), T)
    if len(train_cores_est) < 2:
        return lam_fixed
    return lambda_schedule(plug_in_variance(train_cores_est), T)


def meta_train(
    family: TaskFamily,
    estimator_kind: str,
    G_train: int,
    G_test: int,
    N: int,
    delta: float | None = None,
    seed=0,
    *,
    lam_mode: str = "schedule",
    lam_fixed: float = 1.0,
    lam_train: float = 1.0,
    radius_mode: str = "oracle",
    continual: bool = False,
    train_cores: Sequence[np.ndarray] | None = None,
    test_cores: Sequence[np.ndarray] | None = None,
) -> MetaRunRecord:
    """Train a bias on ``G_train`` sampled tasks, then score ``G_test`` fresh tasks.

    Training tasks run with ``lam_train``. Test tasks use ``lam_fixed`` or the
    ``1/(T Var)`` schedule with a plug-in variance from the training
    estimates (exact variance for the oracle, ``lam = 1`` for the zero bias).
    Unless ``continual``, the bias is frozen before the first test task.
    Task cores and rollout randomness depend only on ``seed``, so different
    estimators see identical tasks.
    """
    if G_train < 0 or G_test < 1 or N < 1:
        raise ValueError("need G_train >= 0, G_test >= 1, N >= 1")
    if lam_mode not in ("fixed", "schedule"):
        raise ValueError(f"unknown lambda mode {lam_mode!r}")
    H = family.base.horizon
    T = N * H
    stream = task_streams(seed)
    core_rng_train, core_rng_test = stream(0), stream(2)
    if train_cores is None:
        train_cores = [sample_core(family, core_rng_train) for _ in range(G_train)]
    if test_cores is None:
        test_cores = [sample_core(family, core_rng_test) for _ in range(G_test)]
    if len(train_cores) != G_train or len(test_cores) != G_test:
        raise ValueError("explicit core lists must match G_train / G_test")

    est = make_estimator(estimator_kind, family, T, H, lam_train)
    out = MetaRunRecord(estimator_kind)
    seen_true: list[np.ndarray] = []
    estimated: list[np.ndarray] = []

    def run_one(role, idx, core, lam, rng):
        mdp = family.task(core)
        bias_start = est.current_w.copy()
        rec = run_task(
            mdp, bias_start, lam, N, delta, rng, radius_mode=radius_mode, estimator=est
        )
        est.end_task(_FinalRidge(rec))
        estimated.append(rec.m_hat_final)
        seen_true.append(np.asarray(core))
        out.tasks.append(TaskResult(role, idx, np.asarray(core), rec, lam, bias_start, est.current_w.copy()))
        out.eps.append(float(np.sum((family.mean_core - est.current_w) ** 2)))
        out.h_m.append(float(np.linalg.norm(family.mean_core - np.mean(seen_true, axis=0))))

    try:
        for g, core in enumerate(train_cores):
            lam = 1.0 if estimator_kind == ZERO else lam_train
            run_one("train", g, core, lam, stream(1, g))
        if not continual:
            est.freeze()
        train_est = list(estimated)
        if estimator_kind in (LOW_BIAS, GLOBAL_RIDGE) and len(train_est) >= 2:
            out.var_estimate = plug_in_variance(train_est)
        for i, core in enumerate(test_cores):
            pool = estimated if continual else train_est
            lam = _test_lambda(estimator_kind, family, est, pool, T, lam_mode, lam_fixed)
            run_one("test", i, core, lam, stream(3, i))
    except Exception as exc:  # keep what finished, let the caller decide
        out.error = f"{type(exc).__name__}: {exc}"
        exc.partial_record = out
        raise
    out.completed = True
    return out


class _FinalRidge:
    """Adapter exposing ``solve()`` for a finished task's final estimate."""

    def __init__(self, record: RunRecord):
        self._m = record.m_hat_final

    def solve(self):
        return self._m


def estimation_diagnostics(record: MetaRunRecord, mean_core, lam=1.0) -> dict:
    """Bias estimation error, observed-mean error and task misalignment.

    ``h_m[g]`` is ``||M_bar - mean(M_1..M_{g+1})||_F`` over the true sampled
    cores. For global ridge runs ``h_tilde[g]`` is
    ``||M_g - mean(M_1..M_g)||_F * sigma_max(V_g Vtilde^{-1})`` over the
    training tasks and ``nu_min`` is ``lambda_min(Vtilde)``.
    """
    mean_core = np.asarray(mean_core, dtype=float)
    cores = [t.core for t in record.tasks]
    eps = [float(np.sum((mean_core - t.w_after) ** 2)) for t in record.tasks]
    h_m = [float(np.linalg.norm(mean_core - np.mean(cores[: g + 1], axis=0))) for g in range(len(cores))]
    diag = {"eps": eps, "h_m": h_m}
    if record.estimator == GLOBAL_RIDGE and record.train:
        grams = [t.record.gram_final for t in record.train]
        v_tilde = np.sum(grams, axis=0)
        v_inv = np.linalg.pinv(v_tilde)
        train_cores = [t.core for t in record.train]
        h_tilde = []
        for g, gram in enumerate(grams):
            err = np.linalg.norm(train_cores[g] - np.mean(train_cores[: g + 1], axis=0))
            h_tilde.append(float(err * np.linalg.norm(gram @ v_inv, 2)))
        diag["h_tilde"] = h_tilde
        diag["nu_min"] = float(np.linalg.eigvalsh(v_tilde)[0])
    return diag
