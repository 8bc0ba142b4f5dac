"""Regret accounting, closed-form bound calculators and lemma checkers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import IncompleteLog
from .linear_mdp import RegularityConstants

LEMMA_TOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    empirical_regret: float
    bound: float
    components: dict = field(default_factory=dict)

    @property
    def slack_ratio(self) -> float:
        if self.empirical_regret <= 0:
            return math.inf
        return self.bound / self.empirical_regret

    @property
    def holds(self) -> bool:
        return self.empirical_regret <= self.bound


@dataclass(frozen=True)
class LemmaCheck:
    lemma: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + LEMMA_TOL


def _c_phi_lambda(c_phi, lam):
    return 4.0 + c_phi / lam


def biased_regret_bound(constants: RegularityConstants, lam, T, H, d, d_prime, w_distance, empirical_regret=math.nan) -> BoundReport:
    """Right-hand side of the biased UC-MatrixRL regret bound.

    ``(C_psi' sqrt(d' d log(T D)) + sqrt(lam) w) * 2 C_psi H sqrt(C_{phi,lam} T d ln D)``
    with ``D = 1 + T C_phi / (lam d)`` and ``C_{phi,lam} = 4 + C_phi / lam``.
    Passing ``w_distance = ||M*||_F`` gives the unbiased (``W = 0``) bound.
    """
    D = 1.0 + T * constants.c_phi / (lam * d)
    c_pl = _c_phi_lambda(constants.c_phi, lam)
    radius = constants.c_psi_prime * math.sqrt(d_prime * d * math.log(T * D)) + math.sqrt(lam) * w_distance
    growth = 2.0 * constants.c_psi * H * math.sqrt(c_pl * T * d * math.log(D))
    return BoundReport(
        float(empirical_regret),
        radius * growth,
        {"D": D, "C_phi_lambda": c_pl, "beta_N": radius, "log_det": math.log(D), "growth": growth},
    )


def unbiased_regret_bound(constants, lam, T, H, d, d_prime, core_norm, empirical_regret=math.nan) -> BoundReport:
    return biased_regret_bound(constants, lam, T, H, d, d_prime, core_norm, empirical_regret)


@dataclass(frozen=True)
class MtrBound:
    mad_form: float
    var_form: float
    dvar_form: float | None
    dvar: float | None
    c_phi_lambda_sched: float | None = None  # C_{phi,lam} at lam = 1/(T var_w)

    @property
    def tighter(self) -> float:
        return min(self.mad_form, self.var_form)


def transfer_regret_bound(constants: RegularityConstants, lam, T, H, d, d_prime, var_w, mad_w) -> MtrBound:
    """Meta transfer regret bound with the absorbed constant set to 1.

    Also evaluates the form obtained with ``lam = 1 / (T var_w)``, where
    ``DVar = 1 + T^2 var_w C_phi / d``.
    """
    D = 1.0 + T * constants.c_phi / (lam * d)
    c_pl = _c_phi_lambda(constants.c_phi, lam)
    lead = constants.c_psi * H * constants.c_psi_prime * d * math.sqrt(
        d_prime * T * c_pl * math.log(T * D) * math.log(D)
    )
    tail = constants.c_psi * H * math.sqrt(lam * T * c_pl * d * math.log(D))
    mad_form = lead + tail * mad_w
    var_form = lead + tail * math.sqrt(var_w)

    dvar = 1.0 + T**2 * var_w * constants.c_phi / d
    # c_phi / lam with lam = 1/(T var_w)
    c_pl_sched = 4.0 + constants.c_phi * T * var_w
    dvar_form = (1.0 + constants.c_psi_prime * math.sqrt(d_prime * d * T * math.log(T * dvar))) * (
        constants.c_psi * H * math.sqrt(c_pl_sched * d * math.log(dvar))
    )
    return MtrBound(mad_form, var_form, dvar_form, dvar, c_pl_sched)


# -- lemma checkers -----------------------------------------------------------

def _as_episodes(phis) -> np.ndarray:
    phis = np.ascontiguousarray(phis, dtype=np.float64)
    if phis.ndim != 3 or phis.shape[0] == 0 or phis.shape[1] == 0:
        raise IncompleteLog("expected a non-empty (episodes, horizon, d) feature log")
    if not np.all(np.isfinite(phis)):
        raise IncompleteLog("feature log contains missing entries")
    return phis


def _c_phi(phis, c_phi):
    return float((phis**2).sum(axis=-1).max()) if c_phi is None else float(c_phi)


def check_log_det_lemma(phis, lam, c_phi=None) -> LemmaCheck:
    """Episode-frozen norms against per-step norms.

    ``sum ||phi||_{(V_n)^{-1}} <= 2 sum ||phi||_{(V_{n,h})^{-1}} + (C_phi/lam) d log D``.
    """
    phis = _as_episodes(phis)
    N, H, d = phis.shape
    c = _c_phi(phis, c_phi)
    frozen, step = kernels.feature_potentials(phis, float(lam))
    lhs = float(np.sqrt(np.maximum(frozen, 0.0)).sum())
    D = 1.0 + N * H * c / (lam * d)
    rhs = 2.0 * float(np.sqrt(np.maximum(step, 0.0)).sum()) + c / lam * d * math.log(D)
    return LemmaCheck("log_det", lhs, rhs)


def check_elliptical_potential(phis, lam, c_phi=None) -> LemmaCheck:
    """``sum_t min(1, ||phi_t||^2_{V_{t-1}^{-1}}) <= 2 d log(1 + t C_phi / (lam d))``."""
    phis = np.asarray(phis, dtype=np.float64)
    if phis.ndim == 2:
        phis = phis[:, None, :]
    phis = _as_episodes(phis.reshape(1, -1, phis.shape[-1]))
    _, t, d = phis.shape
    c = _c_phi(phis, c_phi)
    _, step = kernels.feature_potentials(phis, float(lam))
    lhs = float(np.minimum(1.0, step).sum())
    rhs = 2.0 * d * math.log1p(t * c / (lam * d))
    return LemmaCheck("elliptical_potential", lhs, rhs)


def check_stale_feature_lemma(phis, lam, c_phi=None) -> LemmaCheck:
    """``sum min(1, w_{n,h}^2) <= 2 H d ln(1 + N H C_phi / (lam d))`` with episode-frozen norms."""
    phis = _as_episodes(phis)
    N, H, d = phis.shape
    c = _c_phi(phis, c_phi)
    frozen, _ = kernels.feature_potentials(phis, float(lam))
    lhs = float(np.minimum(1.0, frozen).sum())
    rhs = 2.0 * H * d * math.log1p(N * H * c / (lam * d))
    return LemmaCheck("stale_feature", lhs, rhs)


def check_all_lemmas(phis, lam, c_phi=None) -> list[LemmaCheck]:
    return [
        check_log_det_lemma(phis, lam, c_phi),
        check_elliptical_potential(phis, lam, c_phi),
        check_stale_feature_lemma(phis, lam, c_phi),
    ]


# -- transfer regret ----------------------------------------------------------

def transfer_regret(records) -> tuple[float, float]:
    """Mean cumulative regret over test tasks and its standard error."""
    vals = np.array([r.cum_regret if hasattr(r, "cum_regret") else float(r) for r in records])
    if vals.size == 0:
        raise ValueError("need at least one record")
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def paired_difference(a, b) -> tuple[float, float]:
    """Mean and standard error of ``a - b`` over paired samples."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
    return float(diff.mean()), se
