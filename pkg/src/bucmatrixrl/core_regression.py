"""Biased matrix ridge regression for the transition core.

The state keeps the bias-independent moments ``V^lambda = lam*I + sum phi phi^T``
and ``sum phi (K_psi^{-1} psi)^T``, so the bias ``W`` can be swapped at any
time without replaying data. The biased estimate is

    M_hat = W + (V^lambda)^{-1} [ sum phi (K^{-1} psi)^T - (V^lambda - lam*I) W ].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidDelta
from .linear_mdp import RegularityConstants

REFRESH_EVERY = 500


class RidgeState:
    """Running sufficient statistics of the biased ridge problem (single writer)."""

    def __init__(self, d, d_prime, lam, kpsi_inv=None, bias=None, refresh_every=REFRESH_EVERY):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.d = int(d)
        self.d_prime = int(d_prime)
        self.lam = float(lam)
        self.kpsi_inv = np.eye(d_prime) if kpsi_inv is None else np.asarray(kpsi_inv, dtype=np.float64)
        if self.kpsi_inv.shape != (d_prime, d_prime):
            raise DimensionMismatch("kpsi_inv must be d' x d'")
        self.bias = np.zeros((d, d_prime)) if bias is None else np.array(bias, dtype=np.float64)
        if self.bias.shape != (d, d_prime):
            raise DimensionMismatch(f"bias must have shape {(d, d_prime)}")
        self.v_lambda = self.lam * np.eye(d)
        self.v_lambda_inv = np.eye(d) / self.lam
        self.xy = np.zeros((d, d_prime))
        self.t = 0
        self.refresh_every = refresh_every

    @classmethod
    def for_features(cls, features, lam, bias=None, **kw):
        return cls(features.d, features.d_prime, lam, features.kpsi_inv, bias, **kw)

    @property
    def gram(self) -> np.ndarray:
        """``V_n``, the unregularized feature Gram matrix."""
        return self.v_lambda - self.lam * np.eye(self.d)

    @property
    def cross(self) -> np.ndarray:
        """``sum phi (psi^T K^{-1} - phi^T W)`` for the current bias."""
        return self.xy - self.gram @ self.bias

    def update(self, phi, psi_next):
        phi = np.ascontiguousarray(phi, dtype=np.float64)
        psi_next = np.asarray(psi_next, dtype=np.float64)
        if phi.shape != (self.d,) or psi_next.shape != (self.d_prime,):
            raise DimensionMismatch(
                f"expected phi of shape ({self.d},) and psi of shape ({self.d_prime},)"
            )
        self.v_lambda += np.outer(phi, phi)
        self.xy += np.outer(phi, self.kpsi_inv @ psi_next)
        self.t += 1
        if self.t % self.refresh_every == 0:
            self.v_lambda_inv = np.linalg.inv(self.v_lambda)
            self.v_lambda_inv = (self.v_lambda_inv + self.v_lambda_inv.T) / 2.0
        else:
            kernels.sherman_morrison_update(self.v_lambda_inv, phi)
        return self

    def set_bias(self, bias):
        bias = np.array(bias, dtype=np.float64)
        if bias.shape != (self.d, self.d_prime):
            raise DimensionMismatch(f"bias must have shape {(self.d, self.d_prime)}")
        self.bias = bias

    def solve(self) -> np.ndarray:
        return self.bias + self.v_lambda_inv @ self.cross

    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.v_lambda)[0])

    def feature_norms(self, phi_rows) -> np.ndarray:
        """``||phi||_{(V^lambda)^{-1}}`` for every row of ``phi_rows``."""
        q = np.einsum("ij,jk,ik->i", phi_rows, self.v_lambda_inv, phi_rows)
        return np.sqrt(np.maximum(q, 0.0))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "d_prime": self.d_prime,
            "lambda": self.lam,
            "t": self.t,
            "v_lambda": self.v_lambda.tolist(),
            "v_lambda_inv": self.v_lambda_inv.tolist(),
            "xy": self.xy.tolist(),
            "cross": self.cross.tolist(),
            "bias_w": self.bias.tolist(),
            "kpsi_inv": self.kpsi_inv.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc) -> "RidgeState":
        st = cls(doc["d"], doc["d_prime"], doc["lambda"], np.array(doc["kpsi_inv"]), np.array(doc["bias_w"]))
        st.v_lambda = np.array(doc["v_lambda"], dtype=np.float64)
        st.v_lambda_inv = np.array(doc["v_lambda_inv"], dtype=np.float64)
        st.xy = np.array(doc["xy"], dtype=np.float64)
        st.t = int(doc["t"])
        return st

    @classmethod
    def from_json(cls, text) -> "RidgeState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    center: np.ndarray
    radius: float
    delta: float


def log_det_growth(t, c_phi, lam, d) -> float:
    """``log D`` with ``D = 1 + t * C_phi / (lam * d)``."""
    return math.log1p(t * c_phi / (lam * d))


def assumption_w_distance(bias, constants: RegularityConstants, d) -> float:
    """Upper bound on ``||W - M*||_F`` from ``||M*||_F^2 <= C_M d``."""
    return float(np.linalg.norm(bias)) + math.sqrt(constants.c_m * d)


def ellipsoid_radius(state: RidgeState, delta, constants: RegularityConstants, w_distance=None) -> float:
    """Frobenius radius of the confidence ball around ``state.solve()``.

    ``w_distance`` is ``||W - M*||_F`` when known (oracle diagnostics); with
    ``None`` it is replaced by :func:`assumption_w_distance`.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta!r}")
    if w_distance is None:
        w_distance = assumption_w_distance(state.bias, constants, state.d)
    log_d = log_det_growth(state.t, constants.c_phi, state.lam, state.d)
    noise = constants.c_psi_prime * math.sqrt(
        2.0 * state.d_prime * math.log(1.0 / delta) + state.d_prime * state.d * log_d
    )
    return noise + math.sqrt(state.lam) * float(w_distance)


def confidence_ellipsoid(state, delta, constants, w_distance=None) -> ConfidenceEllipsoid:
    return ConfidenceEllipsoid(state.solve(), ellipsoid_radius(state, delta, constants, w_distance), delta)


def contains(ellipsoid: ConfidenceEllipsoid, m_star) -> bool:
    m_star = np.asarray(m_star)
    if m_star.shape != ellipsoid.center.shape:
        raise DimensionMismatch("core shapes differ")
    return bool(np.linalg.norm(ellipsoid.center - m_star) <= ellipsoid.radius)
