"""Extended Kalman filter with a chi-square validation gate.

The observation map is the identity (every tank level is measured), so the
observation Jacobian ``G`` is ``I`` throughout.  The transition map is any
callable ``f(x) -> x_next``; :func:`plant_transition` builds the noise-free
tank step for a fixed actuator input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import plant
from .errors import NumericalFailureError

__all__ = [
    "EkfState",
    "GateConfig",
    "DEFAULT_CHI2",
    "numeric_jacobian",
    "jacobian_f",
    "plant_transition",
    "predict",
    "gate_statistic",
    "gate",
    "update",
    "residual",
]

# chi-square critical value, 3 degrees of freedom, 99th percentile
DEFAULT_CHI2 = 11.345

PREDICTED = "predicted"
UPDATED = "updated"


@dataclass(frozen=True)
class EkfState:
    xhat: np.ndarray
    P: np.ndarray
    phase: str = UPDATED

    def __post_init__(self) -> None:
        object.__setattr__(self, "xhat", np.atleast_1d(np.asarray(self.xhat, dtype=float)))
        object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))


@dataclass(frozen=True)
class GateConfig:
    chi2_threshold: float = DEFAULT_CHI2

    def __post_init__(self) -> None:
        if not self.chi2_threshold > 0:
            raise ValueError("chi2_threshold must be positive")


def numeric_jacobian(f: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """Central-difference Jacobian with step ``max(1e-6, 1e-6*|x_i|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty((n, n))
    for i in range(n):
        h = max(1e-6, 1e-6 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return jac


def plant_transition(u: plant.ActuatorInput, params: plant.PlantParams):
    return lambda x: plant.step(x, u, params)


def jacobian_f(xhat, u: plant.ActuatorInput, params: plant.PlantParams) -> np.ndarray:
    return numeric_jacobian(plant_transition(u, params), xhat)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalFailureError("non-finite value in filter state")


def predict(ekf: EkfState, f: Callable[[np.ndarray], np.ndarray], Q, jacobian=None) -> EkfState:
    """A priori step: ``xhat <- f(xhat)``, ``P <- F P F^T + Q``.

    ``jacobian`` defaults to the central-difference Jacobian of ``f``.
    """
    _check_finite(ekf.xhat, ekf.P)
    F = jacobian(ekf.xhat) if jacobian is not None else numeric_jacobian(f, ekf.xhat)
    xhat = np.atleast_1d(np.asarray(f(ekf.xhat), dtype=float))
    P = _symmetrize(F @ ekf.P @ F.T + np.atleast_2d(Q))
    _check_finite(xhat, P)
    return EkfState(xhat, P, PREDICTED)


def _innovation(ekf: EkfState, y, R) -> tuple[np.ndarray, np.ndarray]:
    nu = np.atleast_1d(np.asarray(y, dtype=float)) - ekf.xhat
    S = ekf.P + np.atleast_2d(R)
    return nu, S


def gate_statistic(ekf: EkfState, y, R) -> float:
    """Squared Mahalanobis distance of the innovation, ``nu^T S^-1 nu``."""
    nu, S = _innovation(ekf, y, R)
    try:
        return float(nu @ np.linalg.solve(S, nu))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("innovation covariance is singular") from exc


def gate(ekf: EkfState, y, R, cfg: GateConfig = GateConfig()) -> bool:
    return gate_statistic(ekf, y, R) <= cfg.chi2_threshold


def update(ekf: EkfState, y, R) -> EkfState:
    nu, S = _innovation(ekf, y, R)
    try:
        # K = P S^-1, solved as S^T K^T = P^T
        K = np.linalg.solve(S.T, ekf.P.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("innovation covariance is singular") from exc
    xhat = ekf.xhat + K @ nu
    P = _symmetrize((np.eye(len(xhat)) - K) @ ekf.P)
    _check_finite(xhat, P)
    return EkfState(xhat, P, UPDATED)


def residual(y, ekf: EkfState) -> np.ndarray:
    """Output residual ``y - g(xhat)`` against whatever estimate is passed."""
    return np.atleast_1d(np.asarray(y, dtype=float)) - ekf.xhat

