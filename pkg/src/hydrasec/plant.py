"""Three-tank water process: flows, mass balance, Euler stepping, sensors.

Tank 1 is fed by pump 1 from the reservoir and drains into tank 2 through
valve v12.  Tanks 2 and 3 are communicating vessels joined through valve v23 at
height ``h_con``; pump 2 lifts water from tank 3 back into tank 1.  All
levels are in metres, flows in m^3/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "PlantParams",
    "ActuatorInput",
    "NoiseSpec",
    "Flows",
    "flows",
    "derivative",
    "step",
    "advance",
    "measure",
    "level_controller",
    "NoiseSource",
]


@dataclass(frozen=True)
class PlantParams:
    A: float = 0.01
    a: float = 0.0005
    grav: float = 9.81
    h_con: float = 0.05
    k1: float = 1e-4
    k2: float = 0.2
    dt: float = 0.1

    def __post_init__(self) -> None:
        if not (self.A > 0 and self.a > 0 and self.grav > 0 and self.dt > 0):
            raise ValueError("A, a, grav and dt must be positive")
        if self.h_con < 0 or self.k1 < 0 or self.k2 < 0:
            raise ValueError("h_con, k1 and k2 must be non-negative")


@dataclass(frozen=True)
class ActuatorInput:
    """Valve openings and the pump-1 duty, all in [0, 1].

    ``pump1`` scales the reservoir inflow ``P1 = k1 * pump1``; the default of
    1 keeps pump 1 permanently on.
    """

    v12: float
    v23: float
    pump1: float = 1.0

    def __post_init__(self) -> None:
        for name in ("v12", "v23", "pump1"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name}={val} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.pump1, self.v12, self.v23])


@dataclass(frozen=True)
class NoiseSpec:
    Q: np.ndarray
    R: np.ndarray
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("Q", "R"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3, got {m.shape}")
            if not np.allclose(m, m.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-15:
                raise ValueError(f"{name} must be positive semi-definite")
            object.__setattr__(self, name, m)


class Flows(NamedTuple):
    Q12: float
    Q23: float
    Q23h: float
    Q32h: float
    P1: float
    P2: float


def _unit_step(z: float) -> float:
    return 1.0 if z >= 0.0 else 0.0


def _sign(z: float) -> float:
    return (z > 0.0) - (z < 0.0)


def _root(z: float, grav: float) -> float:
    return math.sqrt(2.0 * grav * z) if z > 0.0 else 0.0


def flows(x: Sequence[float], u: ActuatorInput, params: PlantParams) -> Flows:
    x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
    a, g, h = params.a, params.grav, params.h_con
    q12 = a * u.v12 * _root(x1, g)
    q23 = (
        a * u.v23 * _unit_step(x2 - h) * _unit_step(x3 - h)
        * _sign(x2 - x3) * _root(abs(x2 - x3), g)
    )
    q23h = a * u.v23 * _unit_step(x2 - h) * _unit_step(h - x3) * _root(x2 - h, g)
    q32h = a * u.v23 * _unit_step(x3 - h) * _unit_step(h - x2) * _root(x3 - h, g)
    p2 = params.k2 * a * _root(x3, g)
    p1 = params.k1 * u.pump1
    return Flows(q12, q23, q23h, q32h, p1, p2)


def derivative(x: Sequence[float], u: ActuatorInput, params: PlantParams) -> np.ndarray:
    f = flows(x, u, params)
    return np.array([
        f.P1 + f.P2 - f.Q12,
        f.Q12 - f.Q23 - f.Q23h + f.Q32h,
        f.Q23 + f.Q23h - f.Q32h - f.P2,
    ]) / params.A


def step(x, u: ActuatorInput, params: PlantParams, noise=None) -> np.ndarray:
    """One forward-Euler step, optional additive process noise, levels clamped at 0."""
    x = np.asarray(x, dtype=float)
    nxt = x + params.dt * derivative(x, u, params)
    if noise is not None:
        nxt = nxt + np.asarray(noise, dtype=float)
    return np.maximum(nxt, 0.0)


def advance(x, u: ActuatorInput, params: PlantParams, substeps: int = 1, noise=None) -> np.ndarray:
    """Ground-truth transition: ``substeps`` Euler steps of ``dt / substeps``.

    With ``substeps > 1`` this approximates the continuous-time flow more
    closely than the single-step map the estimator uses.  Process noise is
    added once, after the last sub-step.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if substeps == 1:
        return step(x, u, params, noise)
    fine = replace(params, dt=params.dt / substeps)
    x = np.asarray(x, dtype=float)
    for _ in range(substeps - 1):
        x = step(x, u, fine)
    return step(x, u, fine, noise)


def measure(x, noise=None) -> np.ndarray:
    y = np.array(x, dtype=float)
    if noise is not None:
        y = y + np.asarray(noise, dtype=float)
    return y


def _clip01(z: float) -> float:
    return min(1.0, max(0.0, z))


def level_controller(
    y,
    setpoints,
    params: PlantParams,
    valve_gain: float = 0.3,
    pump_gain: float = 20.0,
) -> ActuatorInput:
    """Deterministic proportional law around the setpoint equilibrium.

    Valve openings start from the values that balance the recirculation loop
    at the setpoints (``Q12 = Q23 = P2``) and open further when the upstream
    tank is above its setpoint.  Pump 1 fills the system until the total
    inventory reaches the sum of the setpoints, then stays off.
    """
    y1, y2, y3 = (float(v) for v in y)
    s1, s2, s3 = (float(v) for v in setpoints)
    k2 = params.k2
    v12_eq = k2 * math.sqrt(s3 / s1) if s1 > 0 else 1.0
    v23_eq = k2 * math.sqrt(s3 / (s2 - s3)) if s2 > s3 else 1.0
    return ActuatorInput(
        v12=_clip01(v12_eq + valve_gain * (y1 - s1)),
        v23=_clip01(v23_eq + valve_gain * (y2 - s2)),
        pump1=_clip01(pump_gain * ((s1 + s2 + s3) - (y1 + y2 + y3))),
    )


class NoiseSource:
    """Seeded Gaussian draws for process and measurement noise.

    Uses numpy's PCG64 generator; the two noise channels use independent child
    streams of ``SeedSequence(rng_seed)`` so adding draws to one never shifts
    the other.
    """

    def __init__(self, spec: NoiseSpec):
        proc_ss, meas_ss = np.random.SeedSequence(spec.rng_seed).spawn(2)
        self._proc = np.random.Generator(np.random.PCG64(proc_ss))
        self._meas = np.random.Generator(np.random.PCG64(meas_ss))
        self._q_root = _psd_root(spec.Q)
        self._r_root = _psd_root(spec.R)

    def process(self) -> np.ndarray:
        return self._q_root @ self._proc.standard_normal(3)

    def measurement(self) -> np.ndarray:
        return self._r_root @ self._meas.standard_normal(3)


def _psd_root(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
