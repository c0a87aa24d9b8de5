"""Scenario configuration: flat ``dotted.key = value`` text files.

Every key has a default (see :data:`DEFAULTS`); a file only lists overrides.
Unknown keys and malformed values raise :class:`ConfigError`.  Vectors are
comma separated.  Covariances accept one number (scaled identity), three
(diagonal) or nine (row-major).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Optional

import numpy as np

from .adversary import AttackConfig
from .channel import ChannelConfig
from .errors import ConfigError
from .estimator import DEFAULT_CHI2
from .keystream import PSequenceKey
from .plant import NoiseSpec, PlantParams

__all__ = ["ScenarioConfig", "DEFAULTS", "load_config", "parse_config", "config_from_mapping", "dump_config"]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _vec3(text: str) -> tuple[float, float, float]:
    vals = _floats(text)
    if len(vals) != 3:
        raise ValueError(f"expected 3 values, got {len(vals)}")
    return vals


def _optional_vec3(text: str):
    return None if text.strip().lower() in ("", "none") else _vec3(text)


def _cov(text: str) -> np.ndarray:
    vals = _floats(text)
    if len(vals) == 1:
        return vals[0] * np.eye(3)
    if len(vals) == 3:
        return np.diag(vals)
    if len(vals) == 9:
        return np.array(vals).reshape(3, 3)
    raise ValueError(f"covariance needs 1, 3 or 9 values, got {len(vals)}")


def _optional_cov(text: str):
    return None if text.strip().lower() in ("", "none") else _cov(text)


def _str(text: str) -> str:
    return text.strip()


# key -> (default text, parser)
DEFAULTS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "plant.A": ("0.01", float),
    "plant.a": ("0.0005", float),
    "plant.grav": ("9.81", float),
    "plant.h_con": ("0.05", float),
    "plant.k1": ("0.0001", float),
    "plant.k2": ("0.2", float),
    "plant.dt": ("0.1", float),
    "plant.x0": ("0, 0, 0", _vec3),
    "plant.substeps": ("10", int),
    "plant.true_a_scale": ("0.9", float),
    "noise.Q": ("1e-9", _cov),
    "noise.R": ("2.5e-7", _cov),
    "noise.rng_seed": ("1", int),
    "key.p": ("3", int),
    "key.seed": ("17", int),
    "key.selection_modulus": ("full", _str),
    "channel.coding_enabled": ("true", _bool),
    "channel.loss_probability": ("0", float),
    "channel.rng_seed": ("1", int),
    "attack.mode": ("replay_payload", _str),
    "attack.steady_window": ("50", int),
    "attack.steady_epsilon": ("0.001", float),
    "attack.bias": ("none", _optional_vec3),
    "attack.record_len": ("100", int),
    "controller.valve_gain": ("0.3", float),
    "controller.pump_gain": ("20", float),
    "estimator.chi2_threshold": (repr(DEFAULT_CHI2), float),
    "estimator.residual_mode": ("posterior", _str),
    "estimator.x0": ("0, 0, 0", _vec3),
    "estimator.P0": ("1e-4", _cov),
    "estimator.Q": ("none", _optional_cov),
    "horizon": ("5000", int),
    "calibration_len": ("1000", int),
    "setpoints": ("0.1, 0.3, 0.2", _vec3),
    "margin": ("1.0", float),
    "output_dir": ("out", _str),
}


@dataclass(frozen=True)
class ControllerGains:
    valve_gain: float = 0.3
    pump_gain: float = 20.0


@dataclass(frozen=True)
class EstimatorConfig:
    chi2_threshold: float = DEFAULT_CHI2
    residual_mode: str = "posterior"
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    P0: np.ndarray = field(default_factory=lambda: 1e-4 * np.eye(3))
    Q: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ScenarioConfig:
    plant: PlantParams
    noise: NoiseSpec
    key: PSequenceKey
    channel: ChannelConfig
    attack: AttackConfig
    controller: ControllerGains
    estimator: EstimatorConfig
    x0: tuple[float, float, float]
    substeps: int
    true_a_scale: float
    horizon: int
    calibration_len: int
    setpoints: tuple[float, float, float]
    margin: float
    output_dir: str

    def __post_init__(self) -> None:
        if not self.horizon > self.calibration_len >= 1:
            raise ConfigError(
                f"need horizon > calibration_len >= 1, got {self.horizon}, {self.calibration_len}"
            )
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.estimator.residual_mode not in ("posterior", "innovation"):
            raise ConfigError(f"unknown residual_mode {self.estimator.residual_mode!r}")
        if self.channel.key != self.key:
            raise ConfigError("channel key must equal the scenario key")
        if self.substeps < 1:
            raise ConfigError("plant.substeps must be >= 1")
        if self.true_a_scale <= 0:
            raise ConfigError("plant.true_a_scale must be positive")
        if any(v < 0 for v in self.x0):
            raise ConfigError("initial levels must be non-negative")

    def true_plant(self) -> PlantParams:
        """Parameters of the simulated physical plant (the monitor uses ``plant``)."""
        return replace(self.plant, a=self.plant.a * self.true_a_scale)

    def with_overrides(self, **flat: Any) -> ScenarioConfig:
        """Copy with dotted-key overrides given as text or typed values.

        Keyword names use ``__`` for dots, e.g. ``attack__mode="none"``.
        """
        merged = to_mapping(self)
        for k, v in flat.items():
            merged[k.replace("__", ".")] = v
        return config_from_mapping(merged)

    @classmethod
    def default(cls) -> ScenarioConfig:
        return config_from_mapping({})


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, np.ndarray):
        return ", ".join(repr(float(v)) for v in value.ravel())
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def to_mapping(cfg: ScenarioConfig) -> dict[str, Any]:
    """Flatten ``cfg`` back to typed dotted-key values."""
    return {
        "plant.A": cfg.plant.A,
        "plant.a": cfg.plant.a,
        "plant.grav": cfg.plant.grav,
        "plant.h_con": cfg.plant.h_con,
        "plant.k1": cfg.plant.k1,
        "plant.k2": cfg.plant.k2,
        "plant.dt": cfg.plant.dt,
        "plant.x0": cfg.x0,
        "plant.substeps": cfg.substeps,
        "plant.true_a_scale": cfg.true_a_scale,
        "noise.Q": cfg.noise.Q,
        "noise.R": cfg.noise.R,
        "noise.rng_seed": cfg.noise.rng_seed,
        "key.p": cfg.key.p,
        "key.seed": cfg.key.seed,
        "key.selection_modulus": cfg.channel.selection_modulus,
        "channel.coding_enabled": cfg.channel.coding_enabled,
        "channel.loss_probability": cfg.channel.loss_probability,
        "channel.rng_seed": cfg.channel.rng_seed,
        "attack.mode": cfg.attack.mode,
        "attack.steady_window": cfg.attack.steady_window,
        "attack.steady_epsilon": cfg.attack.steady_epsilon,
        "attack.bias": cfg.attack.bias,
        "attack.record_len": cfg.attack.record_len,
        "controller.valve_gain": cfg.controller.valve_gain,
        "controller.pump_gain": cfg.controller.pump_gain,
        "estimator.chi2_threshold": cfg.estimator.chi2_threshold,
        "estimator.residual_mode": cfg.estimator.residual_mode,
        "estimator.x0": cfg.estimator.x0,
        "estimator.P0": cfg.estimator.P0,
        "estimator.Q": cfg.estimator.Q,
        "horizon": cfg.horizon,
        "calibration_len": cfg.calibration_len,
        "setpoints": cfg.setpoints,
        "margin": cfg.margin,
        "output_dir": cfg.output_dir,
    }


def config_from_mapping(values: Mapping[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    v: dict[str, Any] = {}
    for key, (default, parser) in DEFAULTS.items():
        raw = values.get(key, default)
        try:
            v[key] = parser(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    if v["attack.bias"] is not None:
        v["attack.bias"] = tuple(float(b) for b in v["attack.bias"])
    try:
        key = PSequenceKey(v["key.p"], v["key.seed"])
        return ScenarioConfig(
            plant=PlantParams(
                A=v["plant.A"], a=v["plant.a"], grav=v["plant.grav"], h_con=v["plant.h_con"],
                k1=v["plant.k1"], k2=v["plant.k2"], dt=v["plant.dt"],
            ),
            noise=NoiseSpec(np.asarray(v["noise.Q"], float), np.asarray(v["noise.R"], float), v["noise.rng_seed"]),
            key=key,
            channel=ChannelConfig(
                coding_enabled=v["channel.coding_enabled"],
                key=key,
                loss_probability=v["channel.loss_probability"],
                rng_seed=v["channel.rng_seed"],
                selection_modulus=v["key.selection_modulus"],
            ),
            attack=AttackConfig(
                mode=v["attack.mode"],
                steady_window=v["attack.steady_window"],
                steady_epsilon=v["attack.steady_epsilon"],
                bias=v["attack.bias"],
                record_len=v["attack.record_len"],
            ),
            controller=ControllerGains(v["controller.valve_gain"], v["controller.pump_gain"]),
            estimator=EstimatorConfig(
                chi2_threshold=v["estimator.chi2_threshold"],
                residual_mode=v["estimator.residual_mode"],
                x0=tuple(v["estimator.x0"]),
                P0=np.asarray(v["estimator.P0"], float),
                Q=None if v["estimator.Q"] is None else np.asarray(v["estimator.Q"], float),
            ),
            x0=tuple(v["plant.x0"]),
            substeps=v["plant.substeps"],
            true_a_scale=v["plant.true_a_scale"],
            horizon=v["horizon"],
            calibration_len=v["calibration_len"],
            setpoints=tuple(v["setpoints"]),
            margin=v["margin"],
            output_dir=v["output_dir"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = val.strip()
    return config_from_mapping(values)


def load_config(path: Optional[str | os.PathLike]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig.default()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    """Full effective configuration; parsing it back yields an equal config."""
    return "".join(f"{k} = {_format(v)}\n" for k, v in to_mapping(cfg).items())


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    """Same scenario with every random stream reseeded from ``seed``."""
    return replace(
        cfg,
        noise=replace(cfg.noise, rng_seed=seed),
        channel=replace(cfg.channel, rng_seed=seed),
    )
