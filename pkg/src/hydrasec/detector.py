"""Residual thresholds learned on healthy data and the H0/H1 decision rule.

Components are numbered from 1, matching tank numbers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import CalibrationError

__all__ = [
    "ThresholdVector",
    "Decision",
    "AlarmEvent",
    "calibrate",
    "decide",
    "alarm_stream",
    "save_thresholds",
    "load_thresholds",
    "H0",
    "H1",
]

H0 = "H0"
H1 = "H1"


@dataclass(frozen=True)
class ThresholdVector:
    beta: np.ndarray
    calibration_len: int
    margin: float = 1.0

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise CalibrationError(f"thresholds must be finite and non-negative: {beta}")
        if self.calibration_len < 1:
            raise CalibrationError("calibration_len must be >= 1")


@dataclass(frozen=True)
class Decision:
    hypothesis: str
    violated: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if (self.hypothesis == H1) != bool(self.violated):
            raise ValueError("H1 exactly when some component is violated")

    @property
    def alarm(self) -> bool:
        return self.hypothesis == H1


class AlarmEvent(NamedTuple):
    step: int
    violated: frozenset[int]


def calibrate(residual_history: Iterable[Sequence[float]], margin: float = 1.0) -> ThresholdVector:
    """Per-component ``margin * max_k |r_k,i|`` over a healthy window.

    Rows containing NaN (steps without a delivered measurement) are skipped,
    but still count towards ``calibration_len``.
    """
    hist = np.asarray(list(residual_history), dtype=float)
    if hist.size == 0:
        raise CalibrationError("empty residual history")
    if hist.ndim == 1:
        hist = hist[:, None]
    valid = hist[~np.isnan(hist).any(axis=1)]
    if len(valid) == 0:
        raise CalibrationError("no delivered measurements in calibration window")
    if margin <= 0:
        raise CalibrationError(f"margin must be positive, got {margin}")
    beta = np.abs(valid).max(axis=0) * margin
    return ThresholdVector(beta, len(hist), margin)


def decide(r: Sequence[float], thresholds: ThresholdVector) -> Decision:
    over = np.abs(np.asarray(r, dtype=float)) > thresholds.beta
    violated = frozenset(int(i) + 1 for i in np.flatnonzero(over))
    return Decision(H1 if violated else H0, violated)


def alarm_stream(
    decisions: Sequence[Optional[Decision]],
    onset: Optional[int] = None,
    start: int = 0,
) -> tuple[list[AlarmEvent], Optional[int]]:
    """Alarm events for every H1 decision, plus the detection delay.

    ``decisions[j]`` belongs to step ``start + j``; ``None`` entries (no
    decision taken) are skipped.  The delay is measured from ``onset`` to the
    first alarm at or after it, and is ``None`` without an onset or alarm.
    """
    events = [
        AlarmEvent(start + j, d.violated)
        for j, d in enumerate(decisions)
        if d is not None and d.alarm
    ]
    delay = None
    if onset is not None:
        later = [e.step for e in events if e.step >= onset]
        if later:
            delay = later[0] - onset
    return events, delay


def save_thresholds(path: str | os.PathLike, thresholds: ThresholdVector) -> None:
    lines = [
        "# residual thresholds",
        f"margin = {thresholds.margin!r}",
        f"calibration_len = {thresholds.calibration_len}",
    ]
    lines += [f"beta.x{i + 1} = {float(b)!r}" for i, b in enumerate(thresholds.beta)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_thresholds(path: str | os.PathLike) -> ThresholdVector:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise CalibrationError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = val.strip()
    try:
        betas = []
        i = 1
        while f"beta.x{i}" in values:
            betas.append(float(values.pop(f"beta.x{i}")))
            i += 1
        thr = ThresholdVector(
            np.array(betas),
            int(values.pop("calibration_len")),
            float(values.pop("margin")),
        )
    except (KeyError, ValueError) as exc:
        raise CalibrationError(f"{path}: malformed threshold file ({exc})") from exc
    if values or not betas:
        raise CalibrationError(f"{path}: unexpected keys {sorted(values)}")
    return thr
