"""Man-in-the-middle on the sensor link: wait for steady state, then replay.

The adversary watches the uncoded actuator commands to spot steady state,
keeps a ring buffer of the last ``record_len`` sensor packets it forwarded,
and once the attack starts substitutes recorded data for live data.  It never
holds key material, so it cannot re-code what it injects.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import Packet
from .plant import ActuatorInput

__all__ = [
    "MODES",
    "AttackConfig",
    "RecorderBuffer",
    "detect_steady_state",
    "replay_intercept",
    "ReplayAdversary",
]

MODES = ("none", "replay_payload", "replay_packet", "bias_injection")


@dataclass(frozen=True)
class AttackConfig:
    mode: str = "replay_payload"
    steady_window: int = 50
    steady_epsilon: float = 1e-3
    bias: Optional[tuple[float, ...]] = None
    record_len: int = 100

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}; expected one of {MODES}")
        if self.steady_window < 1:
            raise ValueError("steady_window must be >= 1")
        if self.steady_epsilon < 0:
            raise ValueError("steady_epsilon must be >= 0")
        if self.record_len < 1:
            raise ValueError("record_len must be >= 1")
        if self.mode == "bias_injection" and self.bias is None:
            raise ValueError("bias_injection needs a bias vector")


@dataclass(frozen=True)
class RecorderBuffer:
    packets: tuple[Packet, ...]
    onset_seq: int

    def __post_init__(self) -> None:
        if not self.packets:
            raise ValueError("recorder buffer is empty")


def _command(u) -> np.ndarray:
    return u.as_array() if isinstance(u, ActuatorInput) else np.asarray(u, dtype=float)


def detect_steady_state(actuator_stream: Sequence, cfg: AttackConfig) -> Optional[int]:
    """First step ``t`` whose preceding ``W`` commands all lie within ``epsilon``.

    Commands ``[t-W, t)`` must each have a per-component spread (max - min)
    of at most ``steady_epsilon``; ``t`` is the first packet the adversary
    may replace.
    """
    W = cfg.steady_window
    cmds = np.array([_command(u) for u in actuator_stream])
    for t in range(W, len(cmds) + 1):
        window = cmds[t - W:t]
        if np.all(window.max(axis=0) - window.min(axis=0) <= cfg.steady_epsilon):
            return t
    return None


def replay_intercept(pkt: Packet, buffer: RecorderBuffer, cfg: AttackConfig) -> Packet:
    """Packet the adversary forwards in place of ``pkt`` once the attack is on."""
    if cfg.mode == "replay_payload":
        rec = buffer.packets[(pkt.seq - buffer.onset_seq) % len(buffer.packets)]
        return Packet.build(pkt.seq, rec.payload)
    if cfg.mode == "replay_packet":
        return buffer.packets[(pkt.seq - buffer.onset_seq) % len(buffer.packets)]
    if cfg.mode == "bias_injection":
        return Packet.build(pkt.seq, np.add(pkt.payload, cfg.bias))
    return pkt


class ReplayAdversary:
    """Stateful interceptor suitable as a :class:`~hydrasec.channel.Link` tap.

    Call :meth:`observe_command` with each actuator command as it crosses the
    actuator link; set :attr:`armed` to allow the attack to start.
    """

    def __init__(self, cfg: AttackConfig):
        self.cfg = cfg
        self.armed = False
        self.onset: Optional[int] = None
        self.buffer: Optional[RecorderBuffer] = None
        self.last_action = ""
        self._commands: deque = deque(maxlen=cfg.steady_window)
        self._recent: deque = deque(maxlen=cfg.record_len)

    @property
    def active(self) -> bool:
        return self.buffer is not None

    def observe_command(self, u) -> None:
        self._commands.append(_command(u))

    def _steady(self) -> bool:
        if len(self._commands) < self.cfg.steady_window:
            return False
        return detect_steady_state(list(self._commands), self.cfg) is not None

    def __call__(self, pkt: Packet) -> Packet:
        if self.cfg.mode == "none":
            self.last_action = ""
            return pkt
        if not self.active and self.armed and self._recent and self._steady():
            self.onset = pkt.seq
            self.buffer = RecorderBuffer(tuple(self._recent), pkt.seq)
        if not self.active:
            self._recent.append(pkt)
            self.last_action = ""
            return pkt
        self.last_action = self.cfg.mode
        return replay_intercept(pkt, self.buffer, self.cfg)
