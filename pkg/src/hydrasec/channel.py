"""Framed, sequenced packets between the sensor concentrator and the monitor.

Wire layout, little-endian throughout::

    b"HYD1" | seq:u32 | count:u16 | count * f64 | crc32:u32

The CRC is zlib's CRC-32 (reflected polynomial 0xEDB88320) over every byte
before it.
"""

from __future__ import annotations

import csv
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import signed_permutation as sp
from .errors import CorruptPacketError, StaleSequenceError
from .keystream import PSequenceKey, select_index

__all__ = [
    "MAGIC",
    "Packet",
    "ChannelConfig",
    "coding_matrix",
    "encode",
    "decode",
    "Receiver",
    "Link",
    "CaptureLog",
]

MAGIC = b"HYD1"
_HEADER = struct.Struct("<4sIH")
_CRC = struct.Struct("<I")

Tap = Callable[["Packet"], Optional["Packet"]]


@dataclass(frozen=True)
class Packet:
    seq: int
    payload: tuple[float, ...]
    crc: int

    @classmethod
    def build(cls, seq: int, payload: Sequence[float]) -> Packet:
        """Frame ``payload`` under ``seq`` with a freshly computed CRC."""
        payload = tuple(float(v) for v in payload)
        return cls(seq, payload, zlib.crc32(_body(seq, payload)))

    @property
    def count(self) -> int:
        return len(self.payload)

    def crc_ok(self) -> bool:
        return zlib.crc32(_body(self.seq, self.payload)) == self.crc

    def to_bytes(self) -> bytes:
        return _body(self.seq, self.payload) + _CRC.pack(self.crc)

    @classmethod
    def from_bytes(cls, data: bytes) -> Packet:
        if len(data) < _HEADER.size + _CRC.size:
            raise CorruptPacketError("frame too short")
        magic, seq, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise CorruptPacketError(f"bad magic {magic!r}")
        if len(data) != _HEADER.size + 8 * count + _CRC.size:
            raise CorruptPacketError(f"frame length {len(data)} does not match count {count}")
        payload = struct.unpack_from(f"<{count}d", data, _HEADER.size)
        (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
        return cls(seq, payload, crc)

    def payload_hex(self) -> str:
        return struct.pack(f"<{self.count}d", *self.payload).hex()


def _body(seq: int, payload: Sequence[float]) -> bytes:
    return _HEADER.pack(MAGIC, seq, len(payload)) + struct.pack(f"<{len(payload)}d", *payload)


@dataclass(frozen=True)
class ChannelConfig:
    coding_enabled: bool = True
    key: PSequenceKey = field(default_factory=lambda: PSequenceKey(3, 17))
    loss_probability: float = 0.0
    rng_seed: int = 0
    n: int = 3
    # "full": index over the whole codebook; "ny": index mod n, so only the
    # first n codebook elements are ever used
    selection_modulus: str = "full"

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_probability < 1.0:
            raise ValueError(f"loss_probability must be in [0, 1), got {self.loss_probability}")
        if self.selection_modulus not in ("full", "ny"):
            raise ValueError(f"selection_modulus must be 'full' or 'ny', got {self.selection_modulus!r}")


def coding_matrix(seq: int, cfg: ChannelConfig) -> sp.SignedPermutation:
    """Signed permutation selected for packet ``seq`` under the shared key."""
    size = sp.codebook_size(cfg.n) if cfg.selection_modulus == "full" else cfg.n
    return sp.unrank(select_index(cfg.key, seq, size), cfg.n)


def encode(y, seq: int, cfg: ChannelConfig) -> Packet:
    payload = sp.apply(coding_matrix(seq, cfg), y) if cfg.coding_enabled else np.asarray(y, dtype=float)
    return Packet.build(seq, payload)


def decode(pkt: Packet, cfg: ChannelConfig, last_seq: Optional[int] = None) -> np.ndarray:
    """Check framing and freshness, then undo the coding for ``pkt.seq``."""
    if not pkt.crc_ok():
        raise CorruptPacketError(f"crc mismatch on seq {pkt.seq}")
    if pkt.count != cfg.n:
        raise CorruptPacketError(f"expected {cfg.n} values, got {pkt.count}")
    if last_seq is not None and pkt.seq <= last_seq:
        raise StaleSequenceError(f"seq {pkt.seq} not newer than {last_seq}")
    payload = np.array(pkt.payload, dtype=float)
    if not cfg.coding_enabled:
        return payload
    return sp.apply(sp.inverse(coding_matrix(pkt.seq, cfg)), payload)


class Receiver:
    """Monitor-side decoder enforcing strictly increasing sequence numbers."""

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self.last_seq: Optional[int] = None
        self.corrupt = 0
        self.stale = 0

    @property
    def dropped(self) -> int:
        return self.corrupt + self.stale

    def receive(self, pkt: Packet) -> tuple[Optional[np.ndarray], str]:
        """Return ``(measurement or None, verdict)``."""
        try:
            y = decode(pkt, self.cfg, self.last_seq)
        except CorruptPacketError:
            self.corrupt += 1
            return None, "corrupt"
        except StaleSequenceError:
            self.stale += 1
            return None, "stale"
        self.last_seq = pkt.seq
        return y, "accepted"


class Link:
    """Lossy link with an optional man-in-the-middle hook.

    Loss draws come from a PCG64 stream seeded by ``cfg.rng_seed``.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        ss = np.random.SeedSequence(cfg.rng_seed, spawn_key=(7,))
        self._rng = np.random.Generator(np.random.PCG64(ss))

    def transmit(self, pkt: Packet, tap: Optional[Tap] = None) -> Optional[Packet]:
        # always draw, so the loss pattern does not depend on the tap
        lost = self._rng.random() < self.cfg.loss_probability
        if lost:
            return None
        return tap(pkt) if tap is not None else pkt


class CaptureLog:
    """Per-packet capture rows, written as CSV."""

    COLUMNS = ("step", "direction", "seq", "payload_hex", "verdict", "adversary_action")

    def __init__(self) -> None:
        self.rows: list[tuple] = []

    def record(self, step: int, direction: str, pkt: Optional[Packet], verdict: str, action: str = "") -> None:
        if pkt is None:
            self.rows.append((step, direction, "", "", verdict, action))
        else:
            self.rows.append((step, direction, pkt.seq, pkt.payload_hex(), verdict, action))

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            writer.writerows(self.rows)
