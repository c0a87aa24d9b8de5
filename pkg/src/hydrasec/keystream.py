"""Fibonacci p-sequences reduced modulo ``m`` and per-packet codebook selection.

``F_p(n) = 0`` for ``n < 0``, ``F_p(0) = 1`` and
``F_p(n) = F_p(n-1) + F_p(n-p-1)`` otherwise.  ``p = 1`` gives the ordinary
Fibonacci numbers; ``p = 0`` gives powers of two.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import InvalidModulusError, NotPurelyPeriodicError

__all__ = ["PSequenceKey", "fib_p_mod", "period", "select_index"]

# Upper bound on the cycle search used to shorten select_index evaluations.
_FAST_PERIOD_SEARCH_LIMIT = 1_000_000


@dataclass(frozen=True)
class PSequenceKey:
    """Shared secret: sequence parameter ``p`` and an index offset ``seed``."""

    p: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.p < 0 or self.seed < 0:
            raise ValueError(f"key fields must be non-negative, got p={self.p}, seed={self.seed}")


def _check_modulus(m: int) -> None:
    if m < 2:
        raise InvalidModulusError(f"modulus must be >= 2, got {m}")


def fib_p_mod(p: int, n: int, m: int) -> int:
    """``F_p(n) mod m`` using a sliding window of ``p + 1`` residues."""
    _check_modulus(m)
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    if n < 0:
        return 0
    # window[j] holds F_p(k - p + j) for the current k; negative indices are 0
    window = [0] * p + [1 % m]
    head = 0  # position of the oldest entry, F_p(k - p)
    for _ in range(n):
        new = (window[(head + p) % (p + 1)] + window[head]) % m
        window[head] = new
        head = (head + 1) % (p + 1)
    return window[(head + p) % (p + 1)]


def _cycle_length(p: int, m: int, limit: int) -> int | None:
    start = tuple([0] * p + [1 % m])
    state = list(start)
    for steps in range(1, limit + 1):
        state.append((state[-1] + state[0]) % m)
        del state[0]
        if tuple(state) == start:
            return steps
    return None


def period(p: int, m: int) -> int:
    """Smallest ``L > 0`` with ``F_p(n + L) = F_p(n) (mod m)`` for all ``n >= 0``.

    The cycle is detected on the state ``(F_p(n-p), ..., F_p(n))`` returning to
    its value at ``n = 0``.  Raises :class:`NotPurelyPeriodicError` when that
    never happens within ``m**(p+1) + 1`` steps (e.g. ``p = 0`` with even ``m``).
    """
    _check_modulus(m)
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    limit = m ** (p + 1) + 1
    found = _cycle_length(p, m, limit)
    if found is None:
        raise NotPurelyPeriodicError(f"F_{p} mod {m} never returns to its initial state")
    return found


@lru_cache(maxsize=64)
def _fast_period(p: int, m: int) -> int | None:
    return _cycle_length(p, m, min(m ** (p + 1) + 1, _FAST_PERIOD_SEARCH_LIMIT))


def select_index(key: PSequenceKey, seq: int, codebook_size: int) -> int:
    """Codebook index for packet ``seq``: ``F_p(seed + seq) mod codebook_size``.

    Stateless in ``seq``, so a receiver that misses packets stays in sync.
    """
    if codebook_size < 1:
        raise InvalidModulusError(f"codebook size must be >= 1, got {codebook_size}")
    if codebook_size == 1:
        return 0
    n = key.seed + seq
    cycle = _fast_period(key.p, codebook_size)
    if cycle is not None:
        n %= cycle
    return fib_p_mod(key.p, n, codebook_size)
