"""Signed permutations of ``n`` elements (the hyperoctahedral group B_n).

An element is stored in compact one-line form: ``perm[i]`` is the input
position read by output position ``i`` and ``signs[i]`` the factor applied to
it, so that ``apply(sp, v)[i] == signs[i] * v[perm[i]]``.  The equivalent
matrix ``M`` has ``M[i, perm[i]] = signs[i]`` and zeros elsewhere.

Codebook order: ``index = lexrank(perm) * 2**n + mask`` where bit ``i`` of the
mask, read most-significant-first, is set when ``signs[i] == -1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    IndexRangeError,
    InvalidDimensionError,
    InvalidElementError,
)

__all__ = [
    "SignedPermutation",
    "codebook_size",
    "unrank",
    "rank",
    "apply",
    "inverse",
    "compose",
    "codebook",
]


@dataclass(frozen=True)
class SignedPermutation:
    perm: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self) -> None:
        perm = tuple(int(i) for i in self.perm)
        signs = tuple(int(s) for s in self.signs)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", signs)
        n = len(perm)
        if n == 0:
            raise InvalidDimensionError("signed permutation must have n >= 1")
        if len(signs) != n:
            raise InvalidElementError(f"expected {n} signs, got {len(signs)}")
        if sorted(perm) != list(range(n)):
            raise InvalidElementError(f"{perm} is not a permutation of range({n})")
        if any(s not in (1, -1) for s in signs):
            raise InvalidElementError(f"signs must be +1/-1, got {signs}")

    @classmethod
    def identity(cls, n: int) -> SignedPermutation:
        return cls(tuple(range(n)), (1,) * n)

    @property
    def n(self) -> int:
        return len(self.perm)

    def __len__(self) -> int:
        return len(self.perm)

    def __call__(self, v):
        return apply(self, v)

    def __matmul__(self, other: SignedPermutation) -> SignedPermutation:
        return compose(self, other)


def codebook_size(n: int) -> int:
    """Number of signed permutations of ``n`` elements, ``2**n * n!``."""
    if n < 1:
        raise InvalidDimensionError(f"n must be >= 1, got {n}")
    return (1 << n) * factorial(n)


def _lehmer_rank(perm: Sequence[int]) -> int:
    n = len(perm)
    rank_ = 0
    remaining = list(range(n))
    for i, p in enumerate(perm):
        pos = remaining.index(p)
        rank_ += pos * factorial(n - 1 - i)
        remaining.pop(pos)
    return rank_


def _lehmer_unrank(index: int, n: int) -> tuple[int, ...]:
    remaining = list(range(n))
    out = []
    for i in range(n):
        f = factorial(n - 1 - i)
        pos, index = divmod(index, f)
        out.append(remaining.pop(pos))
    return tuple(out)


def unrank(index: int, n: int) -> SignedPermutation:
    """Return the ``index``-th signed permutation in codebook order."""
    size = codebook_size(n)
    if not 0 <= index < size:
        raise IndexRangeError(f"index {index} outside [0, {size}) for n={n}")
    perm_rank, mask = divmod(index, 1 << n)
    signs = tuple(-1 if (mask >> (n - 1 - i)) & 1 else 1 for i in range(n))
    return SignedPermutation(_lehmer_unrank(perm_rank, n), signs)


def rank(sp: SignedPermutation) -> int:
    """Inverse of :func:`unrank`."""
    if not isinstance(sp, SignedPermutation):
        raise InvalidElementError(f"expected SignedPermutation, got {type(sp).__name__}")
    n = sp.n
    mask = 0
    for s in sp.signs:
        mask = (mask << 1) | (s < 0)
    return _lehmer_rank(sp.perm) * (1 << n) + mask


def apply(sp: SignedPermutation, v) -> np.ndarray:
    """Reorder and sign-flip ``v``; exact, since only negation is involved."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (sp.n,):
        raise DimensionMismatchError(f"vector of shape {v.shape} for n={sp.n}")
    out = v[list(sp.perm)]
    neg = [i for i, s in enumerate(sp.signs) if s < 0]
    out[neg] = np.negative(out[neg])
    return out


def inverse(sp: SignedPermutation) -> SignedPermutation:
    n = sp.n
    perm = [0] * n
    signs = [1] * n
    for i, (p, s) in enumerate(zip(sp.perm, sp.signs)):
        perm[p] = i
        signs[p] = s
    return SignedPermutation(tuple(perm), tuple(signs))


def compose(a: SignedPermutation, b: SignedPermutation) -> SignedPermutation:
    """Product ``a @ b``: apply ``b`` first, then ``a``."""
    if a.n != b.n:
        raise DimensionMismatchError(f"cannot compose sizes {a.n} and {b.n}")
    perm = tuple(b.perm[p] for p in a.perm)
    signs = tuple(s * b.signs[p] for s, p in zip(a.signs, a.perm))
    return SignedPermutation(perm, signs)


def codebook(n: int) -> Iterator[SignedPermutation]:
    """Iterate the whole sorted codebook; only sensible for small ``n``."""
    for i in range(codebook_size(n)):
        yield unrank(i, n)
