"""Multi-scale lattices D_0 ... D_H.

Level ``h+1`` keeps every ``k``-th point of level ``h`` along each axis,
starting at offset 0, so ``|D_h| = q**h * |D_0|`` with ``q = 1/k`` (1D) or
``q = 1/k**2`` (2D).  Cells are addressed by integer tuples (one entry per
axis); ``flat`` indices are row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt, prod
from typing import Iterator, Sequence, Union

import numpy as np

Cell = tuple[int, ...]
Rational = Union[Fraction, int, float, str]


class LatticeError(ValueError):
    pass


class InvalidScale(LatticeError):
    pass


class NonDivisibleExtent(LatticeError):
    pass


class IndexOutOfRange(LatticeError, IndexError):
    pass


def as_fraction(q: Rational) -> Fraction:
    if isinstance(q, float):
        return Fraction(q).limit_denominator(10**6)
    return Fraction(q)


def stride_for(q: Rational, ndim: int) -> int:
    """Per-axis stride ``k`` implied by ``q``; raises if ``q`` has no such root."""
    q = as_fraction(q)
    if not 0 < q < 1:
        raise InvalidScale(f"scale factor q={q} must lie in (0, 1)")
    if q.numerator != 1:
        raise NonDivisibleExtent(f"q={q} is not of the form 1/k**{ndim}")
    den = q.denominator
    if ndim == 1:
        return den
    k = isqrt(den)
    if k * k != den:
        raise NonDivisibleExtent(f"q={q} is not 1/k**2 for an integer k; 2D lattices need square strides")
    return k


@dataclass(frozen=True)
class LatticeHierarchy:
    base_extent: tuple[int, ...]
    q: Fraction
    H: int
    k: int = field(init=False)
    level_extents: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        base = tuple(int(n) for n in self.base_extent)
        object.__setattr__(self, "base_extent", base)
        object.__setattr__(self, "q", as_fraction(self.q))
        if len(base) not in (1, 2) or any(n < 1 for n in base):
            raise LatticeError(f"base extent must be 1D or 2D with positive sides, got {base}")
        if self.H < 1:
            raise LatticeError(f"H must be >= 1, got {self.H}")
        k = stride_for(self.q, len(base))
        extents = [base]
        for h in range(1, self.H + 1):
            prev = extents[-1]
            if any(n % k for n in prev):
                raise NonDivisibleExtent(
                    f"level {h}: extent {prev} not divisible by stride {k} (q={self.q})")
            extents.append(tuple(n // k for n in prev))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "level_extents", tuple(extents))

    @property
    def ndim(self) -> int:
        return len(self.base_extent)

    def size(self, h: int) -> int:
        return prod(self.level_extents[h])

    @property
    def sizes(self) -> list[int]:
        return [self.size(h) for h in range(self.H + 1)]

    def stride(self, h: int) -> int:
        """Spacing of level-h points measured in D_0 cells."""
        return self.k ** h

    def contains(self, h: int, cell: Sequence[int]) -> bool:
        ext = self.level_extents[h]
        return len(cell) == len(ext) and all(0 <= c < n for c, n in zip(cell, ext))

    def enumerate_level(self, h: int) -> Iterator[Cell]:
        """Cells of level h in row-major order."""
        yield from np.ndindex(*self.level_extents[h])

    def flat(self, h: int, cell: Sequence[int]) -> int:
        if not self.contains(h, cell):
            raise IndexOutOfRange(f"cell {tuple(cell)} outside level {h} extent {self.level_extents[h]}")
        return int(np.ravel_multi_index(tuple(cell), self.level_extents[h]))

    def unflat(self, h: int, index: int) -> Cell:
        if not 0 <= index < self.size(h):
            raise IndexOutOfRange(f"flat index {index} outside level {h} (size {self.size(h)})")
        return tuple(int(i) for i in np.unravel_index(index, self.level_extents[h]))

    def to_base_coords(self, h: int, cell: Sequence[int] | int) -> Cell:
        if isinstance(cell, (int, np.integer)):
            cell = self.unflat(h, int(cell))
        if not self.contains(h, cell):
            raise IndexOutOfRange(f"cell {tuple(cell)} outside level {h} extent {self.level_extents[h]}")
        s = self.stride(h)
        return tuple(c * s for c in cell)

    def snap_to_level(self, coord: Sequence[int], h: int) -> Cell:
        """Nearest level-h cell to a D_0 coordinate, ties toward the smaller index.

        The grid is a product of 1D grids, so the Euclidean nearest point is
        the per-axis nearest point and the row-major tie-break is per-axis too.
        """
        s = self.stride(h)
        out = []
        for c, n in zip(coord, self.level_extents[h]):
            # ceil(c/s - 1/2): round half down
            i = -((s - 2 * c) // (2 * s))
            out.append(min(max(i, 0), n - 1))
        return tuple(out)


def build_hierarchy(base_extent: int | Sequence[int], q: Rational, H: int) -> LatticeHierarchy:
    if isinstance(base_extent, (int, np.integer)):
        base_extent = (int(base_extent),)
    return LatticeHierarchy(tuple(base_extent), as_fraction(q), int(H))


def round_half_down(x: Fraction) -> int:
    """Nearest integer, ties toward -inf; commutes with integer shifts."""
    return -((-2 * x.numerator + x.denominator) // (2 * x.denominator))
