"""Square QAM and QPSK geometry with position-index conventions.

Position-indexes are 1-based and run left to right within a row, rows top
to bottom, so ``S1`` is the upper-left corner of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SUPPORTED_BITS = (2, 4, 6)


@dataclass(frozen=True)
class Constellation2D:
    """A square 2^m-ary constellation scaled so one N-symbol vector has unit energy.

    Attributes
    ----------
    order : int
        Number of points M.
    coords : ndarray of complex
        Unnormalized odd-integer grid points, ``coords[j - 1]`` is ``S_j``.
    scale : float
        Multiplier applied to ``coords``.
    dims_per_vector : int
        Symbols per vector N used for the energy normalization.
    """

    order: int
    coords: np.ndarray = field(repr=False)
    scale: float
    dims_per_vector: int

    @property
    def bits(self) -> int:
        return int(np.log2(self.order))

    @cached_property
    def points(self) -> np.ndarray:
        """Scaled points, 0-based (``points[j - 1]`` is ``S_j``)."""
        pts = self.coords * self.scale
        pts.setflags(write=False)
        return pts

    @cached_property
    def grid_sq_dist(self) -> np.ndarray:
        """M x M table of exact integer squared distances on the unscaled grid."""
        x = np.rint(self.coords.real).astype(np.int64)
        y = np.rint(self.coords.imag).astype(np.int64)
        d = (x[:, None] - x[None, :]) ** 2 + (y[:, None] - y[None, :]) ** 2
        d.setflags(write=False)
        return d

    @cached_property
    def sq_dist(self) -> np.ndarray:
        """M x M table of squared distances between scaled points."""
        d = self.grid_sq_dist * self.scale ** 2
        d.setflags(write=False)
        return d

    @property
    def d1_sq(self) -> float:
        """Squared minimum distance between two distinct points."""
        d = self.sq_dist
        return float(d[d > 1e-12].min())

    def symbol(self, j: int) -> complex:
        """Scaled point with 1-based position-index ``j``."""
        if not 1 <= j <= self.order:
            raise IndexError(f"position-index {j} outside 1..{self.order}")
        return complex(self.points[j - 1])

    def rescaled(self, factor: float) -> "Constellation2D":
        return Constellation2D(self.order, self.coords, self.scale * factor, self.dims_per_vector)


def _grid(side: int) -> np.ndarray:
    levels = np.arange(-(side - 1), side, 2)
    # row r is at imag = +(side-1) - 2r; column c at real = -(side-1) + 2c
    re = np.tile(levels, side)
    im = np.repeat(levels[::-1], side)
    return re + 1j * im


def build_qam(m: int, N: int = 1) -> Constellation2D:
    """Square 2^m-QAM (m=2 gives the 4-point square QPSK) normalized for N-symbol vectors."""
    if m not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bits per symbol m={m}; expected one of {SUPPORTED_BITS}")
    if N < 1:
        raise ValueError("N must be >= 1")
    side = 1 << (m // 2)
    coords = _grid(side)
    e_grid = float(np.mean(np.abs(coords) ** 2))
    return Constellation2D(1 << m, coords, 1.0 / np.sqrt(e_grid * N), N)


# QPSK reference P_k = exp(j*pi*k/2), k = 1..4 (unnormalized, index-based use only)
QPSK_REF = np.exp(1j * np.pi * np.arange(1, 5) / 2)


def qpsk_reference() -> np.ndarray:
    """The four reference QPSK points P1..P4, rounded to exact axis values."""
    return np.round(QPSK_REF.real) + 1j * np.round(QPSK_REF.imag)


def distance_set(const: Constellation2D, N: int) -> np.ndarray:
    """Sorted distinct squared distances between vectors of ``const^N``.

    Squared vector distance is a sum of per-symbol squared distances, so the
    set is all N-fold sums of the 2-D set (including zeros), minus zero.
    """
    base = np.unique(const.grid_sq_dist)
    sums = np.zeros(1, dtype=np.int64)
    for _ in range(N):
        sums = np.unique(sums[:, None] + base[None, :])
    return sums[sums > 0] * const.scale ** 2


def distance_profiles(const: Constellation2D, N: int) -> list[tuple[float, ...]]:
    """Distinct unordered per-symbol squared-distance tuples between vectors of ``const^N``.

    Unlike :func:`distance_set`, profiles with equal totals stay apart, e.g.
    (0, 4) and (2, 2) for unit-spaced QPSK. This is the count that gives 2
    classes for 2-D and 5 for 4-D QPSK.
    """
    from itertools import combinations_with_replacement

    base = np.unique(const.grid_sq_dist) * const.scale ** 2
    profiles = {tuple(sorted(c)) for c in combinations_with_replacement(base.tolist(), N)}
    profiles.discard((0.0,) * N)
    return sorted(profiles, key=lambda p: (sum(p), p))
