"""Figures of merit of a multi-dimensional mapping.

All distances are squared Euclidean distances in units where the mean
symbol-vector energy is 1. Every metric is an average over the
``mN * 2^{mN}`` (vector, bit position) pairs; the pair partner ``x_hat``
is either the Hamming-1 label partner (``after`` feedback) or the nearest
vector whose label differs in that bit (``before`` feedback).

None of the fast paths touches all 2^{2mN} vector pairs: squared vector
distances are sums of per-symbol squared distances, so partners and
neighbour shells are reached through per-coordinate offset tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from numba import njit

from .channel import CONVENTIONS, snr_to_n0
from .constellation import Constellation2D, distance_set
from .mapping import MdMapping

VARIANTS = ("before", "after")

# SNR reference adopted for the fast-fading metric: Eb/N0 per information
# bit with a rate-1/2 code and unit symbol-vector energy.
DEFAULT_CODE_RATE = 0.5


def _n0_for(convention: str):
    def convert(snr_db, m: int, N: int):
        return snr_to_n0(np.asarray(snr_db, dtype=float), convention, m, N, DEFAULT_CODE_RATE)
    return convert


SNR_CONVENTIONS = {name: _n0_for(name) for name in CONVENTIONS}


@dataclass
class MappingMetrics:
    n_min: float
    d_hat_min_sq: float
    phi_br_before: float
    phi_br_after: float
    distances: np.ndarray = field(repr=False)
    n_spectrum_before: np.ndarray = field(repr=False)
    n_spectrum_after: np.ndarray = field(repr=False)
    phi_fr: dict = field(default_factory=dict)
    snr_convention: str = "per-info-bit"


# -- shared geometry -------------------------------------------------------


def _const(mapping: MdMapping, const: Constellation2D | None) -> Constellation2D:
    return const if const is not None else mapping.constellation()


def _index(mapping: MdMapping) -> np.ndarray:
    return mapping.table - 1


def _partner_labels(mapping: MdMapping) -> np.ndarray:
    """(L, mN) array: label with bit i (MSB first) flipped."""
    n = mapping.bits
    labels = np.arange(mapping.size)
    masks = 1 << np.arange(n - 1, -1, -1)
    return labels[:, None] ^ masks[None, :]


def pair_coordinate_distances(mapping: MdMapping, const: Constellation2D | None = None) -> np.ndarray:
    """(L, mN, N) per-symbol squared distances to each Hamming-1 partner."""
    c = _const(mapping, const)
    J = _index(mapping)
    P = _partner_labels(mapping)
    return c.sq_dist[J[:, None, :], J[P]]


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out += (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return out


@lru_cache(maxsize=None)
def _distance_classes(m: int, scale: float):
    """Per-symbol neighbour tables grouped by exact squared distance.

    Returns (values, tables) where ``tables[c][j]`` lists the symbols at
    squared distance ``values[c]`` from symbol j, padded with -1.
    """
    from .constellation import build_qam

    c = build_qam(m, 1).rescaled(1.0)
    grid_d = np.rint(np.abs(c.coords[:, None] - c.coords[None, :]) ** 2).astype(np.int64)
    values = np.unique(grid_d)
    tables = []
    for v in values:
        rows = [np.flatnonzero(grid_d[j] == v) for j in range(c.order)]
        width = max(len(r) for r in rows)
        t = -np.ones((c.order, width), dtype=np.int64)
        for j, r in enumerate(rows):
            t[j, :len(r)] = r
        tables.append(t)
    return values, tables


# -- N_min -------------------------------------------------------------------


def n_min(mapping: MdMapping, const: Constellation2D | None = None) -> float:
    """Average Hamming distance between labels of nearest-neighbour vectors.

    Equivalently the bit-averaged count ``sum_{x,i} N(x, i)`` normalized by
    the number of ordered pairs of vectors at the minimum distance.
    """
    hamming, pairs = _min_distance_neighbours(mapping)
    return hamming / pairs


def _min_distance_neighbours(mapping: MdMapping) -> tuple[int, int]:
    values, tables = _distance_classes(mapping.m, 1.0)
    nb = tables[1]  # smallest nonzero 2-D distance
    J = _index(mapping)
    M = 1 << mapping.m
    codes = mapping.vector_codes
    inv = mapping.inverse
    labels = np.arange(mapping.size)
    total = 0
    count = 0
    for k in range(mapping.N):
        w = M ** (mapping.N - 1 - k)
        cand = nb[J[:, k]]  # (L, K)
        valid = cand >= 0
        ycodes = codes[:, None] + (cand - J[:, k][:, None]) * w
        ylab = inv[np.where(valid, ycodes, 0)]
        ham = _popcount(labels[:, None] ^ ylab)
        total += int(ham[valid].sum())
        count += int(valid.sum())
    return total, count


def bit_neighbour_counts(mapping: MdMapping) -> np.ndarray:
    """(L, mN) matrix N(x, i): minimum-distance neighbours of x differing in bit i."""
    values, tables = _distance_classes(mapping.m, 1.0)
    nb = tables[1]
    J = _index(mapping)
    M = 1 << mapping.m
    codes = mapping.vector_codes
    inv = mapping.inverse
    labels = np.arange(mapping.size)
    shifts = np.arange(mapping.bits - 1, -1, -1)
    out = np.zeros((mapping.size, mapping.bits), dtype=np.int64)
    for k in range(mapping.N):
        w = M ** (mapping.N - 1 - k)
        cand = nb[J[:, k]]
        valid = cand >= 0
        ylab = inv[np.where(valid, codes[:, None] + (cand - J[:, k][:, None]) * w, 0)]
        diff = ((labels[:, None] ^ ylab)[:, :, None] >> shifts) & 1
        out += (diff * valid[:, :, None]).sum(axis=1)
    return out


# -- after-feedback (Hamming-1 partner) metrics ------------------------------


def d_hat_min_sq(mapping: MdMapping, const: Constellation2D | None = None) -> float:
    """Minimum squared distance between vectors whose labels differ in one bit."""
    return float(pair_coordinate_distances(mapping, const).sum(-1).min())


def harmonic_after(mapping: MdMapping, const: Constellation2D | None = None) -> float:
    d = pair_coordinate_distances(mapping, const).sum(-1)
    return float(1.0 / np.mean(1.0 / d))


# -- before-feedback (nearest vector in the complementary subset) -----------


def _shell_groups(m: int, N: int):
    """Per-coordinate distance-class tuples grouped by total grid distance, ascending."""
    values, _ = _distance_classes(m, 1.0)
    groups: dict[int, list[tuple[int, ...]]] = {}
    for t in product(range(len(values)), repeat=N):
        tot = int(sum(values[c] for c in t))
        if tot:
            groups.setdefault(tot, []).append(t)
    return [(tot, groups[tot]) for tot in sorted(groups)]


def _flat_shells(m: int, N: int):
    groups = _shell_groups(m, N)
    tuples = np.array([t for _, ts in groups for t in ts], dtype=np.int64)
    starts = np.cumsum([0] + [len(ts) for _, ts in groups]).astype(np.int64)
    totals = np.array([tot for tot, _ in groups], dtype=np.int64)
    return tuples, starts, totals


@njit(cache=True)
def _nearest_complement_kernel(J, codes, inv, weights, cls_tables, tuples, starts, totals,
                               cls_terms, nbits):
    L, N = J.shape
    n_terms = cls_terms.shape[0]
    full = (1 << nbits) - 1
    dist = np.zeros((L, nbits), dtype=np.int64)
    terms = np.zeros((n_terms, L, nbits))
    best = np.zeros((n_terms, nbits))
    cand = np.empty(N, dtype=np.int64)
    counts = np.empty(N, dtype=np.int64)
    odo = np.empty(N, dtype=np.int64)
    for x in range(L):
        acc = 0
        for g in range(totals.size):
            gmask = 0
            best[:, :] = 0.0
            for t in range(starts[g], starts[g + 1]):
                ok = True
                for k in range(N):
                    c = tuples[t, k]
                    row = cls_tables[c, J[x, k]]
                    n = 0
                    while n < row.size and row[n] >= 0:
                        n += 1
                    if n == 0:
                        ok = False
                        break
                    counts[k] = n
                    odo[k] = 0
                if not ok:
                    continue
                tmask = 0
                while True:
                    code = 0
                    for k in range(N):
                        cand[k] = cls_tables[tuples[t, k], J[x, k], odo[k]]
                        code += cand[k] * weights[k]
                    tmask |= x ^ inv[code]
                    k = N - 1
                    while k >= 0:
                        odo[k] += 1
                        if odo[k] < counts[k]:
                            break
                        odo[k] = 0
                        k -= 1
                    if k < 0:
                        break
                gmask |= tmask
                for s in range(n_terms):
                    term = 1.0
                    for k in range(N):
                        term *= cls_terms[s, tuples[t, k]]
                    for b in range(nbits):
                        if (tmask >> (nbits - 1 - b)) & 1 and term > best[s, b]:
                            best[s, b] = term
            new = gmask & ~acc
            if new:
                for b in range(nbits):
                    if (new >> (nbits - 1 - b)) & 1:
                        dist[x, b] = totals[g]
                        for s in range(n_terms):
                            terms[s, x, b] = best[s, b]
                acc |= new
                if acc == full:
                    break
    return dist, terms


def nearest_complement(mapping: MdMapping, n0=None):
    """Nearest vector whose label differs in bit i, for every (x, i).

    Returns ``(dist, terms)``: squared distances (L, mN) and, if ``n0`` is
    given, the fast-fading pair terms ``prod_k (1 + d_k^2/4N0)^-1`` with
    shape (len(n0), L, mN). Among equally near partners the largest term
    (the distance profile most concentrated on one symbol) is kept.

    Shells of increasing distance are walked per vector through
    per-coordinate distance classes, stopping once every bit is resolved.
    """
    values, tables = _distance_classes(mapping.m, 1.0)
    width = max(t.shape[1] for t in tables)
    cls_tables = -np.ones((len(tables), 1 << mapping.m, width), dtype=np.int64)
    for c, t in enumerate(tables):
        cls_tables[c, :, :t.shape[1]] = t
    unit = mapping.constellation().scale ** 2
    tuples, starts, totals = _flat_shells(mapping.m, mapping.N)
    weights = (1 << mapping.m) ** np.arange(mapping.N - 1, -1, -1)
    n0s = np.zeros(0) if n0 is None else np.atleast_1d(np.asarray(n0, dtype=float))
    cls_terms = 1.0 / (1.0 + values[None, :] * unit / (4.0 * n0s[:, None]))
    dist, terms = _nearest_complement_kernel(
        np.ascontiguousarray(_index(mapping)), mapping.vector_codes, mapping.inverse,
        weights.astype(np.int64), cls_tables, tuples, starts, totals, cls_terms, mapping.bits)
    return dist * unit, (None if n0 is None else terms)


def harmonic_before(mapping: MdMapping, const: Constellation2D | None = None) -> float:
    dist, _ = nearest_complement(mapping)
    if const is not None:
        dist = dist * (const.scale / mapping.constellation().scale) ** 2
    return float(1.0 / np.mean(1.0 / dist))


# -- spectra -------------------------------------------------------------------


def _spectrum(dists: np.ndarray, dset: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(dset, dists.ravel() - 1e-9)
    if np.any(idx >= dset.size) or not np.allclose(dset[idx], dists.ravel(), atol=1e-9):
        raise AssertionError("distance outside the attainable distance set")
    return np.bincount(idx, minlength=dset.size)


def n_spectrum(mapping: MdMapping, const: Constellation2D | None = None, variant: str = "before"):
    """Counts n_i of (x, i) pairs whose partner lies at the i-th attainable distance.

    Returns ``(squared_distances, counts)``.
    """
    c = _const(mapping, const)
    dset = distance_set(c, mapping.N)
    if variant == "after":
        d = pair_coordinate_distances(mapping, c).sum(-1)
    elif variant == "before":
        d, _ = nearest_complement(mapping)
        d = d * (c.scale / mapping.constellation().scale) ** 2
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return dset, _spectrum(d, dset)


def harmonic_from_spectrum(dset: np.ndarray, counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(counts.sum() / np.sum(counts / dset))


# -- fast fading -------------------------------------------------------------


def phi_fast(mapping: MdMapping, n0, variant: str = "after", const: Constellation2D | None = None):
    """Fast-fading figure of merit at noise level(s) ``n0``."""
    n0 = np.asarray(n0, dtype=float)
    if np.any(n0 <= 0):
        raise ValueError("N0 must be positive")
    flat = np.atleast_1d(n0)
    if variant == "after":
        d = pair_coordinate_distances(mapping, const)  # (L, n, N)
        terms = np.stack([np.prod(1.0 / (1.0 + d / (4.0 * v)), axis=-1) for v in flat])
    elif variant == "before":
        if const is not None and not np.isclose(const.scale, mapping.constellation().scale):
            raise ValueError("before-feedback fast-fading metric uses the native normalization")
        _, terms = nearest_complement(mapping, flat)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    out = 1.0 / terms.reshape(len(flat), -1).mean(axis=1)
    return float(out[0]) if n0.ndim == 0 else out


def calibrate_snr_convention(mapping: MdMapping, snr_db: float, target: float, rel_tol: float = 0.01):
    """Evaluate the fast-fading metric under every SNR reference and feedback variant.

    Returns a list of rows ``(convention, variant, value, rel_error, match)``.
    """
    rows = []
    for name, fn in SNR_CONVENTIONS.items():
        n0 = float(fn(snr_db, mapping.m, mapping.N))
        for variant in VARIANTS:
            v = phi_fast(mapping, n0, variant)
            err = abs(v - target) / target
            rows.append((name, variant, v, err, err <= rel_tol))
    return rows


def compute_metrics(mapping: MdMapping, snrs_db=(2.0, 10.0), convention: str = "per-info-bit") -> MappingMetrics:
    c = mapping.constellation()
    dset = distance_set(c, mapping.N)
    after = pair_coordinate_distances(mapping, c)
    after_tot = after.sum(-1)
    n0 = SNR_CONVENTIONS[convention](np.asarray(snrs_db, dtype=float), mapping.m, mapping.N)
    before_d, before_terms = nearest_complement(mapping, n0)
    phi = {}
    for s, v, bt in zip(snrs_db, np.atleast_1d(n0), before_terms):
        t_after = np.prod(1.0 / (1.0 + after / (4.0 * v)), axis=-1)
        phi[float(s)] = {"after": float(1.0 / t_after.mean()), "before": float(1.0 / bt.mean())}
    return MappingMetrics(
        n_min=n_min(mapping),
        d_hat_min_sq=float(after_tot.min()),
        phi_br_before=float(1.0 / np.mean(1.0 / before_d)),
        phi_br_after=float(1.0 / np.mean(1.0 / after_tot)),
        distances=dset,
        n_spectrum_before=_spectrum(before_d, dset),
        n_spectrum_after=_spectrum(after_tot, dset),
        phi_fr=phi,
        snr_convention=convention,
    )
