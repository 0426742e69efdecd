"""Soft MAP demapping of multi-dimensional symbol-vectors.

For each received vector every one of the 2^{mN} labels is scored as

    metric(l) = -||y - h * x(l)||^2 / N0 + sum_j (1 - 2 l_j) La_j / 2

and the extrinsic LLR of bit i is the log-sum of exp(metric) over labels
with l_i = 0 minus that over l_i = 1, minus La_i. The channel part is a sum
of N per-symbol terms, so each vector only needs N tables of 2^m squared
distances.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .fec import LLR_CLAMP
from .mapping import MdMapping

_UNDERFLOW = 1e-290


@njit(cache=True)
def _demap_kernel(y, h, n0, la, J, pts, nbits, max_log):
    V, N = y.shape
    L = J.shape[0]
    M = pts.size
    out = np.empty((V, nbits))
    dist = np.empty((N, M))
    total = np.empty(L)
    s = np.empty((nbits, 2))
    mx = np.empty((nbits, 2))
    n_groups = (nbits + 3) // 4
    ap_tab = np.empty((n_groups, 16))
    low = nbits // 2
    low_mask = (1 << low) - 1
    rows = np.empty(1 << (nbits - low))
    cols = np.empty(1 << low)
    for v in range(V):
        for k in range(N):
            for q in range(M):
                d = y[v, k] - h[v, k] * pts[q]
                dist[k, q] = (d.real * d.real + d.imag * d.imag) / n0
        # a-priori term per 4-bit group of the label
        for g in range(n_groups):
            width = min(4, nbits - 4 * g)
            for c in range(1 << width):
                acc = 0.0
                for b in range(width):
                    bit = (c >> b) & 1
                    pos = nbits - 1 - (4 * g + b)  # MSB-first index of this bit
                    acc += 0.5 * la[v, pos] * (1 - 2 * bit)
                ap_tab[g, c] = acc
        top = -np.inf
        for l in range(L):
            t = 0.0
            for k in range(N):
                t -= dist[k, J[l, k]]
            for g in range(n_groups):
                t += ap_tab[g, (l >> (4 * g)) & 15]
            total[l] = t
            if t > top:
                top = t
        if max_log:
            for i in range(nbits):
                mx[i, 0] = -np.inf
                mx[i, 1] = -np.inf
            for l in range(L):
                t = total[l]
                for i in range(nbits):
                    b = (l >> (nbits - 1 - i)) & 1
                    if t > mx[i, b]:
                        mx[i, b] = t
            for i in range(nbits):
                out[v, i] = mx[i, 0] - mx[i, 1] - la[v, i]
            continue
        # marginalize exp(metric) through row/column sums over the high and low label halves
        for r in range(rows.size):
            rows[r] = 0.0
        for c in range(cols.size):
            cols[c] = 0.0
        for l in range(L):
            e = np.exp(total[l] - top)
            rows[l >> low] += e
            cols[l & low_mask] += e
        for i in range(nbits):
            s[i, 0] = 0.0
            s[i, 1] = 0.0
        for r in range(rows.size):
            for p in range(nbits - low):
                s[nbits - 1 - low - p, (r >> p) & 1] += rows[r]
        for c in range(cols.size):
            for p in range(low):
                s[nbits - 1 - p, (c >> p) & 1] += cols[c]
        for i in range(nbits):
            for b in range(2):
                if s[i, b] < _UNDERFLOW:
                    # whole subset far below the global maximum: redo with its own maximum
                    m_ib = -np.inf
                    for l in range(L):
                        if (l >> (nbits - 1 - i)) & 1 == b and total[l] > m_ib:
                            m_ib = total[l]
                    acc = 0.0
                    for l in range(L):
                        if (l >> (nbits - 1 - i)) & 1 == b:
                            acc += np.exp(total[l] - m_ib)
                    mx[i, b] = m_ib + np.log(acc)
                else:
                    mx[i, b] = top + np.log(s[i, b])
            out[v, i] = mx[i, 0] - mx[i, 1] - la[v, i]
    return out


def _prepare(y, h, mapping: MdMapping):
    y = np.ascontiguousarray(np.atleast_2d(y), dtype=np.complex128)
    h = np.ones_like(y) if h is None else np.ascontiguousarray(np.broadcast_to(h, y.shape), dtype=np.complex128)
    if y.shape[1] != mapping.N:
        raise ValueError(f"received vectors have {y.shape[1]} symbols, mapping expects {mapping.N}")
    return y, h


def demap(y, h, n0: float, la, mapping: MdMapping, max_log: bool = False) -> np.ndarray:
    """Extrinsic LLRs (vectors, mN) of the label bits of each received vector.

    ``y`` and ``h`` have shape (vectors, N); ``la`` holds the a-priori LLRs
    with shape (vectors, mN) or is None for no prior information.
    """
    y, h = _prepare(y, h, mapping)
    if n0 <= 0:
        raise ValueError("N0 must be positive")
    V = y.shape[0]
    if la is None:
        la = np.zeros((V, mapping.bits))
    la = np.clip(np.asarray(la, dtype=np.float64).reshape(V, -1), -LLR_CLAMP, LLR_CLAMP)
    if la.shape[1] != mapping.bits:
        raise ValueError(f"a-priori block has {la.shape[1]} LLRs per vector, expected {mapping.bits}")
    pts = mapping.constellation().points.astype(np.complex128)
    J = np.ascontiguousarray(mapping.table - 1)
    le = _demap_kernel(y, h, float(n0), np.ascontiguousarray(la), J, pts, mapping.bits, max_log)
    return np.clip(le, -LLR_CLAMP, LLR_CLAMP)


def genie_demap(y, h, n0: float, labels, mapping: MdMapping) -> np.ndarray:
    """Extrinsic LLRs when every other bit of the label is known.

    Only the two vectors whose labels agree with the transmitted label
    outside bit i compete, for every bit i.
    """
    y, h = _prepare(y, h, mapping)
    labels = np.asarray(labels, dtype=np.int64)
    pts = mapping.constellation().points
    masks = 1 << np.arange(mapping.bits - 1, -1, -1)
    zero = labels[:, None] & ~masks[None, :]
    one = labels[:, None] | masks[None, :]
    x0 = pts[mapping.table[zero] - 1]  # (V, mN, N)
    x1 = pts[mapping.table[one] - 1]
    d0 = np.sum(np.abs(y[:, None, :] - h[:, None, :] * x0) ** 2, axis=-1)
    d1 = np.sum(np.abs(y[:, None, :] - h[:, None, :] * x1) ** 2, axis=-1)
    return np.clip((d1 - d0) / n0, -LLR_CLAMP, LLR_CLAMP)


def bits_to_labels(bits, nbits: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64).reshape(-1, nbits)
    return b @ (1 << np.arange(nbits - 1, -1, -1))


def labels_to_bits(labels, nbits: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return ((labels[:, None] >> np.arange(nbits - 1, -1, -1)) & 1).astype(np.int8)
