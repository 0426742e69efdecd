"""Baseline mapping optimizers: the binary switch algorithm and best-of-K random search.

Costs are always minimized. Objectives that reward large distances are
turned into sums of per-pair penalties over Hamming-1 label pairs:

* ``phi-hat-br``: 1/d^2 (the harmonic mean is the inverse of its average)
* ``d-hat-min``:  exp(-d^2 / 4N0), the error-free-feedback AWGN union term;
  for small N0 it is dominated by the smallest Hamming-1 distance
* ``phi-fr``:     prod_k 1 / (1 + d_k^2 / 4N0), the fast-fading pair term
* ``weighted``:   a nonnegative combination of the three above

``phi-br`` and ``n-min`` depend on the whole mapping and are evaluated by
full recomputation, which restricts them to small constellations.

The cost of one vector (used to pick the swap candidate) is its additive
share of the total: the sum of its pair terms over the mN bit positions.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import metrics
from .channel import snr_to_n0
from .mapping import MdMapping, random_mapping

log = logging.getLogger(__name__)

PAIR_COSTS = ("phi-hat-br", "d-hat-min", "phi-fr", "weighted")
GLOBAL_COSTS = ("phi-br", "n-min")
COSTS = PAIR_COSTS + GLOBAL_COSTS

# relative decrease below which a swap does not count as an improvement
_IMPROVE_TOL = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    """Objective and budget of a mapping search.

    ``design_snr_db`` (Eb/N0 per information bit) fixes N0 for the
    ``d-hat-min`` and ``phi-fr`` penalties. ``weights`` maps pair cost names
    to nonnegative weights and is only read by ``weighted``.
    """

    cost: str = "phi-hat-br"
    seed: int = 0
    max_swaps: int = 100_000
    design_snr_db: float = 6.0
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cost not in COSTS:
            raise ValueError(f"unknown cost {self.cost!r}; expected one of {COSTS}")
        if self.cost == "weighted":
            bad = set(self.weights) - set(PAIR_COSTS[:3])
            if bad:
                raise ValueError(f"weights for unsupported costs: {sorted(bad)}")
            w = np.array(list(self.weights.values()), dtype=float)
            if w.size == 0 or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be nonnegative with at least one positive")

    def pair_weights(self) -> np.ndarray:
        """Weights of (harmonic, exponential, product) pair terms."""
        if self.cost == "weighted":
            return np.array([float(self.weights.get(k, 0.0)) for k in PAIR_COSTS[:3]])
        return np.array([float(self.cost == k) for k in PAIR_COSTS[:3]])


@dataclass
class SearchResult:
    mapping: MdMapping
    cost: float
    trace: list = field(default_factory=list)
    exhausted: bool = False


# -- pair-cost kernels -------------------------------------------------------


@njit(cache=True)
def _pair_term(ja, jb, cls, tab, C):
    code = 0
    for k in range(ja.size):
        code = code * C + cls[ja[k], jb[k]]
    return tab[code]


@njit(cache=True)
def _symbol_costs(J, cls, tab, C, nbits):
    L = J.shape[0]
    out = np.zeros(L)
    for a in range(L):
        for i in range(nbits):
            out[a] += _pair_term(J[a], J[a ^ (1 << i)], cls, tab, C)
    return out


@njit(cache=True)
def _swap_delta(J, a, b, cls, tab, C, nbits):
    """Change of the total cost (ordered pairs) when the vectors of labels a and b swap."""
    ja = J[a]
    jb = J[b]
    delta = 0.0
    for i in range(nbits):
        pa = a ^ (1 << i)
        pb = b ^ (1 << i)
        if pa == b:
            continue  # the pair (a, b) keeps its distance
        jpa = J[pa]
        jpb = J[pb]
        delta += _pair_term(jb, jpa, cls, tab, C) - _pair_term(ja, jpa, cls, tab, C)
        delta += _pair_term(ja, jpb, cls, tab, C) - _pair_term(jb, jpb, cls, tab, C)
    return 2.0 * delta


@njit(cache=True)
def _best_partner(J, a, cls, tab, C, nbits):
    best = 0.0
    arg = -1
    for b in range(J.shape[0]):
        if b == a:
            continue
        d = _swap_delta(J, a, b, cls, tab, C, nbits)
        if d < best:
            best = d
            arg = b
    return arg, best


@njit(cache=True)
def _cached_delta(J, a, b, cls, tab, C, nbits, cur):
    """``_swap_delta`` with the current pair terms read from ``cur[label, bit]``."""
    ja = J[a]
    jb = J[b]
    delta = 0.0
    for i in range(nbits):
        pa = a ^ (1 << i)
        pb = b ^ (1 << i)
        if pa == b:
            continue
        delta += _pair_term(jb, J[pa], cls, tab, C) - cur[a, i]
        delta += _pair_term(ja, J[pb], cls, tab, C) - cur[b, i]
    return 2.0 * delta


@njit(cache=True)
def _partner_scan(J, a, cls, tab, C, nbits, cur, cand):
    """Best swap of label a among the labels in ``cand`` (lowest label on ties)."""
    best = np.inf
    arg = -1
    for b in cand:
        if b == a:
            continue
        d = _cached_delta(J, a, b, cls, tab, C, nbits, cur)
        if d < best or (d == best and b < arg):
            best = d
            arg = b
    return arg, best


@njit(cache=True)
def _bsa_pair_kernel(J, cls, tab, C, nbits, max_swaps, tol):
    """Binary switch algorithm with lazily refreshed best swaps per label.

    A swap of (p, q) only changes the deltas whose four labels (a, b and
    their bit partners) include p or q, i.e. pairs with a or b in the
    swap's neighbourhood. ``best_b[a]`` / ``best_delta[a]`` is therefore
    brought up to date when label a is visited by rescanning just the
    partners touched since its last refresh, or all partners if a itself
    or its cached partner was touched.
    """
    L = J.shape[0]
    everyone = np.arange(L)
    width = 2 * nbits + 2
    best_delta = np.empty(L)
    best_b = np.empty(L, dtype=np.int64)
    refreshed = np.full(L, -1, dtype=np.int64)  # commit count at the last refresh
    last_touched = np.full(L, -1, dtype=np.int64)
    hoods = np.empty((max_swaps, width), dtype=np.int64)
    trace_a = np.empty(max_swaps, dtype=np.int64)
    trace_b = np.empty(max_swaps, dtype=np.int64)
    trace_before = np.empty(max_swaps)
    trace_after = np.empty(max_swaps)
    cur = np.empty((L, nbits))
    sc = np.zeros(L)
    for a in range(L):
        for i in range(nbits):
            cur[a, i] = _pair_term(J[a], J[a ^ (1 << i)], cls, tab, C)
            sc[a] += cur[a, i]
    swaps = 0
    cost = sc.sum()
    while True:
        order = np.argsort(-sc, kind="mergesort")  # highest cost first, lower label on ties
        pick = -1
        for a in order:
            since = refreshed[a]
            if since < 0 or last_touched[a] >= since or last_touched[best_b[a]] >= since \
                    or (swaps - since) * width > L // 4:
                best_b[a], best_delta[a] = _partner_scan(J, a, cls, tab, C, nbits, cur, everyone)
            elif swaps > since:
                b, d = _partner_scan(J, a, cls, tab, C, nbits, cur, hoods[since:swaps].ravel())
                if b >= 0 and (d < best_delta[a] or (d == best_delta[a] and b < best_b[a])):
                    best_b[a] = b
                    best_delta[a] = d
            refreshed[a] = swaps
            if best_b[a] >= 0 and best_delta[a] < -tol * max(abs(cost), 1e-300):
                pick = a
                break
        if pick < 0:
            return swaps, False, trace_a, trace_b, trace_before, trace_after
        if swaps >= max_swaps:
            return swaps, True, trace_a, trace_b, trace_before, trace_after
        p = pick
        q = best_b[p]
        for k in range(J.shape[1]):
            t = J[p, k]
            J[p, k] = J[q, k]
            J[q, k] = t
        n = 0
        for v in (p, q):
            hoods[swaps, n] = v
            n += 1
            for i in range(nbits):
                hoods[swaps, n] = v ^ (1 << i)
                n += 1
        for v in hoods[swaps]:
            last_touched[v] = swaps
            acc = 0.0
            for i in range(nbits):
                cur[v, i] = _pair_term(J[v], J[v ^ (1 << i)], cls, tab, C)
                acc += cur[v, i]
            sc[v] = acc
        new = sc.sum()
        trace_a[swaps] = min(p, q)
        trace_b[swaps] = max(p, q)
        trace_before[swaps] = cost
        trace_after[swaps] = new
        swaps += 1
        cost = new


# -- cost model --------------------------------------------------------------


class _PairModel:
    """Pair terms tabulated over per-coordinate squared-distance classes.

    ``cls[j, j']`` is the class of the 2-D squared distance between symbols
    j and j'; ``tab`` holds the pair term of every tuple of N classes.
    """

    def __init__(self, mapping: MdMapping, cfg: SearchConfig):
        c = mapping.constellation()
        grid = np.rint(np.abs(c.coords[:, None] - c.coords[None, :]) ** 2).astype(np.int64)
        values, inv = np.unique(grid, return_inverse=True)
        self.cls = np.ascontiguousarray(inv.reshape(grid.shape), dtype=np.int64)
        self.C = values.size
        self.nbits = mapping.bits
        n0 = snr_to_n0(cfg.design_snr_db, "per-info-bit", mapping.m, mapping.N)
        w = cfg.pair_weights()
        d = values * c.scale ** 2
        per = np.stack(np.meshgrid(*([d] * mapping.N), indexing="ij"), axis=-1).reshape(-1, mapping.N)
        total = per.sum(axis=1)
        with np.errstate(divide="ignore"):
            tab = w[0] / total if w[0] else np.zeros(total.size)
        if w[1]:
            tab = tab + w[1] * np.exp(-total / (4.0 * n0))
        if w[2]:
            tab = tab + w[2] * np.prod(1.0 / (1.0 + per / (4.0 * n0)), axis=1)
        self.tab = np.ascontiguousarray(tab)

    def symbol_costs(self, J):
        return _symbol_costs(J, self.cls, self.tab, self.C, self.nbits)

    def total(self, J):
        return float(self.symbol_costs(J).sum())

    def best_partner(self, J, a):
        b, d = _best_partner(J, a, self.cls, self.tab, self.C, self.nbits)
        return int(b), float(d)


class _GlobalModel:
    """Full recomputation for objectives without a pairwise decomposition."""

    def __init__(self, mapping: MdMapping, cfg: SearchConfig):
        self.cost = cfg.cost
        self.m, self.N = mapping.m, mapping.N

    def _mapping(self, J):
        return MdMapping(self.m, self.N, J + 1)

    def symbol_costs(self, J):
        mp = self._mapping(J)
        if self.cost == "n-min":
            return metrics.bit_neighbour_counts(mp).sum(axis=1).astype(float)
        dist, _ = metrics.nearest_complement(mp)
        return (1.0 / dist).sum(axis=1)

    def total(self, J):
        mp = self._mapping(J)
        if self.cost == "n-min":
            return metrics.n_min(mp)
        return -metrics.harmonic_before(mp)

    def best_partner(self, J, a):
        base = self.total(J)
        best, arg = 0.0, -1
        for b in range(J.shape[0]):
            if b == a:
                continue
            J[[a, b]] = J[[b, a]]
            d = self.total(J) - base
            J[[a, b]] = J[[b, a]]
            if d < best and d < -_IMPROVE_TOL * abs(base):
                best, arg = d, b
        return arg, best


def _model(mapping: MdMapping, cfg: SearchConfig):
    return _PairModel(mapping, cfg) if cfg.cost in PAIR_COSTS else _GlobalModel(mapping, cfg)


def total_cost(mapping: MdMapping, cfg: SearchConfig) -> float:
    """Objective value minimized by the searches (full recomputation)."""
    J = np.ascontiguousarray(mapping.table - 1)
    return _model(mapping, cfg).total(J)


def objective_value(mapping: MdMapping, cfg: SearchConfig) -> float:
    """The figure of merit behind ``cfg.cost`` in its natural units."""
    if cfg.cost == "phi-hat-br":
        return metrics.harmonic_after(mapping)
    if cfg.cost == "phi-br":
        return metrics.harmonic_before(mapping)
    if cfg.cost == "n-min":
        return metrics.n_min(mapping)
    if cfg.cost == "d-hat-min":
        return metrics.d_hat_min_sq(mapping)
    if cfg.cost == "phi-fr":
        n0 = snr_to_n0(cfg.design_snr_db, "per-info-bit", mapping.m, mapping.N)
        return metrics.phi_fast(mapping, n0, "after")
    return -total_cost(mapping, cfg)


# -- binary switch algorithm ----------------------------------------------------


def bsa(init: MdMapping, cfg: SearchConfig) -> SearchResult:
    """Greedy label switching until no single swap lowers the total cost.

    Vectors are visited in order of decreasing per-vector cost (ties: lower
    label first). For the first vector whose best swap lowers the total
    cost, that swap is committed and the ordering is recomputed. The trace
    holds one row per committed swap.
    """
    J = np.ascontiguousarray(init.table - 1).copy()
    model = _model(init, cfg)
    if isinstance(model, _PairModel):
        swaps, exhausted, ta, tb, before, after = _bsa_pair_kernel(
            J, model.cls, model.tab, model.C, model.nbits, cfg.max_swaps, _IMPROVE_TOL)
        trace = [(k + 1, int(ta[k]), int(tb[k]), float(before[k]), float(after[k])) for k in range(swaps)]
        cost = trace[-1][4] if trace else model.total(J)
    else:
        cost, trace, exhausted = _bsa_generic(J, model, cfg.max_swaps)
    if exhausted:
        log.warning("BSA stopped after %d swaps without reaching a fixed point", cfg.max_swaps)
    prov = {"method": "bsa", "cost": cfg.cost, "seed": cfg.seed, "swaps": len(trace)}
    return SearchResult(MdMapping(init.m, init.N, J + 1, prov), cost, trace, exhausted)


def _bsa_generic(J, model, max_swaps):
    """Reference implementation with full recomputation of every candidate."""
    cost = model.total(J)
    trace = []
    while True:
        sc = model.symbol_costs(J)
        order = np.lexsort((np.arange(sc.size), -sc))
        pick = None
        for a in order:
            b, delta = model.best_partner(J, int(a))
            if b >= 0 and delta < -_IMPROVE_TOL * max(abs(cost), 1e-300):
                pick = int(a), b
                break
        if pick is None:
            return cost, trace, False
        if len(trace) >= max_swaps:
            return cost, trace, True
        a, b = pick
        J[[a, b]] = J[[b, a]]
        new = model.total(J)
        trace.append((len(trace) + 1, min(a, b), max(a, b), cost, new))
        cost = new


def _bsa_restart(args):
    m, N, cfg, restart = args
    init = random_mapping(m, N, np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(restart,))))
    return bsa(init, cfg)


def bsa_restarts(m: int, N: int, cfg: SearchConfig, restarts: int = 20, threads: int = 1) -> SearchResult:
    """Best BSA result over seeded random initial mappings.

    Restart r starts from a mapping drawn from (cfg.seed, r), so the winner
    does not depend on ``threads``. Ties go to the earliest restart.
    """
    if restarts < 1:
        raise ValueError("at least one restart is required")
    jobs = [(m, N, cfg, r) for r in range(restarts)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_bsa_restart, jobs))
    else:
        results = [_bsa_restart(j) for j in jobs]
    best = min(range(restarts), key=lambda r: (results[r].cost, r))
    res = results[best]
    res.mapping.provenance["restart"] = best
    res.mapping.provenance["restarts"] = restarts
    res.exhausted = any(r.exhausted for r in results)
    return res


# -- random search ----------------------------------------------------------------


def random_search(m: int, N: int, K: int, cost: str | SearchConfig = "phi-hat-br", seed: int = 0) -> SearchResult:
    """Best of K seeded random mappings; candidate k is drawn from (seed, k).

    Because candidate k does not depend on K, a larger budget with the same
    seed never gives a worse winner. Ties go to the earliest candidate.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    cfg = cost if isinstance(cost, SearchConfig) else SearchConfig(cost=cost, seed=seed)
    best_cost, best_map, best_k = np.inf, None, -1
    for k in range(K):
        mp = random_mapping(m, N, np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(k,))))
        c = total_cost(mp, cfg)
        if c < best_cost:
            best_cost, best_map, best_k = c, mp, k
    prov = {"method": "random", "cost": cfg.cost, "seed": cfg.seed, "budget": K, "winner": best_k}
    return SearchResult(MdMapping(m, N, best_map.table, prov), best_cost)


def write_trace(trace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "swapped_labels", "cost_before", "cost_after"])
        for step, a, b, before, after in trace:
            w.writerow([step, f"{a}:{b}", repr(before), repr(after)])
