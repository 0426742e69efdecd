"""Multi-dimensional QAM label mappings.

A mapping assigns each mN-bit label (bit 1 = MSB) an N-tuple of 1-based
position-indexes into a square 2^m-QAM constellation. The systematic
construction grows the mapping over m-1 steps: step 1 places a 2N-bit
MD-QPSK mapping on four well-separated QAM points, every later step uses N
more label bits to move each symbol within a larger symbol subset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

from .constellation import Constellation2D, build_qam

FORMAT_VERSION = 1

# -- construction constants ------------------------------------------------

GAMMA = {
    4: (11, 3, 1, 9),
    6: (37, 5, 1, 33),
}

# alpha_{i-1} for i = 2..m-1 and the four beta vectors of step i
_ALPHA_16 = (
    (1, 3, 9, 11),
    (1, 2, 3, 4, 9, 10, 11, 12),
)
_BETA_16 = (
    {
        "E0": (1, 3, 9, 11),
        "E1": (2, 4, 10, 12),
        "O0": (11, 9, 3, 1),
        "O1": (12, 10, 4, 2),
    },
    {
        "E0": (1, 2, 3, 4, 9, 10, 11, 12),
        "E1": (5, 6, 7, 8, 13, 14, 15, 16),
        "O0": (11, 12, 9, 10, 3, 4, 1, 2),
        "O1": (15, 16, 13, 14, 7, 8, 5, 6),
    },
)
_ALPHA_64 = (
    (1, 5, 33, 37),
    (1, 3, 5, 7, 33, 35, 37, 39),
    (1, 3, 5, 7, 17, 19, 21, 23, 33, 35, 37, 39, 49, 51, 53, 55),
    tuple(range(1, 64, 2)),
)
_BETA_64 = (
    {
        "E0": (1, 5, 33, 37),
        "E1": (3, 7, 35, 39),
        "O0": (37, 33, 5, 1),
        "O1": (39, 35, 7, 3),
    },
    {
        "E0": (1, 3, 5, 7, 33, 35, 37, 39),
        "E1": (17, 19, 21, 23, 49, 51, 53, 55),
        "O0": (37, 39, 33, 35, 5, 7, 1, 3),
        "O1": (53, 55, 49, 51, 21, 23, 17, 19),
    },
    {
        "E0": (1, 3, 5, 7, 17, 19, 21, 23, 33, 35, 37, 39, 49, 51, 53, 55),
        "E1": (9, 11, 13, 15, 25, 27, 29, 31, 41, 43, 45, 47, 57, 59, 61, 63),
        "O0": (37, 39, 33, 35, 53, 55, 49, 51, 5, 7, 1, 3, 21, 23, 17, 19),
        "O1": (45, 47, 41, 43, 61, 63, 57, 59, 13, 15, 9, 11, 29, 31, 25, 27),
    },
    {
        "E0": tuple(range(1, 64, 2)),
        "E1": tuple(range(2, 65, 2)),
        "O0": (37, 39, 33, 35, 45, 47, 41, 43, 53, 55, 49, 51, 61, 63, 57, 59,
               5, 7, 1, 3, 13, 15, 9, 11, 21, 23, 17, 19, 29, 31, 25, 27),
        "O1": (38, 40, 34, 36, 46, 48, 42, 44, 54, 56, 50, 52, 62, 64, 58, 60,
               6, 8, 2, 4, 14, 16, 10, 12, 22, 24, 18, 20, 30, 32, 26, 28),
    },
)

# GF(2) generators of the base MD-QPSK mappings: row r is the pattern of
# QPSK Gray bits toggled by label bit r+1 of a_1 (MSB first). The N=2 rows
# are read off the bundled 4-D 16-QAM table; N=3 extends the same pattern
# (all-ones row plus complements of single coordinate bits). Every row has
# weight >= 2N-1, so a single label-bit flip moves 2N-1 Gray coordinates.
BASE_QPSK_GENERATORS = {
    2: ((1, 0, 1, 1),
        (0, 1, 1, 1),
        (1, 1, 1, 0),
        (1, 1, 1, 1)),
    3: ((1, 0, 1, 1, 1, 1),
        (0, 1, 1, 1, 1, 1),
        (1, 1, 1, 0, 1, 1),
        (1, 1, 0, 1, 1, 1),
        (1, 1, 1, 1, 1, 0),
        (1, 1, 1, 1, 1, 1)),
}

# QPSK index k (1-based, P_k = exp(j*pi*k/2)) for each Gray bit pair (b1, b2).
# P3 carries 00; P2 and P4 are its neighbours, P1 is opposite.
_QPSK_FROM_BITS = {(0, 0): 3, (0, 1): 4, (1, 0): 2, (1, 1): 1}


@dataclass(frozen=True)
class StepTables:
    m: int
    gamma: tuple[int, ...]
    alpha: tuple[tuple[int, ...], ...]
    beta: tuple[dict[str, tuple[int, ...]], ...]

    def alpha_for_step(self, i: int) -> tuple[int, ...]:
        """Position-indexes alpha_i used by step i (1 <= i <= m-1)."""
        if i == self.m - 1:
            return tuple(range(1, (1 << self.m) + 1))
        return self.alpha[i - 1]

    def betas_for_step(self, i: int) -> dict[str, tuple[int, ...]]:
        """beta vectors of step i (2 <= i <= m-1)."""
        return self.beta[i - 2]


def step_tables(m: int) -> StepTables:
    if m == 4:
        return StepTables(4, GAMMA[4], _ALPHA_16, _BETA_16)
    if m == 6:
        return StepTables(6, GAMMA[6], _ALPHA_64, _BETA_64)
    raise ValueError(f"unsupported m={m}; expected 4 or 6")


# -- mapping container -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MdMapping:
    """Bijective table label -> N position-indexes (1-based).

    ``table[label, k]`` is the position-index of symbol k of the vector
    carrying ``label``.
    """

    m: int
    N: int
    table: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        if t.shape != (1 << (self.m * self.N), self.N):
            raise ValueError(f"table shape {t.shape} does not match m={self.m}, N={self.N}")
        if t.min() < 1 or t.max() > (1 << self.m):
            raise ValueError("position-index out of range")
        codes = self._encode(t)
        if np.unique(codes).size != codes.size:
            raise ValueError("mapping is not bijective: duplicated symbol vector")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def _encode(self, t: np.ndarray) -> np.ndarray:
        # vector (j1..jN) -> integer with j1 most significant, 0-based digits
        M = 1 << self.m
        weights = M ** np.arange(self.N - 1, -1, -1)
        return (t - 1) @ weights

    @property
    def bits(self) -> int:
        return self.m * self.N

    @property
    def size(self) -> int:
        return 1 << self.bits

    @cached_property
    def vector_codes(self) -> np.ndarray:
        """Integer code of each label's vector (0-based digits, symbol 1 most significant)."""
        return self._encode(self.table)

    @cached_property
    def inverse(self) -> np.ndarray:
        """``inverse[code]`` is the label carried by the vector with that code."""
        inv = np.empty(self.size, dtype=np.int64)
        inv[self.vector_codes] = np.arange(self.size)
        inv.setflags(write=False)
        return inv

    def label_of(self, vector) -> int:
        return int(self.inverse[self._encode(np.asarray(vector, dtype=np.int64)[None, :])[0]])

    def __getitem__(self, label: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.table[label])

    def __eq__(self, other):
        if not isinstance(other, MdMapping):
            return NotImplemented
        return self.m == other.m and self.N == other.N and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash((self.m, self.N, self.table.tobytes()))

    def constellation(self) -> Constellation2D:
        return build_qam(self.m, self.N)

    def label_bits(self) -> np.ndarray:
        """(2^{mN}, mN) array of label bits, MSB first."""
        return label_bits(self.bits)

    def relabeled(self, perm: np.ndarray, **provenance) -> "MdMapping":
        """Mapping whose label ``perm[l]`` carries the vector of label ``l``."""
        t = np.empty_like(self.table)
        t[np.asarray(perm)] = self.table
        return MdMapping(self.m, self.N, t, provenance or dict(self.provenance))

    def content_hash(self) -> str:
        return hashlib.sha256(self.table.astype("<i8").tobytes()).hexdigest()


def label_bits(n_bits: int) -> np.ndarray:
    labels = np.arange(1 << n_bits)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8)


# -- systematic construction ----------------------------------------------


@dataclass(frozen=True)
class BaseQpskMap:
    """MD-QPSK mapping: ``table[label]`` holds N QPSK indexes k in 1..4."""

    N: int
    table: np.ndarray = field(repr=False)
    generator: tuple[tuple[int, ...], ...] | None = None


def qpsk_vector_from_bits(bits) -> list[int]:
    bits = list(bits)
    return [_QPSK_FROM_BITS[(bits[2 * k], bits[2 * k + 1])] for k in range(len(bits) // 2)]


def gf2_rank(rows) -> int:
    a = [int("".join(map(str, r)), 2) for r in rows]
    rank = 0
    while a:
        pivot = max(a)
        if pivot == 0:
            break
        a.remove(pivot)
        top = pivot.bit_length() - 1
        a = [x ^ pivot if (x >> top) & 1 else x for x in a]
        rank += 1
    return rank


def base_qpsk_from_generator(generator) -> BaseQpskMap:
    G = np.asarray(generator, dtype=np.int64)
    n = G.shape[0]
    if G.shape != (n, n) or n % 2:
        raise ValueError("generator must be square with an even side")
    if gf2_rank(G.tolist()) != n:
        raise ValueError("generator is singular over GF(2); mapping would not be bijective")
    coded = (label_bits(n).astype(np.int64) @ G) % 2
    table = np.array([qpsk_vector_from_bits(c) for c in coded], dtype=np.int64)
    return BaseQpskMap(n // 2, table, tuple(tuple(int(v) for v in r) for r in G))


def construct_base_qpsk_map(N: int) -> BaseQpskMap:
    """Base MD-QPSK mapping for step 1 (N in {2, 3})."""
    if N not in BASE_QPSK_GENERATORS:
        raise ValueError(f"no base MD-QPSK mapping for N={N}")
    return base_qpsk_from_generator(BASE_QPSK_GENERATORS[N])


def map_step1(a1, base: BaseQpskMap, gamma) -> list[int]:
    """Map the 2N least significant label bits to step-1 position-indexes."""
    a1 = [int(b) for b in a1]
    if len(a1) != 2 * base.N:
        raise ValueError(f"expected {2 * base.N} bits, got {len(a1)}")
    label = int("".join(map(str, a1)), 2)
    return [gamma[k - 1] for k in base.table[label]]


def select_beta(b, k: int) -> str:
    """Name of the beta vector for symbol k (1-based) given the N new bits ``b``."""
    parity = "O" if sum(b) % 2 else "E"
    return f"{parity}{int(b[k - 1])}"


def transform_step(j_prev, b, alpha_prev, betas) -> list[int]:
    out = []
    for k, j in enumerate(j_prev, start=1):
        try:
            q = alpha_prev.index(j)
        except ValueError:
            raise ValueError(f"position-index {j} not in previous symbol subset") from None
        out.append(betas[select_beta(b, k)][q])
    return out


def label_slices(label: int, m: int, N: int) -> tuple[list[int], list[list[int]]]:
    """Split a label into a_1 (2N LSBs) and b_2..b_{m-1} (N bits each)."""
    bits = [(label >> (m * N - 1 - i)) & 1 for i in range(m * N)]
    a1 = bits[-2 * N:]
    bs = []
    for i in range(2, m):
        # b_i = the N most significant bits of a_i, i.e. the (i+1)N LSBs
        start = m * N - (i + 1) * N
        bs.append(bits[start:start + N])
    return a1, bs


def map_label(label: int, m: int, N: int, base: BaseQpskMap | None = None,
              tables: StepTables | None = None, upto_step: int | None = None) -> list[int]:
    tables = tables or step_tables(m)
    base = base or construct_base_qpsk_map(N)
    last = m - 1 if upto_step is None else upto_step
    a1, bs = label_slices(label, m, N)
    j = map_step1(a1, base, tables.gamma)
    for i in range(2, last + 1):
        j = transform_step(j, bs[i - 2], list(tables.alpha_for_step(i - 1)), tables.betas_for_step(i))
    return j


def build_step_mapping(m: int, N: int, step: int, base: BaseQpskMap | None = None) -> np.ndarray:
    """Intermediate table of step ``step``: (i+1)N-bit labels -> vectors over alpha_i."""
    tables = step_tables(m)
    base = base or construct_base_qpsk_map(N)
    n_bits = (step + 1) * N
    labels = np.arange(1 << n_bits)
    gamma = np.asarray(tables.gamma)
    # step 1 uses the 2N LSBs
    j = gamma[base.table[labels & ((1 << (2 * N)) - 1)] - 1]
    M = 1 << m
    for i in range(2, step + 1):
        # b_i: bits (i+1)N..iN+1 counted from the LSB end, b_i^(1) most significant
        b = (labels[:, None] >> (i * N + np.arange(N - 1, -1, -1))) & 1
        odd = b.sum(axis=1) % 2
        alpha_prev = tables.alpha_for_step(i - 1)
        pos = -np.ones(M + 1, dtype=np.int64)
        pos[list(alpha_prev)] = np.arange(len(alpha_prev))
        q = pos[j]
        if np.any(q < 0):
            raise ValueError(f"step {i}: position-index outside the previous symbol subset")
        betas = tables.betas_for_step(i)
        stack = np.array([betas["E0"], betas["E1"], betas["O0"], betas["O1"]])
        j = stack[2 * odd[:, None] + b, q]
    return j.astype(np.int64)


def build_mapping(m: int, N: int, base: BaseQpskMap | None = None) -> MdMapping:
    """The systematic 2N-D 2^m-QAM mapping."""
    if N not in (2, 3):
        raise ValueError(f"unsupported N={N}; expected 2 or 3")
    tables = step_tables(m)
    base = base or construct_base_qpsk_map(N)
    table = build_step_mapping(m, N, m - 1, base)
    return MdMapping(m, N, table, {"source": "proposed", "base_generator": base.generator})


# -- baselines ---------------------------------------------------------------


def random_mapping(m: int, N: int, seed: int | np.random.Generator) -> MdMapping:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    M = 1 << m
    vectors = np.array(list(product(range(1, M + 1), repeat=N)), dtype=np.int64)
    perm = rng.permutation(len(vectors))
    return MdMapping(m, N, vectors[perm], {"source": "random",
                                           "seed": None if isinstance(seed, np.random.Generator) else seed})


def gray_labels_1d(n: int) -> np.ndarray:
    """Reflected binary code word carried by each of 2^n levels."""
    k = np.arange(1 << n)
    return k ^ (k >> 1)


def gray_mapping(m: int, N: int = 1) -> MdMapping:
    """Per-symbol Gray labeling (m/2 bits per axis), repeated independently over N symbols.

    Label bits of symbol k occupy bit positions (k-1)m+1..km; within a symbol
    the first m/2 bits select the row (top to bottom), the rest the column.
    """
    half = m // 2
    side = 1 << half
    gray = gray_labels_1d(half)
    sym_of_code = np.empty(1 << m, dtype=np.int64)
    for r in range(side):
        for c in range(side):
            sym_of_code[(gray[r] << half) | gray[c]] = r * side + c + 1
    labels = np.arange(1 << (m * N))
    table = np.empty((labels.size, N), dtype=np.int64)
    for k in range(N):
        shift = m * (N - 1 - k)
        table[:, k] = sym_of_code[(labels >> shift) & ((1 << m) - 1)]
    return MdMapping(m, N, table, {"source": "gray"})


# -- selection principles ----------------------------------------------------


def _subset_msed(const: Constellation2D, idx) -> float:
    pts = const.coords[np.asarray(idx) - 1]
    d = np.abs(pts[:, None] - pts[None, :]) ** 2
    return float(d[d > 0].min())


def _tiles(side: int, cells: set[tuple[int, int]]) -> bool:
    """True if translates of ``cells`` partition the side x side grid."""
    cover = np.zeros((side, side), dtype=np.int64)
    shape = sorted(cells)
    r0, c0 = shape[0]
    rel = [(r - r0, c - c0) for r, c in shape]
    # greedy: the first uncovered cell in row-major order must be the anchor
    while True:
        free = np.argwhere(cover == 0)
        if free.size == 0:
            return True
        r, c = free[0]
        for dr, dc in rel:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < side and 0 <= cc < side) or cover[rr, cc]:
                return False
            cover[rr, cc] = 1


def _cells(idx, side) -> set[tuple[int, int]]:
    return {((j - 1) // side, (j - 1) % side) for j in idx}


def _lattice_candidates(side: int, size: int, contains: set[tuple[int, int]]):
    """Subsets spanned by axis-aligned sublattice patterns containing ``contains``."""
    seen = set()
    steps = [s for s in range(1, side + 1) if side % s == 0 or s < side]
    for rs in steps:
        for cs in steps:
            for rows_n in range(1, side + 1):
                cols_n = size // rows_n
                if rows_n * cols_n != size or cols_n > side:
                    continue
                # rows: union of arithmetic progressions with stride rs starting at 0
                for rblock in range(1, rows_n + 1):
                    if rows_n % rblock:
                        continue
                    for cblock in range(1, cols_n + 1):
                        if cols_n % cblock:
                            continue
                        rows = _pattern(rows_n, rblock, rs)
                        cols = _pattern(cols_n, cblock, cs)
                        if rows is None or cols is None or max(rows) >= side or max(cols) >= side:
                            continue
                        cells = frozenset((r, c) for r in rows for c in cols)
                        if contains <= cells and cells not in seen:
                            seen.add(cells)
                            yield cells


def _pattern(n: int, block: int, stride: int):
    # `block` consecutive coordinates, repeated n/block times with spacing `stride`
    if block > 1 and stride < block:
        return None
    return [g * stride + t for g in range(n // block) for t in range(block)] if block > 1 else \
        [g * stride for g in range(n)]


def verify_selection_principles(m: int, alpha=None) -> list[str]:
    """Check the symbol subsets of each step; returns a list of violations (empty if none).

    (i) translates of every subset tile the constellation exactly once;
    (ii) each subset attains the largest minimum distance among tiling
    candidates containing the previous subset. For 16-QAM the candidates
    are all subsets of the right size; for 64-QAM only axis-aligned
    sublattice patterns are enumerated.
    """
    from itertools import combinations

    tables = step_tables(m)
    alpha = alpha or [tables.alpha_for_step(i) for i in range(1, m - 1)]
    const = build_qam(m, 1)
    side = 1 << (m // 2)
    problems = []
    prev: set[tuple[int, int]] = set()
    for i, a in enumerate(alpha, start=1):
        cells = _cells(a, side)
        if len(cells) != 1 << (i + 1):
            problems.append(f"step {i}: expected {1 << (i + 1)} symbols, got {len(cells)}")
            continue
        if not prev <= cells:
            problems.append(f"step {i}: subset does not contain the step {i - 1} subset")
        if not _tiles(side, cells):
            problems.append(f"step {i}: translates do not tile the constellation")
        ours = _subset_msed(const, a)
        if m == 4:
            rest = [c for c in range(side * side) if (c // side, c % side) not in prev]
            need = (1 << (i + 1)) - len(prev)
            cands = (prev | {(c // side, c % side) for c in extra} for extra in combinations(rest, need))
        else:
            cands = _lattice_candidates(side, 1 << (i + 1), prev)
        best = ours
        for cand in cands:
            if not _tiles(side, set(cand)):
                continue
            idx = [r * side + c + 1 for r, c in cand]
            best = max(best, _subset_msed(const, idx))
        if best > ours + 1e-9:
            problems.append(f"step {i}: subset MSED {ours} below achievable {best}")
        prev = cells
    return problems


# -- file format -------------------------------------------------------------


def save_mapping(mapping: MdMapping, path, seed: int | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "m": mapping.m,
        "N": mapping.N,
        "seed": seed if seed is not None else mapping.provenance.get("seed"),
        "provenance": _jsonable(mapping.provenance),
        "entries": mapping.table.tolist(),
    }
    text = json.dumps(doc, indent=1)
    # one vector per line keeps the file diffable
    text = text.replace("[\n   ", "[").replace(",\n   ", ", ").replace("\n  ]", "]")
    Path(path).write_text(text + "\n")


def load_mapping(path) -> MdMapping:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed mapping file {path}: {exc}") from exc
    for key in ("m", "N", "entries"):
        if key not in doc:
            raise ValueError(f"mapping file {path} lacks field '{key}'")
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported mapping format_version {version}")
    prov = dict(doc.get("provenance") or {})
    if doc.get("seed") is not None:
        prov.setdefault("seed", doc["seed"])
    return MdMapping(int(doc["m"]), int(doc["N"]), np.asarray(doc["entries"], dtype=np.int64), prov)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
