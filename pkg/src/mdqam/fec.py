"""Rate-1/2 feedforward convolutional code, log-MAP BCJR and the bit interleaver.

LLRs follow L = ln(P(bit=0) / P(bit=1)) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

LLR_CLAMP = 50.0

# frame used by the simulation chain: 5037 info bits + 3 tail = 5040 trellis steps
FRAME_CODED_BITS = 10080


@dataclass(frozen=True)
class CodeSpec:
    """Feedforward code given by octal generators, MSB tap on the current input."""

    generators: tuple[int, ...] = (0o13, 0o15)
    memory: int = 3

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def rate(self) -> float:
        return 1.0 / self.n_out

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @cached_property
    def taps(self) -> np.ndarray:
        """(n_out, memory+1) taps; column 0 multiplies the current input."""
        K = self.memory + 1
        return np.array([[(g >> (K - 1 - t)) & 1 for t in range(K)] for g in self.generators],
                        dtype=np.int64)

    @cached_property
    def trellis(self) -> tuple[np.ndarray, np.ndarray]:
        """``next_state[s, u]`` and ``outputs[s, u, :]``.

        State bits hold (u_{t-1}, ..., u_{t-memory}) with u_{t-1} as MSB.
        """
        S = self.n_states
        nxt = np.zeros((S, 2), dtype=np.int64)
        out = np.zeros((S, 2, self.n_out), dtype=np.int64)
        for s in range(S):
            past = [(s >> (self.memory - 1 - t)) & 1 for t in range(self.memory)]
            for u in (0, 1):
                reg = np.array([u] + past)
                out[s, u] = (self.taps @ reg) % 2
                nxt[s, u] = (u << (self.memory - 1)) | (s >> 1)
        return nxt, out

    def info_length(self, coded_bits: int) -> int:
        steps, rem = divmod(coded_bits, self.n_out)
        if rem:
            raise ValueError(f"{coded_bits} coded bits is not a multiple of {self.n_out}")
        return steps - self.memory


DEFAULT_CODE = CodeSpec()


def conv_encode(info_bits, code: CodeSpec = DEFAULT_CODE) -> np.ndarray:
    """Zero-tail encoding; returns ``n_out * (K + memory)`` coded bits."""
    u = np.concatenate([np.asarray(info_bits, dtype=np.int64), np.zeros(code.memory, dtype=np.int64)])
    padded = np.concatenate([np.zeros(code.memory, dtype=np.int64), u])
    out = np.empty((u.size, code.n_out), dtype=np.int64)
    for r, taps in enumerate(code.taps):
        acc = np.zeros(u.size, dtype=np.int64)
        for t, tap in enumerate(taps):
            if tap:
                acc ^= padded[code.memory - t: code.memory - t + u.size]
        out[:, r] = acc
    return out.ravel().astype(np.int8)


@njit(cache=True)
def _maxstar(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def _max2(a, b):
    return a if a > b else b


@njit(cache=True)
def _bcjr_kernel(llr, nxt, out, info_prior, max_log):
    n_out = out.shape[2]
    S = nxt.shape[0]
    T = llr.size // n_out
    NEG = -np.inf
    # branch metrics: sum over coded bits of +-L/2, plus info prior
    gamma = np.empty((T, S, 2))
    for t in range(T):
        for s in range(S):
            for u in range(2):
                g = 0.5 * info_prior[t] * (1 - 2 * u)
                for r in range(n_out):
                    g += 0.5 * llr[t * n_out + r] * (1 - 2 * out[s, u, r])
                gamma[t, s, u] = g
    alpha = np.full((T + 1, S), NEG)
    beta = np.full((T + 1, S), NEG)
    alpha[0, 0] = 0.0
    beta[T, 0] = 0.0
    for t in range(T):
        for s in range(S):
            a = alpha[t, s]
            if a == NEG:
                continue
            for u in range(2):
                ns = nxt[s, u]
                v = a + gamma[t, s, u]
                alpha[t + 1, ns] = _max2(alpha[t + 1, ns], v) if max_log else _maxstar(alpha[t + 1, ns], v)
        norm = alpha[t + 1].max()
        for s in range(S):
            alpha[t + 1, s] -= norm
    for t in range(T - 1, -1, -1):
        for s in range(S):
            acc = NEG
            for u in range(2):
                v = beta[t + 1, nxt[s, u]]
                if v == NEG:
                    continue
                v += gamma[t, s, u]
                acc = _max2(acc, v) if max_log else _maxstar(acc, v)
            beta[t, s] = acc
        norm = beta[t].max()
        for s in range(S):
            beta[t, s] -= norm
    app_info = np.empty(T)
    app_coded = np.empty(T * n_out)
    num = np.empty(n_out)
    den = np.empty(n_out)
    for t in range(T):
        u0 = NEG
        u1 = NEG
        for r in range(n_out):
            num[r] = NEG
            den[r] = NEG
        for s in range(S):
            a = alpha[t, s]
            if a == NEG:
                continue
            for u in range(2):
                b = beta[t + 1, nxt[s, u]]
                if b == NEG:
                    continue
                v = a + gamma[t, s, u] + b
                if u == 0:
                    u0 = _max2(u0, v) if max_log else _maxstar(u0, v)
                else:
                    u1 = _max2(u1, v) if max_log else _maxstar(u1, v)
                for r in range(n_out):
                    if out[s, u, r] == 0:
                        num[r] = _max2(num[r], v) if max_log else _maxstar(num[r], v)
                    else:
                        den[r] = _max2(den[r], v) if max_log else _maxstar(den[r], v)
        app_info[t] = u0 - u1
        for r in range(n_out):
            app_coded[t * n_out + r] = num[r] - den[r]
    return app_coded, app_info


def bcjr_decode(llr, code: CodeSpec = DEFAULT_CODE, info_prior=None, max_log: bool = False):
    """Forward-backward MAP decoding of one zero-tail terminated frame.

    Parameters
    ----------
    llr : array_like
        Intrinsic LLRs of the coded bits (trellis order), length ``n_out * T``.
    info_prior : array_like, optional
        A-priori LLRs on the T trellis inputs (tail included).
    max_log : bool
        Use the max-log approximation instead of exact log-MAP.

    Returns
    -------
    extrinsic : ndarray
        Coded-bit a-posteriori LLRs minus the intrinsic input.
    app_info : ndarray
        A-posteriori LLRs of the information bits (tail removed).
    """
    llr = np.clip(np.asarray(llr, dtype=np.float64), -LLR_CLAMP, LLR_CLAMP)
    if llr.size % code.n_out or llr.size // code.n_out <= code.memory:
        raise ValueError(f"LLR block of length {llr.size} does not fit the trellis")
    T = llr.size // code.n_out
    prior = np.zeros(T) if info_prior is None else np.asarray(info_prior, dtype=np.float64)
    if prior.size != T:
        raise ValueError("info prior length does not match the trellis length")
    nxt, out = code.trellis
    app_coded, app_info = _bcjr_kernel(llr, nxt, out, prior, max_log)
    ext = np.clip(app_coded - llr, -LLR_CLAMP, LLR_CLAMP)
    return ext, app_info[: T - code.memory]


# -- distance spectrum -----------------------------------------------------------


def distance_spectrum(code: CodeSpec = DEFAULT_CODE, max_weight: int | None = None):
    """Error events leaving and re-merging with the all-zero path.

    Returns ``(d_free, spectrum)`` where ``spectrum`` maps output weight d to
    ``(a_d, c_d)``: the number of events and their total information weight.
    ``max_weight`` defaults to d_free + 10.
    """
    nxt, out = code.trellis
    S = code.n_states
    w_out = out.sum(axis=2)

    def run(limit):
        spec: dict[int, list[int]] = {}
        # mass[s][w] = [paths, info weight] of unmerged paths at state s with output weight w
        mass = {(nxt[0, 1], int(w_out[0, 1])): [1, 1]}
        while mass:
            new: dict[tuple[int, int], list[int]] = {}
            for (s, w), (cnt, iw) in mass.items():
                for u in (0, 1):
                    ns, nw = int(nxt[s, u]), w + int(w_out[s, u])
                    if nw > limit:
                        continue
                    add = [cnt, iw + u * cnt]
                    if ns == 0:
                        e = spec.setdefault(nw, [0, 0])
                        e[0] += add[0]
                        e[1] += add[1]
                    else:
                        e = new.setdefault((ns, nw), [0, 0])
                        e[0] += add[0]
                        e[1] += add[1]
            mass = new
        return spec

    if S == 1:
        raise ValueError("code has no memory")
    probe = run(4 * code.memory * code.n_out)
    if not probe:
        raise ValueError("no error event found; code may be catastrophic")
    d_free = min(probe)
    limit = d_free + 10 if max_weight is None else max_weight
    spec = run(limit)
    return d_free, {d: (a, c) for d, (a, c) in sorted(spec.items())}


# -- interleaver -----------------------------------------------------------------


@dataclass(frozen=True)
class Interleaver:
    """Seeded random permutation: ``interleave(x)[k] = x[perm[k]]``."""

    length: int
    seed: int
    perm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0x1E,)))
        p = rng.permutation(self.length)
        p.setflags(write=False)
        object.__setattr__(self, "perm", p)

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.length)
        return inv

    def _check(self, x):
        x = np.asarray(x)
        if x.shape[-1] != self.length:
            raise ValueError(f"expected length {self.length}, got {x.shape[-1]}")
        return x

    def interleave(self, x) -> np.ndarray:
        return self._check(x)[..., self.perm]

    def deinterleave(self, x) -> np.ndarray:
        return self._check(x)[..., self.inverse]
