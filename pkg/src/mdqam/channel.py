"""AWGN, block-fading and fast Rayleigh fading channels with perfect CSI.

A symbol-vector x of N complex symbols is received as y_k = h_k x_k + n_k
(per-coordinate product), with n_k ~ CN(0, N0) and h_k ~ CN(0, 1). In the
block model all N coefficients of a vector are equal.
"""

from __future__ import annotations

import numpy as np

MODELS = ("awgn", "block", "fast")


def frame_rng(master_seed: int, frame_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, frame, stream).

    Streams depend only on their key, so results do not change with the
    number of workers or the order frames are processed in.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(frame_index, stream))
    return np.random.Generator(np.random.Philox(ss))


def fading(shape, model: str, rng: np.random.Generator) -> np.ndarray:
    """Fading coefficients for ``shape = (vectors, N)``."""
    if model == "awgn":
        return np.ones(shape, dtype=complex)
    if model == "fast":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    if model == "block":
        v = shape[0]
        h = (rng.standard_normal(v) + 1j * rng.standard_normal(v)) / np.sqrt(2.0)
        return np.repeat(h[:, None], shape[1], axis=1)
    raise ValueError(f"unknown channel model {model!r}; expected one of {MODELS}")


def transmit(x, model: str, n0: float, rng: np.random.Generator):
    """Pass symbol-vectors ``x`` (vectors, N) through the channel; returns (y, h)."""
    if n0 <= 0:
        raise ValueError("N0 must be positive")
    x = np.asarray(x, dtype=complex)
    h = fading(x.shape, model, rng)
    noise = np.sqrt(n0 / 2.0) * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return h * x + noise, h


CONVENTIONS = ("per-info-bit", "per-2d-symbol", "per-vector")


def snr_to_n0(snr_db: float, convention: str, m: int, N: int, rate: float = 0.5) -> float:
    """Noise level for unit mean vector energy.

    ``rate`` is the number of information bits per coded bit (tail overhead
    included when the caller passes the effective rate).
    """
    snr = 10.0 ** (snr_db / 10.0)
    if convention == "per-vector":
        return 1.0 / snr
    if convention == "per-2d-symbol":
        return 1.0 / (N * snr)
    if convention == "per-info-bit":
        return 1.0 / (m * N * rate * snr)
    raise ValueError(f"unknown SNR convention {convention!r}; expected one of {CONVENTIONS}")
