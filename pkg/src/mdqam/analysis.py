"""BICM-ID experiments: iterative BER, EXIT curves and error-floor union bounds.

SNR points are given as Es/N0 per 2-D symbol (unit mean vector energy, so
N0 = 1 / (N * Es/N0)). Eb/N0 is reported alongside using the effective
code rate of the frame (tail bits included).
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from . import metrics
from .channel import MODELS, frame_rng, snr_to_n0, transmit
from .demapper import bits_to_labels, demap, genie_demap
from .fec import DEFAULT_CODE, FRAME_CODED_BITS, CodeSpec, Interleaver, bcjr_decode, conv_encode, distance_spectrum
from .mapping import MdMapping

log = logging.getLogger(__name__)

EXIT_SAMPLE_FLOOR = 200_000
# frames simulated between two checks of the stop rule; fixed so that the
# number of simulated frames does not depend on the worker count
BATCH_FRAMES = 8


def es_n0(es_db, N: int) -> float:
    return snr_to_n0(es_db, "per-2d-symbol", m=1, N=N)


def effective_rate(code: CodeSpec = DEFAULT_CODE, coded_bits: int = FRAME_CODED_BITS) -> float:
    return code.info_length(coded_bits) / coded_bits


def es_to_eb_db(es_db, m: int, code: CodeSpec = DEFAULT_CODE, coded_bits: int = FRAME_CODED_BITS) -> float:
    return float(es_db - 10.0 * np.log10(m * effective_rate(code, coded_bits)))


def eb_to_es_db(eb_db, m: int, code: CodeSpec = DEFAULT_CODE, coded_bits: int = FRAME_CODED_BITS) -> float:
    return float(eb_db + 10.0 * np.log10(m * effective_rate(code, coded_bits)))


# -- BER simulation ------------------------------------------------------------


@dataclass
class BerPoint:
    snr_es_db: float
    snr_eb_db: float
    iteration: int
    ber: float
    bits: int
    errors: int
    undersampled: bool = False


@dataclass
class SimResult:
    mapping_id: str
    channel: str
    points: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def final(self, iteration: int | None = None) -> list:
        it = iteration or max(p.iteration for p in self.points)
        return [p for p in self.points if p.iteration == it]


@dataclass(frozen=True)
class _FrameJob:
    table: np.ndarray
    m: int
    N: int
    channel: str
    n0: float
    iterations: int
    master_seed: int
    interleaver_seed: int
    point_index: int
    genie: bool = False


def _simulate_frame(job: _FrameJob, frame: int) -> np.ndarray:
    """Information-bit errors after each iteration for one frame."""
    mapping = MdMapping(job.m, job.N, job.table)
    code = DEFAULT_CODE
    K = code.info_length(FRAME_CODED_BITS)
    nbits = mapping.bits
    rng = frame_rng(job.master_seed, frame, stream=job.point_index)
    info = rng.integers(0, 2, K, dtype=np.int8)
    coded = conv_encode(info, code)
    pi = Interleaver(FRAME_CODED_BITS, job.interleaver_seed)
    tx_bits = pi.interleave(coded)
    labels = bits_to_labels(tx_bits, nbits)
    pts = mapping.constellation().points
    x = pts[mapping.table[labels] - 1]
    y, h = transmit(x, job.channel, job.n0, rng)
    errors = np.zeros(job.iterations, dtype=np.int64)
    if job.genie:
        le = genie_demap(y, h, job.n0, labels, mapping)
        _, app = bcjr_decode(pi.deinterleave(le.ravel()), code)
        errors[:] = np.count_nonzero((app < 0) != info)
        return errors
    la = None
    for it in range(job.iterations):
        le = demap(y, h, job.n0, la, mapping)
        ext, app = bcjr_decode(pi.deinterleave(le.ravel()), code)
        errors[it] = np.count_nonzero((app < 0) != info)
        if it + 1 < job.iterations:
            la = pi.interleave(ext).reshape(-1, nbits)
    return errors


def _run_batch(args):
    job, frames = args
    return np.stack([_simulate_frame(job, f) for f in frames])


def _simulate_point(job: _FrameJob, min_errors: int, max_bits: int, pool) -> tuple[np.ndarray, int]:
    K = DEFAULT_CODE.info_length(FRAME_CODED_BITS)
    max_frames = max(1, -(-int(max_bits) // K))
    errors = np.zeros(job.iterations, dtype=np.int64)
    frames = 0
    workers = getattr(pool, "_max_workers", 1) if pool is not None else 1
    while frames < max_frames and errors[-1] < min_errors:
        # a round holds `workers` fixed-size batches; the stop rule is
        # checked after each batch in frame order
        batches = []
        start = frames
        for _ in range(workers):
            stop = min(start + BATCH_FRAMES, max_frames)
            if start >= stop:
                break
            batches.append(range(start, stop))
            start = stop
        if pool is None:
            outs = (_run_batch((job, b)) for b in batches)
        else:
            outs = pool.map(_run_batch, [(job, b) for b in batches])
        for b, out in zip(batches, outs):
            if frames >= max_frames or errors[-1] >= min_errors:
                break
            errors += out.sum(axis=0)
            frames += len(b)
    return errors, frames * K


def run_ber(mapping: MdMapping, channel: str, snrs_es_db, iterations: int = 7, min_errors: int = 100,
            max_bits: float = 2e7, seed: int = 1, interleaver_seed: int = 7, threads: int = 1,
            mapping_id: str | None = None, genie: bool = False, stop_below: float | None = None) -> SimResult:
    """Monte Carlo BER of the BICM-ID receiver after each iteration.

    Each SNR point stops once the last iteration has ``min_errors`` bit
    errors or ``max_bits`` information bits were simulated. The frames of a
    point and their random streams are fixed by ``seed``, so the result does
    not depend on ``threads``. With ``stop_below`` the scan ends after the
    first point whose final-iteration BER is below that value.

    ``genie=True`` decodes once from genie-aided demapper output (all other
    label bits known), the error-free-feedback limit of the loop.
    """
    if channel not in MODELS:
        raise ValueError(f"unknown channel {channel!r}; expected one of {MODELS}")
    if iterations < 1:
        raise ValueError("at least one iteration is required")
    if FRAME_CODED_BITS % mapping.bits:
        raise ValueError(f"frame of {FRAME_CODED_BITS} coded bits does not split into {mapping.bits}-bit labels")
    mid = mapping_id or mapping.provenance.get("source", "mapping")
    res = SimResult(mid, channel, config=dict(
        m=mapping.m, N=mapping.N, iterations=iterations, min_errors=min_errors, max_bits=int(max_bits),
        seed=seed, interleaver_seed=interleaver_seed, genie=genie, code=[oct(g) for g in DEFAULT_CODE.generators],
        frame_coded_bits=FRAME_CODED_BITS, mapping_hash=mapping.content_hash(),
        snr_axis="Es/N0 per 2-D symbol"))
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for idx, es_db in enumerate(snrs_es_db):
            job = _FrameJob(mapping.table, mapping.m, mapping.N, channel, es_n0(es_db, mapping.N),
                            1 if genie else iterations, seed, interleaver_seed, idx, genie)
            t0 = time.perf_counter()
            errors, bits = _simulate_point(job, min_errors, max_bits, pool)
            eb_db = es_to_eb_db(es_db, mapping.m)
            for it, e in enumerate(errors, start=1):
                res.points.append(BerPoint(float(es_db), eb_db, it, e / bits, bits, int(e),
                                           undersampled=bool(e < min_errors)))
            log.info("%s %s Es/N0=%.2f dB: BER %.3e (%d errors, %d bits, %.1fs)", mid, channel, es_db,
                     errors[-1] / bits, errors[-1], bits, time.perf_counter() - t0)
            if stop_below is not None and errors[-1] / bits < stop_below:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return res


def waterfall_snr(result: SimResult, target: float = 1e-4, iteration: int | None = None) -> float | None:
    """First SNR (Es/N0, dB) whose BER at ``iteration`` is below ``target``."""
    for p in sorted(result.final(iteration), key=lambda p: p.snr_es_db):
        if p.ber < target:
            return p.snr_es_db
    return None


# -- EXIT charts ------------------------------------------------------------------

_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)


def j_function(sigma: float) -> float:
    """Mutual information of a consistent Gaussian LLR with standard deviation sigma."""
    if sigma <= 0:
        return 0.0
    llr = sigma ** 2 / 2 + sigma * _GH_X
    return float(1.0 - np.sum(_GH_W * np.logaddexp(0.0, -llr)) / np.sqrt(2 * np.pi) / np.log(2))


def j_inverse(info: float) -> float:
    if info <= 0:
        return 0.0
    if info >= 1:
        raise ValueError("mutual information must be below 1")
    return float(brentq(lambda s: j_function(s) - info, 1e-9, 200.0, xtol=1e-12))


def mutual_information(llr, bits) -> float:
    """Consistency estimate 1 - E[log2(1 + exp(-L (1 - 2b)))]."""
    signed = np.asarray(llr, dtype=float) * (1 - 2 * np.asarray(bits, dtype=float))
    return float(1.0 - np.mean(np.logaddexp(0.0, -signed)) / np.log(2))


def gaussian_priors(bits, info: float, rng: np.random.Generator) -> np.ndarray:
    sigma = j_inverse(info)
    b = np.asarray(bits)
    return sigma ** 2 / 2 * (1 - 2 * b) + sigma * rng.standard_normal(b.shape)


@dataclass
class ExitCurve:
    role: str
    snr_db: float | None
    i_a: np.ndarray
    i_e: np.ndarray
    i_a_measured: np.ndarray | None = None


DEFAULT_IA_GRID = np.round(np.linspace(0.0, 0.999, 21), 6)


def exit_demapper(mapping: MdMapping, channel: str, es_db: float, ia_grid=DEFAULT_IA_GRID,
                  samples: int = EXIT_SAMPLE_FLOOR, seed: int = 3) -> ExitCurve:
    """Demapper transfer curve at one SNR from ``samples`` extrinsic LLRs per point."""
    if samples < EXIT_SAMPLE_FLOOR:
        raise ValueError(f"EXIT points need at least {EXIT_SAMPLE_FLOOR} LLR samples")
    n0 = es_n0(es_db, mapping.N)
    V = -(-samples // mapping.bits)
    pts = mapping.constellation().points
    ie, ia_meas = [], []
    for k, ia in enumerate(ia_grid):
        rng = frame_rng(seed, k, stream=1)
        labels = rng.integers(0, mapping.size, V)
        bits = mapping.label_bits()[labels]
        y, h = transmit(pts[mapping.table[labels] - 1], channel, n0, rng)
        la = gaussian_priors(bits, float(ia), rng)
        le = demap(y, h, n0, la, mapping)
        ie.append(mutual_information(le, bits))
        ia_meas.append(mutual_information(la, bits) if ia > 0 else 0.0)
    return ExitCurve("demapper", float(es_db), np.asarray(ia_grid, float), np.array(ie), np.array(ia_meas))


def exit_decoder(code: CodeSpec = DEFAULT_CODE, ia_grid=None, samples: int = EXIT_SAMPLE_FLOOR,
                 seed: int = 5) -> ExitCurve:
    """Decoder transfer curve: a-priori LLRs on coded bits in, coded-bit extrinsic out."""
    if samples < EXIT_SAMPLE_FLOOR:
        raise ValueError(f"EXIT points need at least {EXIT_SAMPLE_FLOOR} LLR samples")
    if ia_grid is None:
        ia_grid = np.round(np.linspace(0.0, 0.999, 51), 6)
    K = code.info_length(FRAME_CODED_BITS)
    frames = -(-samples // FRAME_CODED_BITS)
    ie = []
    for k, ia in enumerate(ia_grid):
        rng = frame_rng(seed, k, stream=2)
        llrs, bits = [], []
        for _ in range(frames):
            c = conv_encode(rng.integers(0, 2, K), code)
            la = gaussian_priors(c, float(ia), rng)
            ext, _ = bcjr_decode(la, code)
            llrs.append(ext)
            bits.append(c)
        ie.append(mutual_information(np.concatenate(llrs), np.concatenate(bits)))
    return ExitCurve("decoder", None, np.asarray(ia_grid, float), np.array(ie))


def tunnel_gap(demapper: ExitCurve, decoder: ExitCurve) -> float:
    """Smallest vertical distance between the demapper curve and the inverted decoder curve.

    The decoder curve maps demapper output (its input) to demapper a-priori
    (its output); inverted, it gives the demapper output needed to reach a
    given a-priori level. A positive gap over the whole grid means the
    iterative trajectory can pass from I_A = 0 to the top of the grid.
    """
    ie_dec = np.maximum.accumulate(decoder.i_e)  # enforce monotonicity against estimator noise
    need = np.interp(demapper.i_a, ie_dec, decoder.i_a, left=0.0, right=1.0)
    return float(np.min(demapper.i_e - need))


# -- error-floor bounds -----------------------------------------------------------


BOUND_FORMS = {
    "awgn": "Q(sqrt(d * dhat2_min / (2 N0)))",
    "block": "C(2d-1,d) * (4 N0 / phi_hat_br)^d",
    "fast": "C(2d-1,d) * phi_fr_after(N0)^-d",
}


@dataclass
class FloorBound:
    channel: str
    snr_es_db: np.ndarray
    bound: np.ndarray
    spectrum: dict
    parameters: dict
    form: str


def _qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def floor_bound(mapping: MdMapping, channel: str, snrs_es_db, spectrum: dict | None = None,
                code: CodeSpec = DEFAULT_CODE) -> FloorBound:
    """Union bound on the information BER under error-free feedback.

    ``spectrum`` maps output weight d to (a_d, c_d); by default the code's
    spectrum up to d_free + 10 is used. Each error event of weight d puts
    the d coded bits on distinct, independently faded symbol vectors whose
    other label bits are known, so only Hamming-1 partners compete.
    """
    if spectrum is None:
        _, spectrum = distance_spectrum(code)
    if not spectrum:
        raise ValueError("missing distance spectrum")
    snr = np.asarray(snrs_es_db, dtype=float)
    n0 = np.array([es_n0(s, mapping.N) for s in snr])
    k_c = 1  # information bits per trellis step
    total = np.zeros_like(n0)
    params: dict = {}
    if channel == "awgn":
        dh = metrics.d_hat_min_sq(mapping)
        params["d_hat_min_sq"] = dh
        for d, (_, c_d) in spectrum.items():
            total += c_d * _qfunc(np.sqrt(d * dh / (2 * n0)))
    elif channel == "block":
        ph = metrics.harmonic_after(mapping)
        params["phi_hat_br"] = ph
        for d, (_, c_d) in spectrum.items():
            total += c_d * comb(2 * d - 1, d) * (4 * n0 / ph) ** d
    elif channel == "fast":
        pf = np.atleast_1d(metrics.phi_fast(mapping, n0, "after"))
        params["phi_fr_after"] = pf.tolist()
        for d, (_, c_d) in spectrum.items():
            total += c_d * comb(2 * d - 1, d) * pf ** (-float(d))
    else:
        raise ValueError(f"unknown channel {channel!r}; expected one of {MODELS}")
    return FloorBound(channel, snr, total / k_c, dict(spectrum), params, BOUND_FORMS[channel])


# -- output files -------------------------------------------------------------------


def write_ber_csv(results, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mapping_id", "channel", "snr_es_db", "snr_eb_db", "iter", "ber", "bits", "errors"])
        for r in results:
            for p in r.points:
                w.writerow([r.mapping_id, r.channel, f"{p.snr_es_db:.4f}", f"{p.snr_eb_db:.4f}", p.iteration,
                            repr(p.ber), p.bits, p.errors])


def write_exit_csv(curves, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["I_A", "I_E", "role", "snr"])
        for c in curves:
            snr = "" if c.snr_db is None else f"{c.snr_db:.4f}"
            for a, e in zip(c.i_a, c.i_e):
                w.writerow([f"{a:.6f}", f"{e:.6f}", c.role, snr])


def write_floor_csv(bounds, path, mapping_ids=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mapping_id", "channel", "snr", "bound", "form"])
        for k, b in enumerate(bounds):
            mid = mapping_ids[k] if mapping_ids else ""
            for s, v in zip(b.snr_es_db, b.bound):
                w.writerow([mid, b.channel, f"{s:.4f}", repr(float(v)), b.form])


def write_sidecar(path, config: dict, mappings=()) -> None:
    """Reproducibility record: configuration, seeds and content hashes of the mappings used."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": _plain(config),
        "mappings": {name: mp.content_hash() for name, mp in dict(mappings).items()},
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return _plain(asdict(obj))
    return obj
