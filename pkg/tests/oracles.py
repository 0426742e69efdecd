"""Naive reference implementations used to check the fast code paths.

Everything here works on the full 2^{mN} x 2^{mN} table of vector pairs and
is only meant for small mappings.
"""

import itertools

import numpy as np
from scipy.special import logsumexp

from mdqam.constellation import build_qam


def vector_points(mapping):
    c = build_qam(mapping.m, mapping.N)
    return c.points[mapping.table - 1]  # (L, N)


def label_bit_matrix(nbits):
    labels = np.arange(1 << nbits)
    return (labels[:, None] >> np.arange(nbits - 1, -1, -1)) & 1


def brute_metrics(mapping, n0s=()):
    X = vector_points(mapping)
    L, N = X.shape
    nbits = mapping.bits
    per_coord = np.abs(X[:, None, :] - X[None, :, :]) ** 2  # (L, L, N)
    total = per_coord.sum(-1)
    d1 = build_qam(mapping.m, mapping.N).d1_sq
    bits = label_bit_matrix(nbits)
    labels = np.arange(L)
    nearest = np.isclose(total, d1)
    hamming = np.array([[bin(a ^ b).count("1") for b in range(L)] for a in range(L)])
    out = {
        "n_min": hamming[nearest].sum() / nearest.sum(),
        "neighbour_counts": np.zeros((L, nbits), dtype=int),
    }
    inv_before, inv_after = [], []
    fr_before = {n0: [] for n0 in n0s}
    fr_after = {n0: [] for n0 in n0s}
    d_after = []
    for i in range(nbits):
        differs = bits[:, i][:, None] != bits[:, i][None, :]
        out["neighbour_counts"][:, i] = (nearest & differs).sum(1)
        masked = np.where(differs, total, np.inf)
        closest = masked.min(1)
        inv_before.append(1.0 / closest)
        partner = labels ^ (1 << (nbits - 1 - i))
        d_after.append(total[labels, partner])
        inv_after.append(1.0 / total[labels, partner])
        for n0 in n0s:
            terms = np.prod(1.0 / (1.0 + per_coord / (4.0 * n0)), axis=-1)
            fr_after[n0].append(terms[labels, partner])
            tied = np.isclose(masked, closest[:, None])
            fr_before[n0].append(np.where(tied, terms, -np.inf).max(1))
    out["d_hat_min_sq"] = float(np.min(d_after))
    out["phi_br"] = 1.0 / np.mean(inv_before)
    out["phi_hat_br"] = 1.0 / np.mean(inv_after)
    out["before_distances"] = 1.0 / np.array(inv_before).T
    out["phi_fr_after"] = {n0: 1.0 / np.mean(v) for n0, v in fr_after.items()}
    out["phi_fr_before"] = {n0: 1.0 / np.mean(v) for n0, v in fr_before.items()}
    return out


def brute_demap(y, h, n0, la, mapping):
    """Probability-domain extrinsic LLRs in extended precision."""
    X = vector_points(mapping)
    bits = label_bit_matrix(mapping.bits)
    out = np.empty((y.shape[0], mapping.bits))
    for v in range(y.shape[0]):
        metric = -np.sum(np.abs(y[v] - h[v] * X) ** 2, axis=1) / n0
        prior = np.sum(0.5 * la[v] * (1 - 2 * bits), axis=1)
        p = np.exp((metric + prior).astype(np.longdouble))
        for i in range(mapping.bits):
            p0 = p[bits[:, i] == 0].sum()
            p1 = p[bits[:, i] == 1].sum()
            out[v, i] = float(np.log(p0) - np.log(p1)) - la[v, i]
    return out


def brute_app(llr, code, info_bits):
    """Exact coded- and info-bit APP LLRs by enumerating every terminated codeword.

    Candidate codewords are encoded with an independent shift-register loop.
    """
    from mdqam.fec import conv_encode  # noqa: F401  (only the tap layout is shared)

    K = info_bits
    K_total = K + code.memory
    taps = code.taps
    # all 2^K information words, MSB first
    words = ((np.arange(1 << K)[:, None] >> np.arange(K - 1, -1, -1)) & 1).astype(np.int8)
    words = np.concatenate([words, np.zeros((words.shape[0], code.memory), dtype=np.int8)], axis=1)
    reg = np.zeros((words.shape[0], code.memory + 1), dtype=np.int8)
    coded = np.empty((words.shape[0], K_total * code.n_out), dtype=np.int8)
    for t in range(K_total):
        reg = np.concatenate([words[:, t:t + 1], reg[:, :-1]], axis=1)
        for r in range(code.n_out):
            coded[:, t * code.n_out + r] = (reg @ taps[r]) % 2
    metric = (0.5 * llr[None, :] * (1 - 2 * coded.astype(float))).sum(axis=1)
    app_coded = np.array([logsumexp(metric[coded[:, j] == 0]) - logsumexp(metric[coded[:, j] == 1])
                          for j in range(coded.shape[1])])
    app_info = np.array([logsumexp(metric[words[:, t] == 0]) - logsumexp(metric[words[:, t] == 1])
                         for t in range(K)])
    return app_coded, app_info


def brute_spectrum(code, max_info_len, max_weight):
    """Error events found by encoding every input that starts and ends with a 1."""
    spec = {}
    nxt, out = code.trellis
    for length in range(1, max_info_len + 1):
        for middle in itertools.product((0, 1), repeat=max(0, length - 2)):
            u = (1,) + middle + ((1,) if length > 1 else ())
            # reject inputs that return to the zero state before the end
            state, weight, merged_early = 0, 0, False
            seq = list(u) + [0] * code.memory
            for t, bit in enumerate(seq):
                weight += int(out[state, bit].sum())
                state = int(nxt[state, bit])
                if state == 0 and t < len(u) - 1:
                    merged_early = True
                    break
            if merged_early or weight > max_weight:
                continue
            a, c = spec.get(weight, (0, 0))
            spec[weight] = (a + 1, c + sum(u))
    return spec
