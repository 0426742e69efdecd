import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdqam import metrics
from mdqam.mapping import build_mapping, gray_mapping, random_mapping
from oracles import brute_metrics, vector_points

SMALL = [(2, 1), (2, 2), (2, 3), (2, 4), (4, 1), (4, 2), (6, 1)]
N0S = (0.05, 0.3, 2.0)


def _check_against_oracle(mp):
    ref = brute_metrics(mp, N0S)
    assert metrics.n_min(mp) == pytest.approx(ref["n_min"], rel=1e-12)
    np.testing.assert_array_equal(metrics.bit_neighbour_counts(mp), ref["neighbour_counts"])
    assert metrics.d_hat_min_sq(mp) == pytest.approx(ref["d_hat_min_sq"], rel=1e-12)
    assert metrics.harmonic_before(mp) == pytest.approx(ref["phi_br"], rel=1e-12)
    assert metrics.harmonic_after(mp) == pytest.approx(ref["phi_hat_br"], rel=1e-12)
    dist, _ = metrics.nearest_complement(mp)
    np.testing.assert_allclose(dist, ref["before_distances"], rtol=1e-12)
    for n0 in N0S:
        assert metrics.phi_fast(mp, n0, "after") == pytest.approx(ref["phi_fr_after"][n0], rel=1e-12)
        assert metrics.phi_fast(mp, n0, "before") == pytest.approx(ref["phi_fr_before"][n0], rel=1e-12)


@pytest.mark.parametrize("m,N", SMALL)
@pytest.mark.parametrize("kind", ["random", "gray"])
def test_matches_brute_force(m, N, kind):
    mp = random_mapping(m, N, 17) if kind == "random" or N > 1 else gray_mapping(m)
    _check_against_oracle(mp)


def test_proposed_small_mapping_matches_brute_force():
    _check_against_oracle(build_mapping(4, 2))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_random_four_d_mappings_match_brute_force(seed):
    _check_against_oracle(random_mapping(4, 2, 1000 + seed))


@pytest.mark.parametrize("m,N", SMALL)
def test_neighbour_counts_sum_to_nearest_hamming_total(m, N):
    mp = random_mapping(m, N, 5)
    X = vector_points(mp)
    d = np.sum(np.abs(X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    a, b = np.nonzero(np.isclose(d, mp.constellation().d1_sq))
    hamming = sum(bin(int(x)).count("1") for x in a ^ b)
    assert metrics.bit_neighbour_counts(mp).sum() == hamming
    assert metrics.n_min(mp) == pytest.approx(hamming / a.size)


@pytest.mark.parametrize("m,N", [(4, 2), (4, 3), (6, 2)])
@pytest.mark.parametrize("variant", ["before", "after"])
def test_spectrum_covers_every_label_bit(m, N, variant):
    mp = build_mapping(m, N)
    dset, counts = metrics.n_spectrum(mp, variant=variant)
    assert counts.sum() == m * N * 2 ** (m * N)
    assert np.all(np.diff(dset) > 0)
    ref = metrics.harmonic_before(mp) if variant == "before" else metrics.harmonic_after(mp)
    assert metrics.harmonic_from_spectrum(dset, counts) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("m,N,n_min,dhat,phi_br,phi_hat", [
    (4, 2, 2.25, 2.4, 0.21513, 2.84908),
])
def test_proposed_four_d_anchor(m, N, n_min, dhat, phi_br, phi_hat):
    mp = build_mapping(m, N)
    assert metrics.n_min(mp) == pytest.approx(n_min, rel=1e-9)
    assert metrics.d_hat_min_sq(mp) == pytest.approx(dhat, rel=1e-9)
    assert metrics.harmonic_before(mp) == pytest.approx(phi_br, abs=5e-6)
    assert metrics.harmonic_after(mp) == pytest.approx(phi_hat, abs=5e-6)


def test_proposed_four_d_fast_fading_anchor():
    mp = build_mapping(4, 2)
    n0 = metrics.SNR_CONVENTIONS["per-info-bit"]([2.0, 10.0], 4, 2)
    np.testing.assert_allclose(metrics.phi_fast(mp, n0, "after"), [10.2121, 209.861], rtol=1e-5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.25, 4.0))
def test_distance_metrics_scale_with_energy(seed, factor):
    mp = random_mapping(4, 2, seed)
    c = mp.constellation().rescaled(np.sqrt(factor))
    assert metrics.harmonic_after(mp, c) == pytest.approx(factor * metrics.harmonic_after(mp), rel=1e-12)
    assert metrics.harmonic_before(mp, c) == pytest.approx(factor * metrics.harmonic_before(mp), rel=1e-12)
    assert metrics.d_hat_min_sq(mp, c) == pytest.approx(factor * metrics.d_hat_min_sq(mp), rel=1e-12)
    # N_min is a ratio of counts and does not move
    assert metrics.n_min(mp, c) == pytest.approx(metrics.n_min(mp))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_feedback_never_shrinks_distances(seed):
    mp = random_mapping(4, 2, seed)
    assert metrics.harmonic_after(mp) >= metrics.harmonic_before(mp)
    n0 = np.array([0.01, 0.1, 1.0])
    assert np.all(metrics.phi_fast(mp, n0, "after") >= metrics.phi_fast(mp, n0, "before") * (1 - 1e-12))


@pytest.mark.parametrize("variant", ["before", "after"])
def test_fast_metric_limits(variant):
    mp = build_mapping(4, 2)
    assert metrics.phi_fast(mp, 1e9, variant) == pytest.approx(1.0, abs=1e-6)
    n0 = np.logspace(-3, 1, 9)
    vals = metrics.phi_fast(mp, n0, variant)
    assert np.all(np.diff(vals) < 0)


def test_fast_metric_rejects_nonpositive_noise():
    with pytest.raises(ValueError):
        metrics.phi_fast(build_mapping(4, 2), 0.0)


def test_unknown_variant():
    with pytest.raises(ValueError):
        metrics.n_spectrum(build_mapping(4, 2), variant="sideways")


def test_calibration_identifies_one_convention():
    rows = metrics.calibrate_snr_convention(build_mapping(4, 2), 2.0, 10.212)
    matches = [(name, variant) for name, variant, _, _, ok in rows if ok]
    assert matches == [("per-info-bit", "after")]


def test_compute_metrics_is_consistent():
    mp = build_mapping(4, 3)
    res = metrics.compute_metrics(mp)
    assert res.n_min == pytest.approx(metrics.n_min(mp))
    assert res.phi_br_after == pytest.approx(metrics.harmonic_after(mp))
    assert res.phi_br_before == pytest.approx(metrics.harmonic_before(mp))
    assert res.n_spectrum_after.sum() == mp.bits * mp.size
    assert set(res.phi_fr) == {2.0, 10.0}
