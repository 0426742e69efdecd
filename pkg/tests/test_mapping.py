import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdqam import metrics
from mdqam.constellation import build_qam
from mdqam.mapping import (
    BASE_QPSK_GENERATORS,
    MdMapping,
    build_mapping,
    build_step_mapping,
    construct_base_qpsk_map,
    gf2_rank,
    gray_mapping,
    label_slices,
    load_mapping,
    map_label,
    map_step1,
    random_mapping,
    save_mapping,
    select_beta,
    step_tables,
    transform_step,
    verify_selection_principles,
)

FIXTURES = Path(__file__).parent / "fixtures"


def table_vi():
    return np.array(json.loads((FIXTURES / "table_vi.json").read_text())["entries"])


# -- constants --------------------------------------------------------------------


def test_step_tables_anchor_values():
    t16, t64 = step_tables(4), step_tables(6)
    assert t16.gamma == (11, 3, 1, 9)
    assert t64.gamma == (37, 5, 1, 33)
    assert t16.betas_for_step(2)["O1"] == (12, 10, 4, 2)
    assert t16.alpha_for_step(1) == (1, 3, 9, 11)
    assert t64.betas_for_step(3)["E1"] == (17, 19, 21, 23, 49, 51, 53, 55)
    assert t64.alpha_for_step(1) == (1, 5, 33, 37)


def test_step_tables_reject_other_orders():
    with pytest.raises(ValueError):
        step_tables(5)


@pytest.mark.parametrize("m", [4, 6])
def test_alpha_chain_is_nested(m):
    t = step_tables(m)
    alphas = [set(t.alpha_for_step(i)) for i in range(1, m)]
    for small, big in zip(alphas, alphas[1:]):
        assert small < big
    assert alphas[-1] == set(range(1, (1 << m) + 1))


@pytest.mark.parametrize("m", [4, 6])
def test_beta_structure(m):
    t = step_tables(m)
    for i in range(2, m):
        alpha_i = set(t.alpha_for_step(i))
        betas = t.betas_for_step(i)
        assert betas["E0"] == t.alpha_for_step(i - 1)
        for name, vec in betas.items():
            assert len(vec) == 1 << i, name
            assert len(set(vec)) == len(vec), name
            assert set(vec) <= alpha_i, name
        assert set(betas["E0"]) | set(betas["E1"]) == alpha_i
        assert set(betas["O0"]) | set(betas["O1"]) == alpha_i


@pytest.mark.parametrize("m", [4, 6])
def test_selection_principles_hold(m):
    assert verify_selection_principles(m) == []


def test_selection_principles_flag_a_poor_subset():
    problems = verify_selection_principles(4, [(1, 2, 5, 6), (1, 2, 3, 4, 5, 6, 7, 8)])
    assert any("MSED" in p for p in problems)


def test_sixteen_qam_step_two_candidates_tie():
    # both the column-pair and the checkerboard-row choice reach the same MSED
    assert verify_selection_principles(4, [(1, 3, 9, 11), (1, 3, 5, 7, 9, 11, 13, 15)]) == []


# -- base MD-QPSK map ----------------------------------------------------------------


@pytest.mark.parametrize("N", [2, 3])
def test_base_map_properties(N):
    base = construct_base_qpsk_map(N)
    assert gf2_rank(BASE_QPSK_GENERATORS[N]) == 2 * N
    vectors = {tuple(v) for v in base.table}
    assert len(vectors) == 4 ** N
    assert tuple(base.table[0]) == (3,) * N
    # flipping one label bit flips at least 2N-1 Gray bits, each worth squared distance 2
    qpsk = np.exp(1j * np.pi * np.arange(1, 5) / 2)
    pts = qpsk[base.table - 1]
    labels = np.arange(4 ** N)
    dhat = min(np.min(np.sum(np.abs(pts - pts[labels ^ (1 << b)]) ** 2, axis=1)) for b in range(2 * N))
    assert dhat == pytest.approx((2 * N - 1) * 2.0)


def test_base_map_example_vector():
    base = construct_base_qpsk_map(2)
    assert list(base.table[0b0111]) == [4, 2]


def test_base_map_unsupported_n():
    with pytest.raises(ValueError):
        construct_base_qpsk_map(4)


# -- construction steps -----------------------------------------------------------------


def test_step_one_conversion():
    base = construct_base_qpsk_map(2)
    assert map_step1([0, 1, 1, 1], base, step_tables(4).gamma) == [9, 3]
    assert map_step1([0, 1, 1, 1], base, step_tables(6).gamma) == [33, 5]
    assert map_step1([0, 0, 0, 0], base, step_tables(4).gamma) == [1, 1]


@pytest.mark.parametrize("b,k,name", [([1, 0], 1, "O1"), ([1, 0], 2, "O0"), ([1, 1], 1, "E1"),
                                      ([1, 1], 2, "E1"), ([0, 0], 1, "E0")])
def test_select_beta(b, k, name):
    assert select_beta(b, k) == name


def test_transform_steps_worked_example():
    t = step_tables(4)
    j2 = transform_step([9, 3], [1, 0], list(t.alpha_for_step(1)), t.betas_for_step(2))
    assert j2 == [4, 9]
    j3 = transform_step(j2, [1, 1], list(t.alpha_for_step(2)), t.betas_for_step(3))
    assert j3 == [8, 13]


@pytest.mark.parametrize("m", [4, 6])
def test_zero_bits_keep_position(m):
    t = step_tables(m)
    for i in range(2, m):
        alpha_prev = list(t.alpha_for_step(i - 1))
        for j in alpha_prev:
            assert transform_step([j, j], [0, 0], alpha_prev, t.betas_for_step(i)) == [j, j]


def test_transform_rejects_index_outside_subset():
    t = step_tables(4)
    with pytest.raises(ValueError):
        transform_step([2, 3], [0, 1], list(t.alpha_for_step(1)), t.betas_for_step(2))


def test_label_slices_bit_order():
    a1, bs = label_slices(231, 4, 2)
    assert a1 == [0, 1, 1, 1]
    assert bs == [[1, 0], [1, 1]]


def test_label_231_worked_example():
    assert map_label(231, 4, 2) == [8, 13]
    assert build_mapping(4, 2)[231] == (8, 13)


def test_table_vi_reproduced_exactly():
    mp = build_mapping(4, 2)
    expected = table_vi()
    got = np.empty((16, 16), dtype=int)
    for label, (j1, j2) in enumerate(mp.table):
        got[j1 - 1, j2 - 1] = label
    np.testing.assert_array_equal(got, expected)


@pytest.mark.parametrize("m,N", [(4, 2), (4, 3), (6, 2)])
def test_vectorized_build_matches_per_label(m, N):
    mp = build_mapping(m, N)
    labels = np.random.default_rng(0).choice(mp.size, 200, replace=False)
    for label in labels:
        assert list(mp.table[label]) == map_label(int(label), m, N)


@pytest.mark.parametrize("m,N", [(4, 2), (4, 3), (6, 2), (6, 3)])
def test_intermediate_steps_bijective_and_distance_preserving(m, N):
    t = step_tables(m)
    c = build_qam(m, N)
    dhat_first = None
    for step in range(1, m):
        table = build_step_mapping(m, N, step)
        alpha = set(t.alpha_for_step(step))
        assert set(np.unique(table)) <= alpha
        assert len({tuple(v) for v in table}) == len(alpha) ** N == table.shape[0]
        pts = c.points[table - 1]
        nbits = (step + 1) * N
        labels = np.arange(table.shape[0])
        dhat = min(np.min(np.sum(np.abs(pts - pts[labels ^ (1 << b)]) ** 2, axis=1)) for b in range(nbits))
        if dhat_first is None:
            dhat_first = dhat
        assert dhat >= dhat_first - 1e-12


def test_build_is_deterministic():
    assert build_mapping(6, 2) == build_mapping(6, 2)


def test_build_rejects_unsupported_dimension():
    with pytest.raises(ValueError):
        build_mapping(4, 4)


# -- container, baselines and file format ----------------------------------------------


def test_rejects_duplicate_vectors():
    table = build_mapping(4, 2).table.copy()
    table[1] = table[0]
    with pytest.raises(ValueError, match="bijective"):
        MdMapping(4, 2, table)


def test_rejects_bad_shape_and_range():
    with pytest.raises(ValueError):
        MdMapping(4, 2, np.ones((10, 2), dtype=int))
    table = build_mapping(4, 2).table.copy()
    table[0, 0] = 17
    with pytest.raises(ValueError):
        MdMapping(4, 2, table)


def test_inverse_and_label_of():
    mp = build_mapping(4, 3)
    for label in (0, 1, 777, mp.size - 1):
        assert mp.label_of(mp[label]) == label


def test_random_mapping_seeded():
    a, b = random_mapping(4, 2, 11), random_mapping(4, 2, 11)
    assert a == b
    assert a != random_mapping(4, 2, 12)


def test_random_mapping_minimum_distance():
    assert metrics.d_hat_min_sq(random_mapping(4, 2, 3)) == pytest.approx(0.2)


@pytest.mark.parametrize("m", [2, 4, 6])
def test_gray_mapping_has_unit_nmin(m):
    assert metrics.n_min(gray_mapping(m)) == pytest.approx(1.0)


def test_save_load_round_trip(tmp_path):
    mp = build_mapping(4, 3)
    path = tmp_path / "map.json"
    save_mapping(mp, path, seed=5)
    back = load_mapping(path)
    assert back == mp
    assert back.provenance["seed"] == 5
    # whitespace does not matter to the loader
    doc = json.loads(path.read_text())
    path.write_text(json.dumps(doc))
    assert load_mapping(path) == mp


def test_table_vi_fixture_loads_as_mapping(tmp_path):
    entries = [None] * 256
    for r, row in enumerate(table_vi()):
        for c, label in enumerate(row):
            entries[label] = [r + 1, c + 1]
    path = tmp_path / "vi.json"
    path.write_text(json.dumps({"format_version": 1, "m": 4, "N": 2, "entries": entries}))
    assert load_mapping(path) == build_mapping(4, 2)


def test_load_rejects_duplicates_and_garbage(tmp_path):
    mp = build_mapping(4, 2)
    path = tmp_path / "bad.json"
    save_mapping(mp, path)
    doc = json.loads(path.read_text())
    doc["entries"][3] = doc["entries"][4]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="bijective"):
        load_mapping(path)
    path.write_text("{not json")
    with pytest.raises(ValueError, match="malformed"):
        load_mapping(path)
    path.write_text(json.dumps({"m": 4, "N": 2}))
    with pytest.raises(ValueError, match="entries"):
        load_mapping(path)
    path.write_text(json.dumps({"m": 4, "N": 2, "entries": [], "format_version": 99}))
    with pytest.raises(ValueError, match="format_version"):
        load_mapping(path)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(256)))
def test_relabeling_stays_bijective(perm):
    mp = build_mapping(4, 2).relabeled(np.array(perm))
    assert len({tuple(v) for v in mp.table}) == 256
    for old, new in list(enumerate(perm))[:16]:
        assert mp[new] == build_mapping(4, 2)[old]


def test_content_hash_tracks_table():
    a = build_mapping(4, 2)
    assert a.content_hash() == build_mapping(4, 2).content_hash()
    assert a.content_hash() != random_mapping(4, 2, 0).content_hash()
