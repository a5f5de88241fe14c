import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covermod.pixel_store import partition_tuples
from covermod.simulate import random_flips
from covermod.trace_algebra import (SingularKernelError, SubsetLabel, TupleCensus, all_keys, census,
                                    classify_tuple, decode_key, encode_keys, enumerate_subsets,
                                    hamming_table, key_count, label_location, parity_pairs,
                                    scaled_inverse_basis, subset_index, trace_key, transition_kernel)


def test_classify_examples():
    key, label = classify_tuple((4, 5))
    assert key == (0,) and str(label) == "E_{1}"
    key, label = classify_tuple((5, 4))
    assert key == (0,) and str(label) == "O_{-1}"
    key, label = classify_tuple((4, 5, 7))
    assert key == (0, 1) and str(label) == "E_{1,2}"


def test_subset_index_puts_first_sample_in_lowest_bit():
    assert subset_index((4, 4)) == 0
    assert subset_index((5, 4)) == 1
    assert subset_index((4, 5)) == 2
    assert subset_index((5, 5, 5)) == 7


def test_pair_subsets_in_order():
    labels = [str(s) for s in enumerate_subsets((0,))]
    assert labels == ["E_{0}", "O_{-1}", "E_{1}", "O_{0}"]


@pytest.mark.parametrize("m,n", [(0, 0), (2, -1), (-3, 4)])
def test_triplet_subsets_match_hand_list(m, n):
    want = [("E", 2 * m, 2 * n), ("O", 2 * m - 1, 2 * n), ("E", 2 * m + 1, 2 * n - 1), ("O", 2 * m, 2 * n - 1),
            ("E", 2 * m, 2 * n + 1), ("O", 2 * m - 1, 2 * n + 1), ("E", 2 * m + 1, 2 * n), ("O", 2 * m, 2 * n)]
    got = [(s.parity, *s.diffs) for s in enumerate_subsets((m, n))]
    assert got == want


@pytest.mark.parametrize("g", [2, 3, 4, 6])
def test_enumeration_agrees_with_canonical_index(g):
    rng = np.random.default_rng(g)
    for _ in range(20):
        key = tuple(int(k) for k in rng.integers(-4, 5, size=g - 1))
        labels = enumerate_subsets(key)
        assert len(labels) == 2 ** g
        assert len(set(labels)) == 2 ** g
        for i, lab in enumerate(labels):
            assert label_location(lab) == (key, i)


def test_enumerate_rejects_bad_order():
    with pytest.raises(ValueError):
        enumerate_subsets((0, 0), g=2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=2, max_size=6))
def test_classification_round_trips(values):
    key, label = classify_tuple(values)
    assert label_location(label) == (key, subset_index(values))
    assert trace_key(np.array(values) ^ 1) == key


@pytest.mark.parametrize("g", [1, 2, 3, 6])
def test_kernel_inverse(g):
    rng = np.random.default_rng(7)
    for p in rng.uniform(0.001, 0.499, size=5):
        k = transition_kernel(g, p)
        assert np.abs(k.matrix @ k.inverse - np.eye(2 ** g)).max() < 1e-10
        assert np.allclose(k.matrix.sum(axis=0), 1.0)
        assert np.allclose(k.matrix, k.matrix.T)
    assert np.array_equal(transition_kernel(g, 0.0).matrix, np.eye(2 ** g))


def test_kernel_is_kronecker_power():
    p = 0.3
    t1 = transition_kernel(1, p).matrix
    t3 = transition_kernel(3, p).matrix
    assert np.allclose(t3, np.kron(t1, np.kron(t1, t1)))


def test_pair_kernel_entries():
    p = 0.2
    t = transition_kernel(2, p).matrix
    # E_{2m} (index 0) is reached from O_{2m} (index 3) by flipping both samples
    assert t[0, 3] == pytest.approx(p * p)
    assert t[0, 1] == pytest.approx(p * (1 - p))
    assert t[0, 0] == pytest.approx((1 - p) ** 2)


def test_kernel_singular_and_range():
    with pytest.raises(SingularKernelError):
        transition_kernel(2, 0.5)
    assert transition_kernel(2, 0.5, inverse=False).inverse is None
    with pytest.raises(ValueError):
        transition_kernel(2, 1.5)
    with pytest.raises(ValueError):
        transition_kernel(0, 0.1)


def test_scaled_inverse_basis():
    p = 0.15
    g = 3
    basis = scaled_inverse_basis(g, p)
    inv = transition_kernel(g, p).inverse
    assert np.allclose(basis[hamming_table(g)] / (1 - 2 * p) ** g, inv)
    assert np.all(np.isfinite(scaled_inverse_basis(g, 0.5)))
    assert hamming_table(2).tolist() == [[0, 1, 1, 2], [1, 0, 2, 1], [1, 2, 0, 1], [2, 1, 1, 0]]


def test_flip_frequencies_small_oracle():
    rng = np.random.default_rng(0)
    p = 0.25
    start = np.array([[10, 13]] * 40000)
    moved = random_flips(start, p, rng)
    _, idx0 = classify_tuple(start[0])
    counts = np.bincount([subset_index(v) for v in moved[:4000]], minlength=4) / 4000
    col = transition_kernel(2, p).matrix[:, subset_index(start[0])]
    assert np.all(np.abs(counts - col) < 4 * np.sqrt(col * (1 - col) / 4000) + 1e-12)


def test_key_codes():
    assert key_count(2, 5) == 11
    assert key_count(3, 5) == 121
    codes = encode_keys(np.array([[-5, -5], [5, 5], [0, 6]]), 5)
    assert codes.tolist() == [0, 120, -1]
    assert decode_key(0, 3, 5) == (-5, -5)
    assert all_keys(2, 1) == [(-1,), (0,), (1,)]


def test_census_examples():
    cen = census(np.array([[4, 5], [5, 4], [4, 5], [0, 40]]))
    assert cen.get((0,)).tolist() == [0, 1, 2, 0]
    assert cen.overflow == 1
    assert cen.total() == 4
    empty = census(np.zeros((0, 2), dtype=np.uint8))
    assert empty.total() == 0 and not empty.counts.any()


def test_census_json_round_trip(rng):
    vals = rng.integers(0, 256, size=(500, 3))
    vals[:, 1] = np.clip(vals[:, 0] + rng.integers(-6, 7, size=500), 0, 255)
    vals[:, 2] = np.clip(vals[:, 1] + rng.integers(-6, 7, size=500), 0, 255)
    cen = census(vals)
    back = TupleCensus.from_json(cen.to_json())
    assert np.array_equal(back.counts, cen.counts)
    assert back.overflow == cen.overflow


def test_census_sparse_matches_dense(rng):
    vals = np.cumsum(rng.integers(-2, 3, size=(300, 3)), axis=1) + 100
    dense = census(vals, sparse=False)
    sparse = census(vals, sparse=True)
    for key, row in zip(sparse.keys(), sparse.counts):
        assert np.array_equal(dense.get(key), row)
    assert sparse.total() == dense.total()


def test_census_addition(rng):
    a = census(rng.integers(0, 256, size=(100, 2)))
    b = census(rng.integers(0, 256, size=(80, 2)))
    s = a + b
    assert s.total() == 180
    assert np.array_equal(s.counts, a.counts + b.counts)
    with pytest.raises(ValueError):
        a + census(rng.integers(0, 256, size=(5, 3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), order=st.sampled_from([2, 3]), p=st.floats(0.0, 1.0))
def test_closure_under_flipping(seed, order, p):
    rng = np.random.default_rng(seed)
    grid = rng.integers(0, 256, size=(8, 12), dtype=np.uint8)
    before = census(partition_tuples(grid, 0, order))
    after = census(partition_tuples(random_flips(grid, p, rng), 0, order))
    assert np.array_equal(before.totals(), after.totals())
    assert before.overflow == after.overflow


def test_parity_pairs():
    pp = parity_pairs(2)
    # E_{2m+1} sits at index 2 of key m, O_{2m+1} at index 1 of key m+1
    assert pp.shape == (10, 4)
    for ce, ie, co, io in pp:
        assert (ie, io) == (2, 1) and co == ce + 1
    assert parity_pairs(3).shape == (100, 4)
    for d in itertools.product([-3, 1, 5], repeat=2):
        ke, ie = label_location(SubsetLabel("E", d))
        ko, io = label_location(SubsetLabel("O", d))
        assert ke != ko
