import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robusthash.mainstay import (MainstayCache, MainstayError,
                                 WeightedNeighborhood, brute_force_mainstay,
                                 build_neighborhood, label_cosine,
                                 mainstay_code, mainstay_for_label, psi)


def random_neighborhood(rng, k, max_side=25, allow_empty_neg=True):
    n_pos = int(rng.integers(1, max_side + 1))
    n_neg = int(rng.integers(0 if allow_empty_neg else 1, max_side + 1))
    pm = np.array([-1, 1], dtype=np.int8)
    return WeightedNeighborhood(
        positive_codes=rng.choice(pm, size=(n_pos, k)),
        positive_weights=rng.random(n_pos),
        negative_codes=rng.choice(pm, size=(n_neg, k)),
        negative_weights=rng.random(n_neg),
    )


class TestLabelCosine:
    def test_identical_labels(self):
        assert label_cosine([1, 0, 1], [1, 0, 1]) == 1.0

    def test_disjoint_labels(self):
        assert label_cosine([1, 0, 0], [0, 1, 0]) == 0.0

    def test_partial_overlap(self):
        assert abs(label_cosine([1, 1, 0], [1, 0, 0]) - 1 / np.sqrt(2)) < 1e-12

    def test_zero_label_rejected(self):
        with pytest.raises(MainstayError, match="all-zero"):
            label_cosine([0, 0], [1, 0])


class TestBuildNeighborhood:
    def test_one_positive_one_negative_weights(self):
        codes = np.array([[1, 1], [-1, -1]], dtype=np.int8)
        labels = np.array([[1, 1], [0, 0]])
        labels = np.array([[1, 0], [0, 1]])
        nbhd = build_neighborhood([1, 0], codes, labels)
        assert nbhd.n_positives == 1 and nbhd.n_negatives == 1
        assert np.allclose(nbhd.positive_weights, [1.0])
        assert np.allclose(nbhd.negative_weights, [1.0])

    def test_positive_weights_are_scaled_cosines(self):
        codes = np.array([[1, 1], [1, -1]], dtype=np.int8)
        labels = np.array([[1, 0, 0], [1, 1, 0]])
        nbhd = build_neighborhood([1, 0, 0], codes, labels)
        # cosines 1.0 and 1/sqrt(2), each divided by N_p = 2
        assert np.allclose(nbhd.positive_weights, [0.5, 0.5 / np.sqrt(2)])
        assert nbhd.n_negatives == 0 and nbhd.degenerate

    def test_all_positive_database_sets_degenerate_flag(self):
        codes = np.ones((3, 4), dtype=np.int8)
        labels = np.tile([1, 0], (3, 1))
        nbhd = build_neighborhood([1, 0], codes, labels)
        assert nbhd.degenerate and nbhd.n_negatives == 0

    def test_empty_database_rejected(self):
        with pytest.raises(MainstayError, match="empty"):
            build_neighborhood([1], np.empty((0, 4)), np.empty((0, 1)))


class TestPsi:
    def test_matching_single_positive_is_zero(self):
        code = np.array([1, -1, 1, 1], dtype=np.int8)
        nbhd = WeightedNeighborhood(code[None], np.ones(1),
                                    np.empty((0, 4)), np.empty(0))
        assert psi(code, nbhd) == 0.0

    def test_antipodal_single_positive_is_k(self):
        code = np.array([1, 1, 1, 1], dtype=np.int8)
        nbhd = WeightedNeighborhood(code[None], np.ones(1),
                                    np.empty((0, 4)), np.empty(0))
        assert psi(-code, nbhd) == 4.0

    def test_inner_product_identity(self, rng):
        # psi == -1/2 sum_k b_k * accumulator_k + (K/2)(sum w_pos - sum w_neg)
        for _ in range(20):
            k = int(rng.integers(2, 10))
            nbhd = random_neighborhood(rng, k)
            code = rng.choice(np.array([-1, 1], dtype=np.int8), size=k)
            acc = (nbhd.positive_weights @ nbhd.positive_codes.astype(float)
                   - (nbhd.negative_weights @ nbhd.negative_codes.astype(float)
                      if nbhd.n_negatives else 0.0))
            offset = 0.5 * k * (nbhd.positive_weights.sum()
                                - nbhd.negative_weights.sum())
            assert abs(psi(code, nbhd) - (-0.5 * code @ acc + offset)) < 1e-10


class TestMainstayCode:
    def test_single_positive_returns_it(self):
        code = np.array([1, -1, -1, 1], dtype=np.int8)
        nbhd = WeightedNeighborhood(code[None], np.ones(1),
                                    np.empty((0, 4)), np.empty(0))
        assert np.array_equal(mainstay_code(nbhd).code, code)

    def test_hand_accumulated_two_codes(self):
        nbhd = WeightedNeighborhood(
            np.array([[1, 1]], dtype=np.int8), np.array([1.0]),
            np.array([[-1, 1]], dtype=np.int8), np.array([0.5]),
        )
        # accumulator [1.5, 0.5] -> [+1, +1]
        assert np.array_equal(mainstay_code(nbhd).code, [1, 1])

    def test_tie_resolves_positive(self):
        nbhd = WeightedNeighborhood(
            np.array([[1, 1]], dtype=np.int8), np.array([1.0]),
            np.array([[-1, 1]], dtype=np.int8), np.array([1.0]),
        )
        # accumulator [2, 0]: bit 2 ties and takes +1
        assert np.array_equal(mainstay_code(nbhd).code, [1, 1])

    def test_empty_neighborhood_rejected(self):
        nbhd = WeightedNeighborhood(np.empty((0, 4)), np.empty(0),
                                    np.empty((0, 4)), np.empty(0))
        with pytest.raises(MainstayError, match="neither"):
            mainstay_code(nbhd)

    @given(st.integers(2, 10), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_closed_form_equals_exhaustive_minimum(self, k, seed):
        rng = np.random.default_rng(seed)
        nbhd = random_neighborhood(rng, k, max_side=8)
        closed = mainstay_code(nbhd)
        brute = brute_force_mainstay(nbhd)
        assert closed.psi_value == brute.psi_value

    def test_identical_positives_dominate(self):
        b = np.array([1, -1, 1, -1], dtype=np.int8)
        nbhd = WeightedNeighborhood(
            np.stack([b, b]), np.array([0.5, 0.5]),
            np.array([[-1, -1, -1, -1]], dtype=np.int8), np.array([1e-6]),
        )
        assert np.array_equal(mainstay_code(nbhd).code, b)

    def test_brute_force_bit_limit(self, rng):
        nbhd = random_neighborhood(rng, 21)
        with pytest.raises(MainstayError, match="limited"):
            brute_force_mainstay(nbhd)


class TestCache:
    def test_single_label_dataset_matches_per_sample(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(20, 8))
        labels = np.zeros((20, 3), dtype=np.uint8)
        labels[:7, 0] = 1
        labels[7:14, 1] = 1
        labels[14:, 2] = 1
        cache = MainstayCache(codes, labels)
        for y in np.unique(labels, axis=0):
            direct = mainstay_for_label(y, codes, labels)
            assert np.array_equal(cache.for_label(y).code, direct.code)

    def test_cache_hit_is_identical(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10, 6))
        labels = np.tile([1, 0], (10, 1))
        labels[5:] = [0, 1]
        cache = MainstayCache(codes, labels)
        first = cache.for_label([1, 0])
        assert cache.for_label([1, 0]) is first

    def test_for_labels_stacks_per_row(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10, 6))
        labels = np.repeat(np.eye(2, dtype=np.uint8), 5, axis=0)
        cache = MainstayCache(codes, labels)
        stacked = cache.for_labels(labels[:3])
        assert stacked.shape == (3, 6)
        assert np.array_equal(stacked[0], cache.for_label(labels[0]).code)

    def test_label_without_positives_rejected(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(4, 6))
        labels = np.tile([1, 0], (4, 1))
        cache = MainstayCache(codes, labels)
        with pytest.raises(MainstayError, match="no positive"):
            cache.for_label([0, 1])
