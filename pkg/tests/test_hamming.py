import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robusthash import hamming
from robusthash.hamming import _fallback


def random_codes(rng, n, k):
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, k))


def test_backend_is_compiled():
    assert hamming.BACKEND in ("cython", "numpy")


@given(st.integers(1, 40), st.integers(1, 30), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_pack_unpack_roundtrip(k, n, seed):
    rng = np.random.default_rng(seed)
    codes = random_codes(rng, n, k)
    packed = hamming.pack_codes(codes)
    assert packed.dtype == np.uint8
    assert packed.shape == (n, (k + 7) // 8)
    assert np.array_equal(hamming.unpack_codes(packed, k), codes)


def test_pack_single_vector_roundtrip():
    code = np.array([1, -1, 1, 1, -1], dtype=np.int8)
    packed = hamming.pack_codes(code)
    assert packed.ndim == 1
    assert np.array_equal(hamming.unpack_codes(packed, 5), code)


def test_identical_codes_distance_zero():
    code = np.array([1, -1, 1, 1], dtype=np.int8)
    assert hamming.hamming_distance(code, code) == 0


def test_antipodal_codes_distance_k():
    rng = np.random.default_rng(0)
    code = random_codes(rng, 1, 16)[0]
    assert hamming.hamming_distance(code, -code) == 16


def test_orthogonal_codes_half_distance():
    a = np.array([1, 1, -1, -1], dtype=np.int8)
    b = np.array([1, -1, 1, -1], dtype=np.int8)
    assert int(a @ b) == 0
    assert hamming.hamming_distance(a, b) == 2


@given(st.integers(1, 33), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_distance_equals_inner_product_identity(k, seed):
    rng = np.random.default_rng(seed)
    a, b = random_codes(rng, 2, k)
    expected = (k - int(a.astype(int) @ b.astype(int))) // 2
    assert hamming.hamming_distance(a, b) == expected


def test_packed_distances_against_fallback():
    rng = np.random.default_rng(7)
    for k in (4, 8, 16, 19, 32):
        db = hamming.pack_codes(random_codes(rng, 50, k))
        q = hamming.pack_codes(random_codes(rng, 1, k))[0]
        via_backend = hamming.packed_distances(q, db)
        via_numpy = _fallback.packed_distances(q, db)
        assert np.array_equal(via_backend, via_numpy)


def test_pairwise_distances_match_loops():
    rng = np.random.default_rng(11)
    a = random_codes(rng, 12, 16)
    b = random_codes(rng, 9, 16)
    mat = hamming.pairwise_packed_distances(hamming.pack_codes(a),
                                            hamming.pack_codes(b))
    assert mat.shape == (12, 9)
    for i in range(12):
        for j in range(9):
            assert mat[i, j] == hamming.hamming_distance(a[i], b[j])


def test_distance_is_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    a, b = random_codes(rng, 2, 24)
    d = hamming.hamming_distance(a, b)
    assert d == hamming.hamming_distance(b, a)
    assert 0 <= d <= 24


def test_length_mismatch_raises():
    with pytest.raises(ValueError, match="lengths differ"):
        hamming.hamming_distance(np.ones(4), np.ones(8))
