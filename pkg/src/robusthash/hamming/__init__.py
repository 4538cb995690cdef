"""Packed binary codes and Hamming-distance kernels.

Codes live in {-1, +1}^K. For bulk distance work they are packed into
uint8 rows (bit set <=> +1); distances are XOR + popcount, computed by a
compiled Cython kernel when the extension built, otherwise by a numpy
fallback. Both backends produce identical results.
"""

import numpy as np

try:
    from . import _kernels as _backend

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _fallback as _backend

    BACKEND = "numpy"

from . import _fallback

__all__ = [
    "BACKEND",
    "pack_codes",
    "unpack_codes",
    "packed_distances",
    "pairwise_packed_distances",
    "hamming_distance",
]


def pack_codes(codes):
    """Pack {-1,+1} codes (N, K) or (K,) into uint8 rows, one bit per entry."""
    codes = np.asarray(codes)
    squeeze = codes.ndim == 1
    codes = np.atleast_2d(codes)
    bits = (codes > 0).astype(np.uint8)
    packed = np.packbits(bits, axis=1)
    return packed[0] if squeeze else packed


def unpack_codes(packed, length):
    """Inverse of pack_codes; yields int8 {-1,+1} arrays of the given code length."""
    packed = np.asarray(packed, dtype=np.uint8)
    squeeze = packed.ndim == 1
    packed = np.atleast_2d(packed)
    bits = np.unpackbits(packed, axis=1)[:, :length]
    codes = np.where(bits > 0, 1, -1).astype(np.int8)
    return codes[0] if squeeze else codes


def packed_distances(query, database):
    """Hamming distances from one packed query row to every database row."""
    return _backend.packed_distances(
        np.ascontiguousarray(query, dtype=np.uint8),
        np.ascontiguousarray(database, dtype=np.uint8),
    )


def pairwise_packed_distances(a, b):
    """Full (N, M) Hamming distance matrix between two packed code sets."""
    return _backend.pairwise_distances(
        np.ascontiguousarray(a, dtype=np.uint8),
        np.ascontiguousarray(b, dtype=np.uint8),
    )


def hamming_distance(a, b):
    """Hamming distance between two {-1,+1} codes; equals (K - a.b) / 2."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"code lengths differ: {a.shape} vs {b.shape}")
    pa = pack_codes(a)
    pb = pack_codes(b).reshape(1, -1)
    return int(packed_distances(pa, pb)[0])
