"""Pure-numpy popcount kernels, used when the compiled extension is unavailable."""

import numpy as np


def packed_distances(query, database):
    query = np.asarray(query, dtype=np.uint8)
    database = np.asarray(database, dtype=np.uint8)
    if query.shape[0] != database.shape[1]:
        raise ValueError("query width does not match database width")
    xored = np.bitwise_xor(database, query[np.newaxis, :])
    return np.bitwise_count(xored).sum(axis=1).astype(np.int64)


def pairwise_distances(a, b):
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape[1] != b.shape[1]:
        raise ValueError("packed widths differ")
    xored = np.bitwise_xor(a[:, np.newaxis, :], b[np.newaxis, :, :])
    return np.bitwise_count(xored).sum(axis=2).astype(np.int64)
