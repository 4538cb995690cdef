"""Closed-form semantic representative codes in Hamming space.

For a query label, positives are database samples sharing a class and
negatives the rest. The representative minimizes the weighted Hamming
distance to positives minus the weighted distance to negatives; the
minimizer is the per-bit sign of the weighted code accumulator, which
`brute_force_mainstay` verifies by exhaustive enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .hashmodel import sign_code

BRUTE_FORCE_MAX_BITS = 20


class MainstayError(ValueError):
    pass


@dataclass
class WeightedNeighborhood:
    positive_codes: np.ndarray  # (N_p, K) in {-1,+1}
    positive_weights: np.ndarray  # (N_p,)
    negative_codes: np.ndarray  # (N_n, K)
    negative_weights: np.ndarray  # (N_n,)
    degenerate: bool = False  # one side empty

    @property
    def n_positives(self):
        return self.positive_codes.shape[0]

    @property
    def n_negatives(self):
        return self.negative_codes.shape[0]

    @property
    def hash_length(self):
        if self.n_positives:
            return self.positive_codes.shape[1]
        return self.negative_codes.shape[1]


@dataclass
class MainstayCode:
    code: np.ndarray  # (K,) in {-1,+1}
    psi_value: float


def label_cosine(y, y_other):
    """Cosine similarity of two multi-hot label vectors, in [0, 1]."""
    y = np.asarray(y, dtype=np.float64)
    y_other = np.asarray(y_other, dtype=np.float64)
    sq_a, sq_b = float(y @ y), float(y_other @ y_other)
    if sq_a == 0 or sq_b == 0:
        raise MainstayError("label_cosine is undefined for all-zero label vectors")
    return float(y @ y_other) / np.sqrt(sq_a * sq_b)


def build_neighborhood(query_label, db_codes, db_labels) -> WeightedNeighborhood:
    """Split the database into weighted positives/negatives for one label.

    Positive weight: cosine(y, y_i) / N_p. Negative weight: (1 - cosine) / N_n,
    which is 1 / N_n exactly because disjoint multi-hot labels have cosine 0.
    """
    db_codes = np.asarray(db_codes)
    db_labels = np.asarray(db_labels, dtype=np.float64)
    if db_codes.shape[0] == 0:
        raise MainstayError("database is empty")
    query_label = np.asarray(query_label, dtype=np.float64)
    qnorm = np.linalg.norm(query_label)
    if qnorm == 0:
        raise MainstayError("query label vector is all-zero")
    inner = db_labels @ query_label
    norms = np.linalg.norm(db_labels, axis=1)
    cos = np.divide(inner, norms * qnorm, out=np.zeros_like(inner), where=norms > 0)
    pos_mask = inner > 0
    n_pos = int(pos_mask.sum())
    n_neg = int((~pos_mask).sum())
    pos_w = cos[pos_mask] / n_pos if n_pos else np.empty(0)
    neg_w = (1.0 - cos[~pos_mask]) / n_neg if n_neg else np.empty(0)
    return WeightedNeighborhood(
        positive_codes=db_codes[pos_mask],
        positive_weights=pos_w,
        negative_codes=db_codes[~pos_mask],
        negative_weights=neg_w,
        degenerate=(n_pos == 0 or n_neg == 0),
    )


def _accumulator(nbhd: WeightedNeighborhood):
    acc = np.zeros(nbhd.hash_length)
    if nbhd.n_positives:
        acc += nbhd.positive_weights @ nbhd.positive_codes.astype(np.float64)
    if nbhd.n_negatives:
        acc -= nbhd.negative_weights @ nbhd.negative_codes.astype(np.float64)
    return acc


def psi(code, nbhd: WeightedNeighborhood):
    """Weighted Hamming distance to positives minus distance to negatives."""
    code = np.asarray(code, dtype=np.float64)
    k = nbhd.hash_length
    total = 0.0
    if nbhd.n_positives:
        dots = nbhd.positive_codes.astype(np.float64) @ code
        total += float(nbhd.positive_weights @ (0.5 * (k - dots)))
    if nbhd.n_negatives:
        dots = nbhd.negative_codes.astype(np.float64) @ code
        total -= float(nbhd.negative_weights @ (0.5 * (k - dots)))
    return total


def mainstay_code(nbhd: WeightedNeighborhood) -> MainstayCode:
    """Per-bit sign of the weighted accumulator; the exact argmin of psi."""
    if nbhd.n_positives == 0 and nbhd.n_negatives == 0:
        raise MainstayError("neighborhood has neither positives nor negatives")
    code = sign_code(_accumulator(nbhd))
    return MainstayCode(code=code, psi_value=psi(code, nbhd))


def brute_force_mainstay(nbhd: WeightedNeighborhood) -> MainstayCode:
    """Exhaustive argmin of psi over all codes; test oracle for small K."""
    if nbhd.n_positives == 0 and nbhd.n_negatives == 0:
        raise MainstayError("neighborhood has neither positives nor negatives")
    k = nbhd.hash_length
    if k > BRUTE_FORCE_MAX_BITS:
        raise MainstayError(
            f"exhaustive search limited to K <= {BRUTE_FORCE_MAX_BITS}, got {k}"
        )
    best_code = None
    best_value = np.inf
    # (+1, -1) order: on ties the first-found code prefers +1 in earlier bits
    for bits in itertools.product((1, -1), repeat=k):
        code = np.array(bits, dtype=np.int8)
        value = psi(code, nbhd)
        if value < best_value:
            best_value = value
            best_code = code
    return MainstayCode(code=best_code, psi_value=best_value)


class MainstayCache:
    """Per-distinct-label memo of representative codes for one code database.

    Two samples with identical labels induce identical neighborhoods, so the
    representative only depends on the label vector.
    """

    def __init__(self, db_codes, db_labels):
        self.db_codes = np.asarray(db_codes)
        self.db_labels = np.asarray(db_labels)
        self._cache: dict[bytes, MainstayCode] = {}

    def for_label(self, label) -> MainstayCode:
        label = np.asarray(label)
        key = np.asarray(label, dtype=np.uint8).tobytes()
        if key not in self._cache:
            nbhd = build_neighborhood(label, self.db_codes, self.db_labels)
            if nbhd.n_positives == 0:
                raise MainstayError("no positive database samples for this label")
            self._cache[key] = mainstay_code(nbhd)
        return self._cache[key]

    def for_labels(self, labels):
        """Stacked (n, K) representative codes for a batch of labels."""
        return np.stack([self.for_label(y).code for y in np.asarray(labels)])


def mainstay_for_label(label, db_codes, db_labels) -> MainstayCode:
    return MainstayCache(db_codes, db_labels).for_label(label)


def export_mainstay_codes(path, cache: MainstayCache, labels):
    """Packed export of the distinct-label representative codes."""
    from .hashmodel import save_code_database

    labels = np.asarray(labels)
    distinct = np.unique(labels, axis=0)
    codes = np.stack([cache.for_label(y).code for y in distinct])
    save_code_database(path, codes, distinct)
