"""Hamming-space retrieval evaluation: ranking, MAP, curves, perceptibility.

Rankings are by Hamming distance with ties broken by ascending database
index, so every metric is deterministic. Relevance is binary: a database
item is relevant to a query iff their label vectors share a class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import hamming


class EvalError(ValueError):
    pass


@dataclass
class RetrievalIndex:
    packed_codes: np.ndarray  # (N, ceil(K/8)) uint8
    labels: np.ndarray  # (N, C)
    hash_length: int

    @property
    def size(self):
        return self.packed_codes.shape[0]


@dataclass
class EvalReport:
    map_score: float
    t_map: float | None = None
    pr_points: list[tuple[float, float]] = field(default_factory=list)
    p_at_n: list[tuple[int, float]] = field(default_factory=list)
    perceptibility: tuple[float, float, float] | None = None
    top_k: int = 0
    query_count: int = 0


def build_index(codes, labels) -> RetrievalIndex:
    codes = np.asarray(codes)
    labels = np.asarray(labels)
    if codes.shape[0] == 0:
        raise EvalError("cannot build an index from zero codes")
    if codes.shape[0] != labels.shape[0]:
        raise EvalError("codes and labels misaligned")
    return RetrievalIndex(
        packed_codes=hamming.pack_codes(codes),
        labels=labels,
        hash_length=codes.shape[1],
    )


def hamming_distance(a, b):
    return hamming.hamming_distance(a, b)


def rank_database(query_code, index: RetrievalIndex, k=None):
    """Indices of the k nearest database codes; stable in database order."""
    if index.size == 0:
        raise EvalError("index is empty")
    k = index.size if k is None else min(k, index.size)
    dists = hamming.packed_distances(hamming.pack_codes(query_code),
                                     index.packed_codes)
    order = np.argsort(dists, kind="stable")
    return order[:k]


def average_precision(relevance):
    """AP of a ranked 0/1 relevance sequence, normalized by hits in the list."""
    relevance = np.asarray(relevance, dtype=np.float64)
    if relevance.size == 0:
        raise EvalError("relevance sequence is empty")
    hits = np.cumsum(relevance)
    total = hits[-1]
    if total == 0:
        return 0.0
    ranks = np.arange(1, relevance.size + 1)
    return float(np.sum((hits / ranks) * relevance) / total)


def _relevance(query_label, db_labels):
    return (np.asarray(db_labels, dtype=np.float64)
            @ np.asarray(query_label, dtype=np.float64) > 0).astype(np.int8)


def map_at_k(query_codes, query_labels, index: RetrievalIndex, k=None):
    """Mean AP over queries on the top-k ranked lists.

    Passing attack target labels as query_labels yields t-MAP.
    """
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise EvalError("query set is empty")
    k = index.size if k is None else min(k, index.size)
    if k < 1:
        raise EvalError("k must be >= 1")
    total = 0.0
    for code, label in zip(query_codes, query_labels):
        ranked = rank_database(code, index, k)
        total += average_precision(_relevance(label, index.labels[ranked]))
    return total / query_codes.shape[0]


def pr_curve(query_codes, query_labels, index: RetrievalIndex):
    """Mean precision/recall of the retrieved set at each Hamming radius 0..K."""
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise EvalError("query set is empty")
    k = index.hash_length
    packed_queries = hamming.pack_codes(query_codes)
    precisions = np.zeros(k + 1)
    recalls = np.zeros(k + 1)
    counts = np.zeros(k + 1)
    for pq, label in zip(packed_queries, query_labels):
        dists = hamming.packed_distances(pq, index.packed_codes)
        rel = _relevance(label, index.labels)
        n_rel = rel.sum()
        for radius in range(k + 1):
            mask = dists <= radius
            retrieved = int(mask.sum())
            if retrieved:
                precisions[radius] += rel[mask].sum() / retrieved
                counts[radius] += 1
            if n_rel:
                recalls[radius] += rel[mask].sum() / n_rel
    n_queries = query_codes.shape[0]
    points = []
    for radius in range(k + 1):
        precision = precisions[radius] / counts[radius] if counts[radius] else 0.0
        points.append((recalls[radius] / n_queries, precision))
    return points


def precision_at_topn(query_codes, query_labels, index: RetrievalIndex, n_grid):
    """Mean precision over the top-n ranked items for each n in the grid."""
    query_codes = np.atleast_2d(np.asarray(query_codes))
    query_labels = np.atleast_2d(np.asarray(query_labels))
    if query_codes.shape[0] == 0:
        raise EvalError("query set is empty")
    n_grid = [n for n in n_grid if 1 <= n <= index.size]
    sums = np.zeros(len(n_grid))
    for code, label in zip(query_codes, query_labels):
        ranked = rank_database(code, index)
        rel = _relevance(label, index.labels[ranked])
        hits = np.cumsum(rel)
        for j, n in enumerate(n_grid):
            sums[j] += hits[n - 1] / n
    return [(n, float(s / query_codes.shape[0])) for n, s in zip(n_grid, sums)]


def perceptibility(clean_batch, adv_batch):
    """Batch-mean (L-infinity, L2, MSE) of the adversarial perturbations."""
    clean = np.atleast_2d(np.asarray(clean_batch, dtype=np.float64))
    adv = np.atleast_2d(np.asarray(adv_batch, dtype=np.float64))
    if clean.shape != adv.shape:
        raise EvalError("clean and adversarial batches misaligned")
    delta = adv - clean
    linf = float(np.mean(np.max(np.abs(delta), axis=1)))
    l2 = float(np.mean(np.linalg.norm(delta, axis=1)))
    mse = float(np.mean(np.mean(delta**2, axis=1)))
    return linf, l2, mse


def theoretical_map(representative_codes, eval_labels, index: RetrievalIndex,
                    k=None, mode="nontargeted"):
    """Retrieval quality at the attack's limit code, bypassing the model.

    A non-targeted attack converges toward the antipode of the query's
    representative code, so its bound queries with -code against the true
    labels (lower = stronger attack). A targeted attack converges toward
    the target label's representative itself, judged on the target labels
    (higher = stronger).
    """
    codes = np.asarray(representative_codes)
    if mode == "nontargeted":
        codes = -codes
    elif mode != "targeted":
        raise EvalError(f"unknown theoretical_map mode {mode!r}")
    return map_at_k(codes, eval_labels, index, k)


def default_top_k(index: RetrievalIndex, k=5000):
    return min(index.size, k)


def save_report(report: EvalReport, path, pr_path=None, topn_path=None):
    """One metric per line; curves go to companion CSV files."""
    lines = [
        f"map {report.map_score:.12f}",
        f"top_k {report.top_k}",
        f"query_count {report.query_count}",
    ]
    if report.t_map is not None:
        lines.append(f"t_map {report.t_map:.12f}")
    if report.perceptibility is not None:
        linf, l2, mse = report.perceptibility
        lines.append(f"perceptibility_linf {linf:.12f}")
        lines.append(f"perceptibility_l2 {l2:.12f}")
        lines.append(f"perceptibility_mse {mse:.12f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if pr_path is not None:
        with open(pr_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["recall", "precision"])
            for recall, precision in report.pr_points:
                writer.writerow([f"{recall:.12f}", f"{precision:.12f}"])
    if topn_path is not None:
        with open(topn_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "precision"])
            for n, precision in report.p_at_n:
                writer.writerow([n, f"{precision:.12f}"])
