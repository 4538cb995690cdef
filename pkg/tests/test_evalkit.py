import numpy as np
import pytest

from robusthash import evalkit, hamming
from robusthash.evalkit import (EvalError, EvalReport, average_precision,
                                build_index, default_top_k, map_at_k,
                                perceptibility, pr_curve, precision_at_topn,
                                rank_database, save_report, theoretical_map)


def random_corpus(rng, n, k, c):
    codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, k))
    labels = np.zeros((n, c), dtype=np.uint8)
    labels[np.arange(n), rng.integers(0, c, n)] = 1
    return codes, labels


def brute_force_ranking(query, codes):
    dists = [hamming.hamming_distance(query, c) for c in codes]
    return sorted(range(len(codes)), key=lambda i: (dists[i], i))


def brute_force_ap(relevance):
    hits = 0
    total = 0.0
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


class TestAveragePrecision:
    def test_all_relevant_first(self):
        assert average_precision([1, 1, 0]) == 1.0

    def test_single_hit_second_place(self):
        assert average_precision([0, 1]) == 0.5

    def test_hand_computed_mixed(self):
        assert abs(average_precision([1, 0, 1]) - (1 + 2 / 3) / 2) < 1e-12

    def test_no_hits_is_zero(self):
        assert average_precision([0, 0, 0]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EvalError, match="empty"):
            average_precision([])


class TestRanking:
    def test_full_k_is_permutation(self, rng):
        codes, labels = random_corpus(rng, 40, 12, 3)
        index = build_index(codes, labels)
        ranked = rank_database(codes[5], index)
        assert sorted(ranked) == list(range(40))

    def test_exact_match_ranks_first(self, rng):
        codes, labels = random_corpus(rng, 30, 16, 3)
        index = build_index(codes, labels)
        target = codes[17].copy()
        # make sample 17 unique so it is the only zero-distance hit
        others = np.delete(np.arange(30), 17)
        for i in others:
            if hamming.hamming_distance(codes[i], target) == 0:
                codes[i, 0] *= -1
        index = build_index(codes, labels)
        assert rank_database(target, index)[0] == 17

    def test_matches_naive_sort_with_stable_ties(self, rng):
        codes, labels = random_corpus(rng, 100, 16, 4)
        index = build_index(codes, labels)
        q = rng.choice(np.array([-1, 1], dtype=np.int8), size=16)
        assert list(rank_database(q, index)) == brute_force_ranking(q, codes)

    def test_empty_index_rejected(self):
        with pytest.raises(EvalError, match="zero codes"):
            build_index(np.empty((0, 8)), np.empty((0, 2)))


class TestMap:
    def test_all_relevant_gives_one(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10, 8))
        labels = np.tile([1, 0], (10, 1))
        index = build_index(codes, labels)
        assert map_at_k(codes[0], [1, 0], index) == 1.0

    def test_no_shared_class_gives_zero(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10, 8))
        labels = np.tile([1, 0], (10, 1))
        index = build_index(codes, labels)
        assert map_at_k(codes[0], [0, 1], index) == 0.0

    def test_three_query_fixture_matches_naive(self, rng):
        codes, labels = random_corpus(rng, 60, 12, 3)
        index = build_index(codes, labels)
        queries, qlabels = random_corpus(rng, 3, 12, 3)
        for k in (10, 60):
            total = 0.0
            for q, y in zip(queries, qlabels):
                order = brute_force_ranking(q, codes)[:k]
                rel = [int(labels[i] @ y > 0) for i in order]
                total += brute_force_ap(rel)
            naive = total / 3
            assert abs(map_at_k(queries, qlabels, index, k) - naive) < 1e-12

    def test_invalid_k_rejected(self, rng):
        codes, labels = random_corpus(rng, 5, 8, 2)
        index = build_index(codes, labels)
        with pytest.raises(EvalError, match="k must be"):
            map_at_k(codes[0], labels[0], index, k=0)


class TestPrCurve:
    def test_final_radius_has_full_recall(self, rng):
        codes, labels = random_corpus(rng, 30, 8, 3)
        index = build_index(codes, labels)
        points = pr_curve(codes[:4], labels[:4], index)
        assert len(points) == 9
        assert points[-1][0] == 1.0

    def test_all_relevant_database_has_unit_precision(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(12, 8))
        labels = np.tile([1, 0], (12, 1))
        index = build_index(codes, labels)
        for recall, precision in pr_curve(codes[:2], labels[:2], index):
            assert precision in (0.0, 1.0)  # 0 only if nothing retrieved
        assert pr_curve(codes[:2], labels[:2], index)[-1][1] == 1.0

    def test_two_query_fixture_matches_enumeration(self, rng):
        codes, labels = random_corpus(rng, 20, 6, 2)
        index = build_index(codes, labels)
        queries, qlabels = codes[:2], labels[:2]
        points = pr_curve(queries, qlabels, index)
        for radius in range(7):
            precs, recs = [], []
            for q, y in zip(queries, qlabels):
                dists = np.array([hamming.hamming_distance(q, c)
                                  for c in codes])
                mask = dists <= radius
                rel = (labels @ y > 0)
                if mask.sum():
                    precs.append(rel[mask].sum() / mask.sum())
                recs.append(rel[mask].sum() / rel.sum())
            expected_p = np.mean(precs) if precs else 0.0
            assert abs(points[radius][1] - expected_p) < 1e-12
            assert abs(points[radius][0] - np.mean(recs)) < 1e-12

    def test_recall_is_nondecreasing(self, rng):
        codes, labels = random_corpus(rng, 50, 10, 4)
        index = build_index(codes, labels)
        points = pr_curve(codes[:5], labels[:5], index)
        recalls = [r for r, _ in points]
        assert recalls == sorted(recalls)


class TestPrecisionAtTopN:
    def test_monotone_relevance_prefix(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(20, 8))
        labels = np.tile([1, 0], (20, 1))
        index = build_index(codes, labels)
        grid = precision_at_topn(codes[0], [1, 0], index, [1, 5, 20])
        assert grid == [(1, 1.0), (5, 1.0), (20, 1.0)]

    def test_out_of_range_n_dropped(self, rng):
        codes, labels = random_corpus(rng, 10, 8, 2)
        index = build_index(codes, labels)
        grid = precision_at_topn(codes[0], labels[0], index, [5, 100])
        assert [n for n, _ in grid] == [5]


class TestPerceptibility:
    def test_identical_batches(self):
        x = np.random.default_rng(0).random((5, 6))
        assert perceptibility(x, x) == (0.0, 0.0, 0.0)

    def test_single_pixel_linf(self):
        x = np.zeros((1, 10))
        adv = x.copy()
        adv[0, 3] = 8 / 255
        linf, _, _ = perceptibility(x, adv)
        assert linf == 8 / 255

    def test_constant_delta_closed_forms(self):
        d, c = 16, 0.01
        x = np.full((1, d), 0.5)
        linf, l2, mse = perceptibility(x, x + c)
        assert abs(linf - c) < 1e-15
        assert abs(l2 - c * np.sqrt(d)) < 1e-12
        assert abs(mse - c**2) < 1e-15

    def test_shape_mismatch_rejected(self):
        with pytest.raises(EvalError, match="misaligned"):
            perceptibility(np.zeros((2, 3)), np.zeros((3, 3)))


class TestTheoreticalMap:
    def test_representative_in_database_scores_one(self, rng):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10, 8))
        labels = np.tile([1, 0], (10, 1))
        index = build_index(codes, labels)
        score = theoretical_map(codes[0], [1, 0], index, mode="targeted")
        assert score == 1.0

    def test_nontargeted_bound_below_clean_map(self, rng):
        # class-clustered codes: clean retrieval is perfect, the antipodal
        # bound is poor
        base = rng.choice(np.array([-1, 1], dtype=np.int8), size=(2, 16))
        codes = np.repeat(base, 10, axis=0)
        labels = np.repeat(np.eye(2, dtype=np.uint8), 10, axis=0)
        index = build_index(codes, labels)
        clean = map_at_k(codes[:1], labels[:1], index)
        bound = theoretical_map(codes[:1], labels[:1], index)
        assert bound < clean

    def test_unknown_mode_rejected(self, rng):
        codes, labels = random_corpus(rng, 5, 8, 2)
        index = build_index(codes, labels)
        with pytest.raises(EvalError, match="mode"):
            theoretical_map(codes[0], labels[0], index, mode="anything")


class TestReports:
    def test_default_top_k_caps_at_index_size(self, rng):
        codes, labels = random_corpus(rng, 30, 8, 2)
        index = build_index(codes, labels)
        assert default_top_k(index) == 30
        assert default_top_k(index, 10) == 10

    def test_save_report_is_deterministic(self, tmp_path):
        report = EvalReport(map_score=0.5, t_map=0.25,
                            pr_points=[(0.0, 1.0), (1.0, 0.5)],
                            p_at_n=[(1, 1.0)],
                            perceptibility=(0.01, 0.1, 0.001),
                            top_k=10, query_count=3)
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        save_report(report, a, tmp_path / "a_pr.csv", tmp_path / "a_topn.csv")
        save_report(report, b, tmp_path / "b_pr.csv", tmp_path / "b_topn.csv")
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a_pr.csv").read_bytes() == (
            tmp_path / "b_pr.csv").read_bytes()
        assert "map 0.500000000000" in a.read_text()
