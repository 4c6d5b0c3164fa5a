import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.attributes import AttributeSpace
from crocs.inference import RetrievalResult
from crocs.metrics import (THRESHOLDS, accuracy, ami, contingency, entropy, expected_mutual_info, mutual_info,
                           precision_at_k, precision_report)

from oracles import ami_bruteforce, emi_permutations, random_labels, random_table, set_partitions

SPACE = AttributeSpace(4, 2, 4)


class TestAccuracy:
    def test_examples(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
        assert accuracy([0, 0], [1, 1]) == 0.0
        assert accuracy([0, 0, 1, 1], [0, 1, 1, 1]) == 0.75

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([0, 1], [0])
        with pytest.raises(ValueError):
            accuracy([], [])

    def test_permutation_sensitive_while_ami_is_not(self):
        t = np.array([0, 0, 1, 1, 2, 2, 2])
        relabeled = np.array([2, 0, 1])[t]
        assert accuracy(t, relabeled) == 0.0
        assert ami(t, relabeled) == pytest.approx(1.0, abs=1e-12)


class TestAMI:
    def test_examples(self):
        t = [0, 0, 1, 1, 2, 2]
        assert ami(t, t) == pytest.approx(1.0, abs=1e-12)
        assert ami(t, [5, 5, 3, 3, 9, 9]) == pytest.approx(1.0, abs=1e-12)
        assert ami(t, [4] * 6) == 0.0
        assert ami([1] * 6, [2] * 6) == 0.0
        assert ami([0, 1, 2, 3], [3, 1, 2, 0]) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            ami([0, 1], [0, 1, 1])
        with pytest.raises(ValueError):
            ami([0], [0])

    def test_pieces(self):
        t, a = [0, 0, 1, 1], [0, 1, 1, 1]
        assert contingency(t, a).tolist() == [[1, 1], [0, 2]]
        assert entropy([0, 0, 1, 1]) == pytest.approx(np.log(2))
        assert mutual_info(contingency(t, t)) == pytest.approx(np.log(2))

    def test_oracle_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            t, a = random_labels(rng)
            assert ami(t, a) == pytest.approx(ami_bruteforce(t.tolist(), a.tolist()), abs=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_expectation_by_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = 5 + seed % 3
        t = rng.integers(0, 3, n).tolist()
        a = rng.integers(0, 3, n).tolist()
        table = contingency(t, a)
        assert expected_mutual_info(table) == pytest.approx(emi_permutations(t, a), abs=1e-12)

    def test_matches_sklearn(self):
        sk = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(5)
        for _ in range(50):
            t, a = random_labels(rng)
            if {len(set(t)), len(set(a))} <= {1} or {len(set(t)), len(set(a))} == {len(t)}:
                continue  # zero denominator: this library reports 0 where sklearn reports 1
            ref = sk.adjusted_mutual_info_score(t, a, average_method="arithmetic")
            assert ami(t, a) == pytest.approx(ref, abs=1e-9)

    def test_one_iff_same_partition(self):
        parts = list(set_partitions(6, 3))
        assert len(parts) == 1 + 31 + 90
        for p in parts:
            for q in parts:
                value = ami(p, q)
                if p == q and len(set(p)) > 1:
                    assert value == pytest.approx(1.0, abs=1e-12)
                else:
                    assert value < 1 - 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=2, max_size=25))
    def test_symmetric_and_bounded(self, pairs):
        t = [p[0] for p in pairs]
        a = [p[1] for p in pairs]
        assert ami(t, a) == pytest.approx(ami(a, t), abs=1e-12)
        assert ami(t, a) <= 1 + 1e-12


class TestPrecision:
    def test_all_exact_top1(self):
        truth = {10: SPACE.make(0, 0, 0), 11: SPACE.make(1, 1, 1)}
        res = RetrievalResult([[(10, 0.0), (11, 1.0)], [(11, 0.0), (10, 1.0)]], [0, 1])
        queries = [SPACE.make(0, 0, 0), SPACE.make(1, 1, 1)]
        for th in THRESHOLDS:
            assert precision_at_k(res, truth, queries, 1, th) == 1.0

    def test_nothing_shared(self):
        truth = {0: SPACE.make(0, 0, 0)}
        res = RetrievalResult([[(0, 0.0)]], [0])
        assert precision_at_k(res, truth, [SPACE.make(1, 1, 1)], 1, ">=1") == 0.0

    def test_two_queries(self):
        truth = {0: SPACE.make(0, 0, 0), 1: SPACE.make(2, 1, 3), 2: SPACE.make(3, 0, 1)}
        res = RetrievalResult([[(1, 0.1), (0, 0.2)], [(2, 0.1), (0, 0.3)]], [0, 1])
        queries = [SPACE.make(0, 0, 0), SPACE.make(3, 1, 0)]
        # query 0 finds an exact match at rank 2; query 1's best shares only the class
        assert precision_at_k(res, truth, queries, 2, "=3") == 0.5
        assert precision_at_k(res, truth, queries, 2, ">=1") == 1.0

    def test_sequence_truth_and_errors(self):
        res = RetrievalResult([[(0, 0.0)]], [0])
        assert precision_at_k(res, [SPACE.make(0, 0, 0)], [SPACE.make(0, 0, 0)], 1, "=3") == 1.0
        with pytest.raises(ValueError, match="unknown instance id"):
            precision_at_k(RetrievalResult([[(5, 0.0)]], [0]), [SPACE.make(0, 0, 0)], [SPACE.make(0, 0, 0)], 1, "=3")
        with pytest.raises(ValueError, match="unknown instance id"):
            precision_at_k(RetrievalResult([[(-1, 0.0)]], [0]), [SPACE.make(0, 0, 0)], [SPACE.make(0, 0, 0)], 1,
                           "=3")
        with pytest.raises(KeyError):
            precision_at_k(res, [SPACE.make(0, 0, 0)], [SPACE.make(0, 0, 0)], 1, ">=4")

    def test_monotone_tables(self):
        rng = np.random.default_rng(3)
        ks = range(1, 9)
        for _ in range(100):
            res, truth, queries = random_table(rng)
            table = precision_report(res, truth, queries, ks)
            for th in THRESHOLDS:
                vals = [table[(th, k)] for k in ks]
                assert vals == sorted(vals)
            for k in ks:
                assert table[(">=1", k)] >= table[(">=2", k)] >= table[("=3", k)]
