import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.attributes import (INFINITE, AttributeSet, AttributeSpace, attraction_weights, enumerate_combinations,
                              hamming, hamming_matrix, match_count, match_score, weight_matrix)

SPACE = AttributeSpace(4, 2, 4)


def attrs_in(space):
    return st.builds(space.make, st.integers(0, space.class_count - 1), st.integers(0, space.sex_count - 1),
                     st.integers(0, space.age_bin_count - 1))


taus = st.one_of(st.floats(1e-3, 50.0), st.just(INFINITE))


class TestSpace:
    @pytest.mark.parametrize("dims,M", [((1, 1, 1), 1), ((4, 2, 4), 32), ((5, 2, 4), 40)])
    def test_combination_count(self, dims, M):
        space = AttributeSpace(*dims)
        combos = enumerate_combinations(space)
        assert len(combos) == M == space.size

    def test_single_combination(self):
        assert [c.as_tuple() for c in enumerate_combinations(AttributeSpace(1, 1, 1))] == [(0, 0, 0)]

    def test_lexicographic_order(self):
        tuples = [c.as_tuple() for c in enumerate_combinations(SPACE)]
        assert tuples == sorted(tuples)
        assert tuples == list(itertools.product(range(4), range(2), range(4)))

    def test_index_of_matches_enumeration(self):
        for j, c in enumerate(enumerate_combinations(SPACE)):
            assert SPACE.index_of(c) == j

    @pytest.mark.parametrize("dims", [(0, 2, 4), (4, 0, 4), (4, 2, -1), (2.5, 2, 4)])
    def test_rejects_bad_counts(self, dims):
        with pytest.raises(ValueError):
            AttributeSpace(*dims)

    @pytest.mark.parametrize("triple", [(4, 0, 0), (0, 2, 0), (0, 0, 4), (-1, 0, 0)])
    def test_out_of_bounds_set(self, triple):
        with pytest.raises(ValueError):
            SPACE.make(*triple)

    def test_equality_ignores_space(self):
        assert AttributeSet(1, 0, 2) == SPACE.make(1, 0, 2)
        assert AttributeSet(1, 0, 2) != AttributeSet(1, 0, 3)
        assert len({AttributeSet(1, 0, 2), SPACE.make(1, 0, 2)}) == 1


class TestHamming:
    def test_examples(self):
        a = SPACE.make(1, 0, 2)
        assert hamming(a, a) == 0
        assert hamming(a, SPACE.make(1, 1, 2)) == 1
        assert hamming(a, SPACE.make(2, 1, 3)) == 3

    def test_mismatched_spaces(self):
        with pytest.raises(ValueError):
            hamming(SPACE.make(0, 0, 0), AttributeSpace(5, 2, 4).make(0, 0, 0))

    def test_metric_axioms_exhaustive(self):
        combos = enumerate_combinations(AttributeSpace(3, 2, 3))
        H = hamming_matrix(combos)
        for i, a in enumerate(combos):
            for j, b in enumerate(combos):
                assert H[i, j] == hamming(a, b) == hamming(b, a)
                assert (H[i, j] == 0) == (a == b)
        n = len(combos)
        for i, j, k in itertools.product(range(n), repeat=3):
            assert H[i, k] <= H[i, j] + H[j, k]


class TestMatchScore:
    def test_examples(self):
        a = SPACE.make(2, 1, 3)
        assert match_score(a, a, 1.0) == 3.0
        assert match_score(a, SPACE.make(2, 1, 0), 1.0) == 2.0
        assert match_score(a, SPACE.make(0, 0, 0), INFINITE) == 0.0
        assert match_score(a, a, 0.5) == 6.0

    @pytest.mark.parametrize("tau", [0.0, -1.0, float("nan")])
    def test_bad_tau(self, tau):
        a = SPACE.make(0, 0, 0)
        with pytest.raises(ValueError):
            match_score(a, a, tau)
        with pytest.raises(ValueError):
            attraction_weights(a, SPACE, tau)


class TestWeights:
    def test_singleton(self):
        space = AttributeSpace(1, 1, 1)
        for tau in (0.1, 1.0, INFINITE):
            assert attraction_weights(space.make(0, 0, 0), space, tau).tolist() == [1.0]

    def test_exact_match_value(self):
        # same class: 1 full match, 3 age-only + 1 sex-only mismatches, 3 double mismatches
        e = math.e
        oracle = e ** 3 / (e ** 3 + 4 * e ** 2 + 3 * e)
        a = SPACE.make(1, 0, 2)
        w = attraction_weights(a, SPACE, 1.0)
        assert w[SPACE.index_of(a)] == pytest.approx(oracle, abs=1e-15)
        assert w[SPACE.index_of(a)] == pytest.approx(0.3475, abs=1e-3)

    def test_uniform_limit(self):
        a = SPACE.make(3, 1, 0)
        w = attraction_weights(a, SPACE, INFINITE)
        same = np.array([c.class_id == 3 for c in enumerate_combinations(SPACE)])
        assert np.all(w[same] == 0.125)
        assert np.all(w[~same] == 0.0)

    def test_weight_matrix_rows(self):
        attrs = [SPACE.make(0, 0, 0), SPACE.make(2, 1, 3), SPACE.make(0, 0, 0)]
        W = weight_matrix(attrs, SPACE, 0.7)
        assert W.shape == (3, 32)
        for row, a in zip(W, attrs):
            np.testing.assert_array_equal(row, attraction_weights(a, SPACE, 0.7))
        assert weight_matrix([], SPACE, 1.0).shape == (0, 32)

    @settings(max_examples=300, deadline=None)
    @given(attrs_in(SPACE), taus)
    def test_distribution_and_support(self, a, tau):
        w = attraction_weights(a, SPACE, tau)
        combos = enumerate_combinations(SPACE)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12
        for c, wj in zip(combos, w):
            if c.class_id != a.class_id:
                assert wj == 0.0

    @settings(max_examples=200, deadline=None)
    @given(attrs_in(SPACE), st.floats(1e-2, 50.0))
    def test_strictly_increasing_in_score(self, a, tau):
        w = attraction_weights(a, SPACE, tau)
        combos = enumerate_combinations(SPACE)
        same = [(match_count(a, c), w[j]) for j, c in enumerate(combos) if c.class_id == a.class_id]
        for (qa, wa), (qb, wb) in itertools.product(same, repeat=2):
            if qa > qb:
                assert wa > wb
            elif qa == qb:
                assert wa == pytest.approx(wb, rel=1e-12)
        assert int(np.argmax(w)) == SPACE.index_of(a)

    @settings(max_examples=100, deadline=None)
    @given(attrs_in(SPACE))
    def test_sharp_limit(self, a):
        assert attraction_weights(a, SPACE, 1e-3)[SPACE.index_of(a)] > 0.999
