import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crocs.attributes import AttributeSpace, enumerate_combinations, hamming
from crocs.prototypes import (PrototypeBank, empirical_distances, init_prototypes, normalize_rows,
                              pairwise_euclidean, target_distances)

SPACE = AttributeSpace(4, 2, 4)


def bank_from(rows, space, beta=0.2):
    return PrototypeBank(np.asarray(rows, dtype=float), enumerate_combinations(space), beta, space)


class TestInit:
    def test_unit_rows(self):
        bank = init_prototypes(SPACE, 128, 0)
        assert bank.matrix.shape == (32, 128)
        np.testing.assert_allclose(np.linalg.norm(bank.matrix, axis=1), 1.0, atol=1e-12)
        assert bank.beta == 0.2

    def test_larger_space(self):
        assert init_prototypes(AttributeSpace(5, 2, 4), 256, 1).matrix.shape == (40, 256)

    def test_deterministic(self):
        a, b = init_prototypes(SPACE, 16, 5), init_prototypes(SPACE, 16, 5)
        assert a.matrix.tobytes() == b.matrix.tobytes()
        assert a.combos == b.combos == enumerate_combinations(SPACE)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            init_prototypes(SPACE, 1, 0)

    def test_bank_validation(self):
        with pytest.raises(ValueError):
            bank_from(np.ones((31, 4)), SPACE)
        with pytest.raises(ValueError):
            bank_from(np.ones((32, 4)), SPACE, beta=0.0)


class TestTargets:
    def test_examples(self):
        combos = enumerate_combinations(SPACE)
        t = target_distances(init_prototypes(SPACE, 4, 0, beta=0.2))
        j = SPACE.index_of(SPACE.make(1, 0, 0))
        k = SPACE.index_of(SPACE.make(1, 1, 3))
        assert t.values[j, j] == 0.0
        assert t.values[j, k] == pytest.approx(0.4)
        assert t.same_class_mask[j, k]
        t05 = target_distances(init_prototypes(SPACE, 4, 0, beta=0.05))
        k2 = SPACE.index_of(SPACE.make(1, 0, 2))
        assert t05.values[j, k2] == pytest.approx(0.05)
        assert combos[j].class_id == combos[k2].class_id

    @pytest.mark.parametrize("beta", [0.05, 0.1, 0.2, 0.4])
    def test_beta_times_hamming(self, beta):
        bank = init_prototypes(SPACE, 4, 0, beta=beta)
        t = target_distances(bank)
        combos = bank.combos
        for j, a in enumerate(combos):
            for k, b in enumerate(combos):
                assert t.values[j, k] == beta * hamming(a, b)
                assert t.same_class_mask[j, k] == (a.class_id == b.class_id)
        np.testing.assert_array_equal(t.values, t.values.T)


class TestEmpirical:
    def test_examples(self):
        space = AttributeSpace(1, 1, 4)
        bank = bank_from([[1, 0], [1, 0], [0, 1], [-1, 0]], space)
        d = empirical_distances(bank)
        assert d[0, 1] == 0.0
        assert d[0, 2] == pytest.approx(math.sqrt(2), abs=1e-15)
        assert d[0, 3] == pytest.approx(2.0, abs=1e-15)

    def test_zero_row(self):
        bank = bank_from([[1, 0], [0, 0], [1, 1], [2, 0]], AttributeSpace(1, 1, 4))
        with pytest.raises(ValueError, match="row 1"):
            empirical_distances(bank)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_properties_and_rescaling(self, seed):
        rng = np.random.default_rng(seed)
        bank = bank_from(rng.standard_normal((32, 5)), SPACE)
        d = empirical_distances(bank)
        assert np.all(np.diag(d) == 0)
        np.testing.assert_array_equal(d, d.T)
        assert d.min() >= 0 and d.max() <= 2 + 1e-12
        scaled = bank_from(bank.matrix * rng.uniform(0.1, 10, (32, 1)), SPACE)
        np.testing.assert_allclose(empirical_distances(scaled), d, atol=1e-12)


class TestHelpers:
    def test_normalize_rows(self):
        u, n = normalize_rows(np.array([[3.0, 4.0], [0.0, 2.0]]))
        np.testing.assert_allclose(u, [[0.6, 0.8], [0.0, 1.0]])
        np.testing.assert_allclose(n, [5.0, 2.0])
        with pytest.raises(ValueError, match="embedding 0"):
            normalize_rows(np.zeros((1, 3)), "embedding")

    def test_pairwise_matches_direct(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((7, 4)), rng.standard_normal((5, 4))
        direct = np.array([[np.linalg.norm(x - y) for y in b] for x in a])
        np.testing.assert_allclose(pairwise_euclidean(a, b), direct, atol=1e-14)
        np.testing.assert_allclose(pairwise_euclidean(a, b, chunk_elems=10), direct, atol=1e-14)
        assert np.all(np.diag(pairwise_euclidean(a, a)) == 0.0)
