import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objeq import qops
from objeq.errors import DimensionMismatch, DimensionOverflow, InvalidDims, InvalidRank, InvalidState, NotHermitian, NotPSD
from objeq.states import (
    DensityMatrix,
    HilbertFactorization,
    PointerBasis,
    basis_state,
    maximally_mixed,
    pointer_probabilities,
    product_state,
    pure_state,
    random_density,
)


class TestHilbertFactorization:
    def test_derived_sizes(self):
        f = HilbertFactorization(2, (2, 3, 4))
        assert (f.n_env, f.d_E, f.total, f.dims) == (3, 24, 48, (2, 2, 3, 4))

    @pytest.mark.parametrize("args", [(1, (2,)), (2, ()), (2, (1, 2))])
    def test_invalid(self, args):
        with pytest.raises(InvalidDims):
            HilbertFactorization(*args)

    def test_overflow(self):
        with pytest.raises(DimensionOverflow):
            HilbertFactorization(2, (64, 64))


class TestDensityMatrix:
    def test_validation(self):
        with pytest.raises(NotHermitian):
            DensityMatrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
        with pytest.raises(InvalidState):
            DensityMatrix(np.eye(2))
        with pytest.raises(NotPSD):
            DensityMatrix(np.diag([1.5, -0.5]))
        with pytest.raises(DimensionMismatch):
            DensityMatrix(np.eye(4) / 4, (2, 3))

    def test_immutable(self):
        rho = maximally_mixed(2)
        with pytest.raises(ValueError):
            rho.op[0, 0] = 1.0

    def test_reduced(self):
        rho = product_state([basis_state(2, 1), maximally_mixed(3)])
        np.testing.assert_allclose(rho.reduced([0]).op, np.diag([0, 1]), atol=1e-15)

    def test_pure_state_purity(self):
        assert pure_state([1, 1j]).purity() == pytest.approx(1.0)


class TestPointerProbabilities:
    def test_basis_state(self):
        np.testing.assert_allclose(pointer_probabilities(basis_state(3, 0), PointerBasis.computational(3)), [1, 0, 0])

    def test_maximally_mixed_qutrit(self):
        np.testing.assert_allclose(pointer_probabilities(maximally_mixed(3), PointerBasis.computational(3)), [1 / 3] * 3)

    def test_plus_state(self):
        np.testing.assert_allclose(pointer_probabilities(pure_state([1, 1]), PointerBasis.computational(2)), [0.5, 0.5])

    def test_rotated_basis(self):
        hadamard = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        p = pointer_probabilities(pure_state([1, 1]), PointerBasis(hadamard))
        np.testing.assert_allclose(p, [1, 0], atol=1e-15)

    def test_non_unitary_basis(self):
        with pytest.raises(InvalidState):
            PointerBasis(np.array([[1, 1], [0, 1]]))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            pointer_probabilities(maximally_mixed(3), PointerBasis.computational(2))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 6))
    def test_normalised(self, seed, dim):
        basis = PointerBasis(np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))[0])
        p = pointer_probabilities(random_density(dim, seed=seed), basis)
        assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-10


class TestRandomDensity:
    def test_rank_one_is_pure(self):
        assert random_density(5, rank=1, seed=3).purity() == pytest.approx(1.0, abs=1e-10)

    def test_deterministic(self):
        np.testing.assert_array_equal(random_density(4, seed=9).op, random_density(4, seed=9).op)

    def test_full_rank(self):
        assert np.linalg.eigvalsh(random_density(8, rank=8, seed=7).op).min() > 0

    @pytest.mark.parametrize("rank", [0, 5])
    def test_invalid_rank(self, rank):
        with pytest.raises(InvalidRank):
            random_density(4, rank=rank)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.integers(1, 6), rank=st.integers(1, 6))
    def test_rank(self, seed, dim, rank):
        rank = min(rank, dim)
        rho = random_density(dim, rank=rank, seed=seed)
        assert np.linalg.matrix_rank(rho.op, tol=1e-10) == rank


class TestProductState:
    def test_single_part(self):
        rho = random_density(3, seed=1)
        assert product_state([rho]) is rho

    def test_maximally_mixed_pair(self):
        out = product_state([maximally_mixed(2), maximally_mixed(2)])
        np.testing.assert_allclose(out.op, np.eye(4) / 4)
        assert out.dims == (2, 2)

    def test_round_trip(self):
        parts = [random_density(d, seed=d) for d in (2, 3, 2)]
        rho = product_state(parts)
        for k, part in enumerate(parts):
            np.testing.assert_allclose(rho.reduced([k]).op, part.op, atol=1e-11)

    def test_overflow(self):
        with qops.max_dim(8):
            with pytest.raises(DimensionOverflow):
                product_state([maximally_mixed(4), maximally_mixed(4)])
