import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objeq import qops
from objeq.errors import DimensionMismatch, DimensionOverflow, EmptyKeepSet, NotHermitian, NotPSD
from objeq.hamiltonians import random_hermitian
from objeq.states import random_density

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_matrix(dim, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


class TestHermitianEig:
    def test_distinct_diagonal(self):
        d = qops.hermitian_eig(np.diag([1.0, 2.0, 3.0]), 1e-9)
        assert d.n_clusters == 3
        np.testing.assert_allclose(d.eigenvalues, [1, 2, 3])

    def test_identity_is_one_cluster(self):
        d = qops.hermitian_eig(np.eye(4), 1e-9)
        assert d.clusters == ((0, 1, 2, 3),)

    def test_zero_range_tolerance_stays_positive(self):
        assert qops.hermitian_eig(np.zeros((3, 3))).cluster_tolerance > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction(self, seed):
        h = random_hermitian(8, seed)
        d = qops.hermitian_eig(h)
        rebuilt = d.from_eigenbasis(np.diag(d.eigenvalues))
        assert np.linalg.norm(rebuilt - h) / np.linalg.norm(h) <= 1e-9
        assert np.max(np.abs(d.eigenvectors.conj().T @ d.eigenvectors - np.eye(8))) <= 1e-10

    def test_cluster_invariants(self):
        evals = np.array([0.0, 1e-12, 2e-12, 1.0, 1.0 + 5e-13, 3.0])
        d = qops.hermitian_eig(np.diag(evals), 1e-10)
        assert d.clusters == ((0, 1, 2), (3, 4), (5,))
        for a, b in zip(d.clusters, d.clusters[1:]):
            assert d.eigenvalues[b[0]] - d.eigenvalues[a[-1]] > d.cluster_tolerance

    def test_not_hermitian(self):
        with pytest.raises(NotHermitian):
            qops.hermitian_eig(np.array([[0, 1], [0, 0]]))

    def test_projectors_resolve_identity(self):
        d = qops.hermitian_eig(np.diag([1.0, 1.0, 2.0]))
        np.testing.assert_allclose(sum(d.projectors()), np.eye(3), atol=1e-12)


class TestTensor:
    def test_identities(self):
        np.testing.assert_array_equal(qops.tensor(np.eye(2), np.eye(3)), np.eye(6))

    def test_diagonal(self):
        np.testing.assert_array_equal(qops.tensor(np.diag([1, 2]), np.diag([3, 4])), np.diag([3, 4, 6, 8]))

    @pytest.mark.parametrize("seed", range(3))
    def test_mixed_product(self, seed):
        a, b, c, d = (random_matrix(2, seed * 4 + k) for k in range(4))
        lhs = qops.tensor(a, b) @ qops.tensor(c, d)
        np.testing.assert_allclose(lhs, qops.tensor(a @ c, b @ d), atol=1e-12)

    def test_associative_on_integers(self):
        rng = np.random.default_rng(0)
        a, b, c = (rng.integers(-5, 5, (2, 2)) for _ in range(3))
        np.testing.assert_array_equal(qops.tensor(qops.tensor(a, b), c), qops.tensor(a, qops.tensor(b, c)))

    def test_overflow(self):
        with qops.max_dim(8):
            with pytest.raises(DimensionOverflow):
                qops.tensor(np.eye(4), np.eye(4))
        assert qops.get_max_dim() == 4096


class TestPartialTrace:
    def test_product_state(self):
        rs, re = random_density(2, seed=1), random_density(3, seed=2)
        out = qops.partial_trace(qops.tensor(rs.op, re.op), [2, 3], [0])
        np.testing.assert_allclose(out, rs.op, atol=1e-12)

    def test_maximally_mixed(self):
        np.testing.assert_allclose(qops.partial_trace(np.eye(4) / 4, [2, 2], [1]), np.eye(2) / 2, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_duality(self, seed):
        rho = random_density(4, seed=seed).op
        a = random_matrix(2, 100 + seed)
        lhs = np.trace(qops.partial_trace(rho, [2, 2], [0]) @ a)
        rhs = np.trace(rho @ np.kron(a, np.eye(2)))
        assert abs(lhs - rhs) <= 1e-11

    def test_keep_order_is_ascending(self):
        parts = [random_density(d, seed=d).op for d in (2, 3, 2)]
        full = qops.tensor_all(parts)
        out = qops.partial_trace(full, [2, 3, 2], [2, 0])
        np.testing.assert_allclose(out, np.kron(parts[0], parts[2]), atol=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyKeepSet):
            qops.partial_trace(np.eye(4), [2, 2], [])
        with pytest.raises(DimensionMismatch):
            qops.partial_trace(np.eye(4), [2, 3], [0])
        with pytest.raises(DimensionMismatch):
            qops.partial_trace(np.eye(4), [2, 2], [2])

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, keep=st.sets(st.integers(0, 2), min_size=1))
    def test_trace_preserving_and_positive(self, seed, keep):
        rho = random_density(12, seed=seed).op
        out = qops.partial_trace(rho, [2, 3, 2], keep)
        assert abs(np.trace(out) - 1) <= 1e-12
        assert np.linalg.eigvalsh(out)[0] >= -1e-10


class TestDistances:
    @pytest.mark.parametrize("seed", range(5))
    def test_self_fidelity(self, seed):
        rho = random_density(4, seed=seed)
        assert abs(qops.fidelity(rho, rho) - 1) <= 1e-10

    def test_orthogonal(self):
        zero, one = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        assert qops.fidelity(zero, one) <= 1e-12
        assert qops.trace_distance(zero, one) == pytest.approx(1.0)

    def test_fidelity_above_overlap(self):
        for seed in range(200):
            rho, sigma = random_density(2, seed=2 * seed), random_density(2, seed=2 * seed + 1)
            assert qops.fidelity(rho, sigma) >= np.trace(rho.op @ sigma.op).real - 1e-12

    def test_fidelity_matches_textbook_formula(self):
        rho, sigma = random_density(3, seed=1).op, random_density(3, seed=2).op
        s = qops.sqrtm_psd(sigma)
        textbook = np.trace(qops.sqrtm_psd(s @ rho @ s)).real ** 2
        assert qops.fidelity(rho, sigma) == pytest.approx(textbook, abs=1e-10)

    def test_not_psd(self):
        with pytest.raises(NotPSD):
            qops.fidelity(np.diag([1.1, -0.1]), np.eye(2) / 2)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            qops.trace_distance(np.eye(2) / 2, np.eye(3) / 3)

    def test_triangle_inequality(self):
        for seed in range(100):
            a, b, c = (random_density(3, seed=3 * seed + k) for k in range(3))
            assert qops.trace_distance(a, c) <= qops.trace_distance(a, b) + qops.trace_distance(b, c) + 1e-10

    @settings(max_examples=60, deadline=None)
    @given(seed=seeds, dim=st.integers(2, 5), rank=st.integers(1, 5))
    def test_fuchs_van_de_graaf(self, seed, dim, rank):
        rho = random_density(dim, rank=min(rank, dim), seed=seed)
        sigma = random_density(dim, seed=seed + 1)
        f, d = qops.fidelity(rho, sigma), qops.trace_distance(rho, sigma)
        assert 1 - np.sqrt(f) - 1e-9 <= d <= np.sqrt(1 - f) + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_fidelity_symmetric(self, seed):
        rho, sigma = random_density(4, rank=2, seed=seed), random_density(4, seed=seed ^ 1)
        assert abs(qops.fidelity(rho, sigma) - qops.fidelity(sigma, rho)) <= 1e-9


class TestMutualInformation:
    def test_product(self):
        rho = qops.tensor(random_density(2, seed=1).op, random_density(3, seed=2).op)
        assert qops.mutual_information(rho, [2, 3]) <= 1e-10

    def test_bell_state(self):
        v = np.array([1, 0, 0, 1]) / np.sqrt(2)
        assert qops.mutual_information(np.outer(v, v), [2, 2]) == pytest.approx(2 * np.log(2), abs=1e-9)

    def test_classical_quantum_holevo(self):
        p = np.array([0.3, 0.7])
        cond = [random_density(3, seed=5).op, random_density(3, seed=6).op]
        rho = sum(pi * np.kron(np.diag(np.eye(2)[i]), c) for i, (pi, c) in enumerate(zip(p, cond)))
        shannon = -np.sum(p * np.log(p))
        holevo = qops.von_neumann_entropy(sum(pi * c for pi, c in zip(p, cond))) - sum(
            pi * qops.von_neumann_entropy(c) for pi, c in zip(p, cond)
        )
        # I(S:E) = H(p) + S(avg) - (H(p) + sum p S(cond)) = Holevo quantity
        assert qops.mutual_information(rho, [2, 3]) == pytest.approx(holevo, abs=1e-10)
        assert holevo <= shannon

    def test_bad_dims(self):
        with pytest.raises(DimensionMismatch):
            qops.mutual_information(np.eye(4) / 4, [2, 3])


class TestMixedUnitaryPinch:
    def test_single_cluster_is_identity_map(self):
        rho = random_density(3, seed=0).op
        np.testing.assert_allclose(qops.pinch_as_mixed_unitary(rho, qops.hermitian_eig(np.eye(3))), rho, atol=1e-12)

    def test_diagonal_state_unchanged(self):
        rho = np.diag([0.2, 0.3, 0.5])
        out = qops.pinch_as_mixed_unitary(rho, qops.hermitian_eig(np.diag([1.0, 2.0, 4.0])))
        np.testing.assert_allclose(out, rho, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_projector_sum(self, seed):
        rho = random_density(6, seed=seed).op
        d = qops.hermitian_eig(random_hermitian(6, seed + 50))
        direct = sum(p @ rho @ p for p in d.projectors())
        assert qops.trace_distance(qops.pinch_as_mixed_unitary(rho, d), direct) <= 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            qops.pinch_as_mixed_unitary(np.eye(2) / 2, qops.hermitian_eig(np.eye(3)))
