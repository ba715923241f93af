import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objeq import hamiltonians as hm
from objeq import qops
from objeq.errors import DegenerateAfterRetries, DimensionMismatch, NotHermitian
from objeq.states import HilbertFactorization, PointerBasis


def brute_force_equal_gaps(evals, tol):
    """Exhaustive scan over all pairs of distinct level pairs."""
    evals = np.sort(evals)
    pairs = list(itertools.combinations(range(len(evals)), 2))
    for (a, b), (c, d) in itertools.combinations(pairs, 2):
        if abs((evals[b] - evals[a]) - (evals[d] - evals[c])) <= tol:
            return True
    return False


def brute_force_degenerate(evals, tol):
    return any(abs(x - y) <= tol for x, y in itertools.combinations(evals, 2))


class TestAssemble:
    def test_zero_branches(self):
        spec = hm.ConditionalHamiltonianSpec((np.zeros((3, 3)), np.zeros((3, 3))))
        np.testing.assert_array_equal(hm.assemble(spec), np.zeros((6, 6)))

    def test_von_neumann_kronecker(self):
        spec = hm.VonNeumannSpec((1.0, -1.0), np.diag([1.0, -1.0]))
        np.testing.assert_array_equal(hm.assemble(spec), np.diag([1, -1, -1, 1]))

    @pytest.mark.parametrize("seed", range(3))
    def test_star_matches_conditional(self, seed):
        spec = hm.random_branch_ensemble(HilbertFactorization(2, (2, 2)), seed=seed)
        np.testing.assert_allclose(hm.assemble(spec), hm.assemble(spec.to_conditional()), atol=1e-12)

    def test_star_with_rotated_basis(self):
        basis = PointerBasis(np.array([[1, 1], [1, -1]]) / np.sqrt(2))
        spec = hm.random_branch_ensemble(HilbertFactorization(2, (2, 3)), seed=2, basis=basis)
        np.testing.assert_allclose(hm.assemble(spec), hm.assemble(spec.to_conditional()), atol=1e-12)

    def test_von_neumann_commutes_with_pointer(self):
        spec = hm.random_von_neumann(3, (2, 2), 4)
        x = np.kron(spec.system_operator(), np.eye(4))
        assert np.max(np.abs(qops.commutator(hm.assemble(spec), x))) <= 1e-12

    def test_conditional_commutes_with_projectors(self):
        spec = hm.random_conditional(3, (4,), 1)
        H = hm.assemble(spec)
        for i in range(3):
            p = np.kron(spec.basis.projector(i), np.eye(4))
            assert np.max(np.abs(qops.commutator(H, p))) <= 1e-12

    def test_star_branch_eigenvalues_are_kronecker_sums(self):
        spec = hm.random_branch_ensemble(HilbertFactorization(2, (2, 3)), seed=5)
        for i in range(2):
            np.testing.assert_allclose(
                np.sort(spec.branch_eigenvalues(i)), np.linalg.eigvalsh(spec.branch_operator(i)), atol=1e-12
            )

    def test_validation(self):
        with pytest.raises(NotHermitian):
            hm.ConditionalHamiltonianSpec((np.array([[0, 1], [0, 0]]), np.eye(2)))
        with pytest.raises(DimensionMismatch):
            hm.ConditionalHamiltonianSpec((np.eye(2), np.eye(3)))


class TestDiagnoseSpectrum:
    def test_generic(self):
        d = hm.diagnose_spectrum(np.diag([0.0, 1.0, 3.0]))
        assert d.is_nondegenerate and not d.has_equal_gaps
        assert d.min_gap == pytest.approx(1.0)
        assert d.gap_witness is None and d.degeneracy_witness is None

    def test_equal_gaps(self):
        d = hm.diagnose_spectrum(np.diag([0.0, 1.0, 2.0]))
        assert d.has_equal_gaps
        a, b, c, e = d.gap_witness
        evals = [0.0, 1.0, 2.0]
        assert evals[b] - evals[a] == pytest.approx(evals[e] - evals[c])

    def test_degenerate(self):
        d = hm.diagnose_spectrum(np.diag([0.0, 0.0, 1.0]))
        assert not d.is_nondegenerate and d.degeneracy_witness == (0, 1)

    def test_not_hermitian(self):
        with pytest.raises(NotHermitian):
            hm.diagnose_spectrum(np.array([[0, 1], [0, 0]]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gue_matches_brute_force(self, seed):
        H = hm.random_hermitian(8, seed)
        d = hm.diagnose_spectrum(H)
        evals = np.linalg.eigvalsh(H)
        assert d.is_nondegenerate
        assert d.has_equal_gaps == brute_force_equal_gaps(evals, d.tolerance)

    @settings(max_examples=80, deadline=None)
    @given(
        levels=st.lists(st.integers(-6, 6), min_size=2, max_size=7),
        jitter=st.integers(0, 2**32 - 1),
    )
    def test_sort_scan_equals_exhaustive_scan(self, levels, jitter):
        # integer levels produce many exact coincidences; tiny jitter probes the tolerance edge
        rng = np.random.default_rng(jitter)
        evals = np.array(levels, dtype=float) + rng.uniform(-1e-12, 1e-12, len(levels))
        tol = 1e-9
        d = hm.diagnose_eigenvalues(evals, tol)
        assert d.has_equal_gaps == brute_force_equal_gaps(evals, tol)
        assert d.is_nondegenerate == (not brute_force_degenerate(evals, tol))


class TestRandomBuilders:
    def test_deterministic(self):
        fact = HilbertFactorization(2, (2, 2, 2))
        a, b = hm.random_branch_ensemble(fact, seed=4), hm.random_branch_ensemble(fact, seed=4)
        assert a.couplings == b.couplings
        for row_a, row_b in zip(a.local_ops, b.local_ops):
            for x, y in zip(row_a, row_b):
                np.testing.assert_array_equal(x, y)

    def test_nondegenerate_seed_one(self):
        spec = hm.random_branch_ensemble(HilbertFactorization(2, (2, 2, 2)), d_S=2, seed=1)
        assert hm.diagnose_spectrum(hm.assemble(spec)).is_nondegenerate

    def test_hermitian_and_couplings(self):
        spec = hm.random_branch_ensemble(HilbertFactorization(3, (2, 3)), seed=8)
        for row in spec.local_ops:
            for op in row:
                assert qops.hermiticity_error(op) <= 1e-12
        assert all(0.5 <= c <= 1.5 for c in spec.couplings)

    def test_redraw_exhaustion(self, monkeypatch):
        calls = []

        def zero_draw(dim, rng):
            calls.append(dim)
            return np.zeros((dim, dim), dtype=complex)

        monkeypatch.setattr(hm, "random_gue", zero_draw)
        with pytest.raises(DegenerateAfterRetries):
            hm.random_branch_ensemble(HilbertFactorization(2, (2,)), seed=0)
        # initial draw plus 16 redraws, two branches each
        assert len(calls) == 2 * 17

    def test_zero_coupling_rejected(self):
        with pytest.raises(ValueError):
            hm.StarHamiltonianSpec((0.0,), ((np.eye(2),), (np.eye(2),)))

    def test_iid_star_identical_observers(self):
        spec = hm.iid_star(HilbertFactorization(2, (2, 2, 2)), 3)
        for row in spec.local_ops:
            assert all(op is row[0] or np.array_equal(op, row[0]) for op in row)
        assert len(set(spec.couplings)) == 3

    def test_random_hermitian_is_gue_convention(self):
        H = hm.random_hermitian(200, 0)
        # off-diagonal entries have E|H_ij|^2 = 1/2 under (A + A^†)/2 with A = (X + iY)/sqrt(2)
        off = H[np.triu_indices(200, 1)]
        assert np.mean(np.abs(off) ** 2) == pytest.approx(0.5, rel=0.05)


class TestCrossBranchOverlaps:
    def test_no_shared_levels(self):
        spec = hm.ConditionalHamiltonianSpec((np.diag([0.0, 1.0]), np.diag([2.0, 3.0])))
        assert hm.cross_branch_overlaps(spec, np.eye(2) / 2) == []

    def test_shared_level_overlap(self):
        spec = hm.ConditionalHamiltonianSpec((np.diag([0.0, 1.0]), np.diag([0.0, 3.0])))
        (i, n, j, m, overlap), = hm.cross_branch_overlaps(spec, np.diag([0.4, 0.6]))
        assert (i, n, j, m) == (0, 0, 1, 0) and overlap == pytest.approx(0.4)


class TestSerialization:
    @pytest.mark.parametrize(
        "spec",
        [
            hm.random_conditional(2, (3,), 0),
            hm.random_branch_ensemble(HilbertFactorization(2, (2, 2)), seed=1),
            hm.random_von_neumann(2, (2, 2), 2),
        ],
    )
    def test_round_trip(self, spec):
        data = json.loads(json.dumps(hm.spec_to_dict(spec)))
        back = hm.spec_from_dict(data)
        assert type(back) is type(spec)
        np.testing.assert_array_equal(hm.assemble(back), hm.assemble(spec))
        assert back.dims == spec.dims
