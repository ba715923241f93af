"""Dense complex linear algebra: Kronecker products, partial traces,
Hermitian eigendecomposition with degeneracy clustering and state distances.

Operators are plain ``numpy`` arrays (square, complex). Anything exposing
``__array__`` (for instance :class:`objeq.states.DensityMatrix`) is accepted
wherever an operator is expected.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionOverflow,
    EmptyKeepSet,
    NotHermitian,
    NotPSD,
    NumericalFailure,
)

HERMITIAN_ATOL = 1e-10
PSD_ATOL = 1e-10
ENTROPY_FLOOR = 1e-14
DEFAULT_CLUSTER_REL = 1e-9

_max_dim = 4096


def get_max_dim() -> int:
    return _max_dim


def set_max_dim(value: int) -> None:
    """Set the largest Hilbert-space dimension any builder may produce."""
    global _max_dim
    if int(value) < 1:
        raise ValueError("max_dim must be positive")
    _max_dim = int(value)


@contextlib.contextmanager
def max_dim(value: int):
    previous = get_max_dim()
    set_max_dim(value)
    try:
        yield
    finally:
        set_max_dim(previous)


def check_dim(dim: int) -> int:
    if dim > _max_dim:
        raise DimensionOverflow(f"dimension {dim} exceeds max_dim={_max_dim}")
    return dim


def as_operator(op) -> np.ndarray:
    """Return ``op`` as a square complex matrix with finite entries."""
    arr = np.asarray(op, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure("operator has non-finite entries")
    return arr


def dagger(op: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(op, -1, -2))


def hermiticity_error(op) -> float:
    arr = as_operator(op)
    return float(np.max(np.abs(arr - dagger(arr))))


def check_hermitian(op, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    arr = as_operator(op)
    err = float(np.max(np.abs(arr - dagger(arr))))
    if err > atol:
        raise NotHermitian(f"operator deviates from its adjoint by {err:.3e} > {atol:.1e}")
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a Hermitian operator with eigenvalues grouped into
    degenerate clusters.

    ``clusters`` partitions ``range(dim)`` into runs of consecutive indices of
    the ascending eigenvalue list.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: tuple[tuple[int, ...], ...]
    cluster_tolerance: float

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def labels(self) -> np.ndarray:
        """Cluster index of each eigenvector."""
        out = np.empty(self.dim, dtype=int)
        for n, cluster in enumerate(self.clusters):
            out[list(cluster)] = n
        return out

    @property
    def cluster_energies(self) -> np.ndarray:
        return np.array([self.eigenvalues[list(c)].mean() for c in self.clusters])

    def projector(self, n: int) -> np.ndarray:
        v = self.eigenvectors[:, list(self.clusters[n])]
        return v @ dagger(v)

    def projectors(self) -> list[np.ndarray]:
        return [self.projector(n) for n in range(self.n_clusters)]

    def to_eigenbasis(self, op) -> np.ndarray:
        v = self.eigenvectors
        return dagger(v) @ np.asarray(op, dtype=complex) @ v

    def from_eigenbasis(self, op) -> np.ndarray:
        v = self.eigenvectors
        return v @ np.asarray(op, dtype=complex) @ dagger(v)

    def same_cluster_mask(self) -> np.ndarray:
        labels = self.labels
        return labels[:, None] == labels[None, :]


def cluster_eigenvalues(eigenvalues: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    """Single-linkage clustering of ascending eigenvalues with threshold ``tol``."""
    if len(eigenvalues) == 0:
        return ()
    breaks = np.nonzero(np.diff(eigenvalues) > tol)[0] + 1
    bounds = [0, *breaks.tolist(), len(eigenvalues)]
    return tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(len(bounds) - 1))


def default_cluster_tolerance(eigenvalues: np.ndarray, rel: float = DEFAULT_CLUSTER_REL) -> float:
    """``rel`` times the spectral range.

    A fully degenerate spectrum has zero range; the largest eigenvalue
    magnitude (or 1) is used as the scale instead so the tolerance stays
    positive.
    """
    spread = float(eigenvalues[-1] - eigenvalues[0]) if len(eigenvalues) else 0.0
    if spread <= 0.0:
        spread = max(float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0, 1.0)
    return rel * spread


def hermitian_eig(op, cluster_tolerance: float | None = None, *, rel: float = DEFAULT_CLUSTER_REL) -> SpectralDecomposition:
    """Eigendecompose a Hermitian operator and cluster degenerate levels.

    Args:
        op: Hermitian matrix (checked to 1e-10 elementwise).
        cluster_tolerance: absolute clustering threshold. When omitted it is
            ``rel * (E_max - E_min)``.
        rel: relative threshold used when ``cluster_tolerance`` is None.

    Raises:
        NotHermitian: if ``op`` is not Hermitian.
        NumericalFailure: if the eigensolver does not converge.
    """
    arr = check_hermitian(op)
    if cluster_tolerance is not None and not cluster_tolerance > 0:
        raise ValueError("cluster_tolerance must be positive")
    herm = 0.5 * (arr + dagger(arr))
    try:
        evals, evecs = np.linalg.eigh(herm)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    tol = default_cluster_tolerance(evals, rel) if cluster_tolerance is None else float(cluster_tolerance)
    evals.setflags(write=False)
    evecs.setflags(write=False)
    return SpectralDecomposition(evals, evecs, cluster_eigenvalues(evals, tol), tol)


def tensor(a, b) -> np.ndarray:
    """Kronecker product ``a ⊗ b``.

    Raises:
        DimensionOverflow: if the product dimension exceeds ``max_dim``.
    """
    a = as_operator(a)
    b = as_operator(b)
    check_dim(a.shape[0] * b.shape[0])
    return np.kron(a, b)


def tensor_all(ops: Iterable) -> np.ndarray:
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    return reduce(tensor, ops[1:], as_operator(ops[0]))


def embed(op, dims: Sequence[int], site: int) -> np.ndarray:
    """``1 ⊗ … ⊗ op ⊗ … ⊗ 1`` with ``op`` acting on factor ``site``."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[site] = as_operator(op)
    return tensor_all(factors)


def partial_trace(op, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    Kept factors appear in ascending index order in the result.

    Raises:
        DimensionMismatch: if ``prod(dims)`` differs from the operator size or
            an index is out of range.
        EmptyKeepSet: if ``keep`` is empty.
    """
    arr = as_operator(op)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != arr.shape[0]:
        raise DimensionMismatch(f"dims {dims} do not multiply to {arr.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise EmptyKeepSet("keep must name at least one factor")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionMismatch(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    if len(keep) == n:
        return arr.copy()
    tensor_form = arr.reshape(dims + dims)
    row = list(range(n))
    col = [n + k if k in keep else k for k in range(n)]
    out_labels = keep + [n + k for k in keep]
    reduced = np.einsum(tensor_form, row + col, out_labels)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return reduced.reshape(d_keep, d_keep)


def psd_eigh(rho, name: str = "state") -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a PSD operator with small negative drift clipped.

    Eigenvalues in ``[-1e-10, 0)`` become 0; anything more negative raises
    :class:`NotPSD`.
    """
    arr = check_hermitian(rho)
    evals, evecs = np.linalg.eigh(0.5 * (arr + dagger(arr)))
    if evals[0] < -PSD_ATOL:
        raise NotPSD(f"{name} has eigenvalue {evals[0]:.3e} < -{PSD_ATOL:.0e}")
    return np.clip(evals, 0.0, None), evecs


def sqrtm_psd(rho) -> np.ndarray:
    evals, evecs = psd_eigh(rho)
    return (evecs * np.sqrt(evals)) @ dagger(evecs)


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    Evaluated as the squared trace norm of ``sqrt(rho) @ sqrt(sigma)``, which
    avoids taking square roots of near-zero eigenvalues a second time.
    """
    a = as_operator(rho)
    b = as_operator(sigma)
    _check_same_dim(a, b)
    singular = np.linalg.svd(sqrtm_psd(a) @ sqrtm_psd(b), compute_uv=False)
    return float(np.clip(np.sum(singular) ** 2, 0.0, 1.0))


def trace_norm(op) -> float:
    arr = as_operator(op)
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (arr + dagger(arr))))))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a = as_operator(rho)
    b = as_operator(sigma)
    _check_same_dim(a, b)
    return float(np.clip(0.5 * trace_norm(a - b), 0.0, 1.0))


def von_neumann_entropy(rho) -> float:
    """Entropy in nats; eigenvalues below 1e-14 count as exactly zero."""
    evals = np.linalg.eigvalsh(check_hermitian(rho))
    evals = evals[evals > ENTROPY_FLOOR]
    return float(-np.sum(evals * np.log(evals)))


def mutual_information(rho, dims: Sequence[int]) -> float:
    """``S(A) + S(B) - S(AB)`` for a bipartition ``dims = [d_A, d_B]``, clipped at 0."""
    arr = as_operator(rho)
    if len(dims) != 2 or dims[0] * dims[1] != arr.shape[0]:
        raise DimensionMismatch(f"dims {list(dims)} incompatible with dimension {arr.shape[0]}")
    s_a = von_neumann_entropy(partial_trace(arr, dims, [0]))
    s_b = von_neumann_entropy(partial_trace(arr, dims, [1]))
    return max(0.0, s_a + s_b - von_neumann_entropy(arr))


def pinch_as_mixed_unitary(rho, decomp: SpectralDecomposition) -> np.ndarray:
    """Pinching written as the uniform mixture of ``d'`` phase unitaries.

    ``U_y = sum_n exp(-2πi n y / d') Π_n`` for ``y = 1..d'`` where ``d'`` is the
    number of clusters. Kept as an independent check on projector pinching.
    """
    arr = as_operator(rho)
    if arr.shape[0] != decomp.dim:
        raise DimensionMismatch(f"state dim {arr.shape[0]} != decomposition dim {decomp.dim}")
    projectors = decomp.projectors()
    d_prime = len(projectors)
    out = np.zeros_like(arr)
    for y in range(1, d_prime + 1):
        u = sum(np.exp(-2j * np.pi * n * y / d_prime) * p for n, p in enumerate(projectors, start=1))
        out += u @ arr @ dagger(u)
    return out / d_prime


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return a @ b - b @ a
