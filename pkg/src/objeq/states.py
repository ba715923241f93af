"""Density matrices on factorized Hilbert spaces, pointer bases and seeded
random states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qops
from .errors import DimensionMismatch, InvalidDims, InvalidRank, InvalidState, NotPSD

STATE_ATOL = 1e-10
UNITARY_ATOL = 1e-10


@dataclass(frozen=True)
class HilbertFactorization:
    """``H_S ⊗ H_1 ⊗ … ⊗ H_N``; environment factors are indexed from 0."""

    system_dim: int
    env_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "env_dims", tuple(int(d) for d in self.env_dims))
        if self.system_dim < 2:
            raise InvalidDims(f"system dimension must be >= 2, got {self.system_dim}")
        if not self.env_dims:
            raise InvalidDims("need at least one environment factor")
        if any(d < 2 for d in self.env_dims):
            raise InvalidDims(f"environment dimensions must be >= 2, got {self.env_dims}")
        qops.check_dim(self.total)

    @property
    def n_env(self) -> int:
        return len(self.env_dims)

    @property
    def d_E(self) -> int:
        return int(np.prod(self.env_dims))

    @property
    def total(self) -> int:
        return self.system_dim * self.d_E

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.system_dim, *self.env_dims)


class DensityMatrix:
    """Validated, immutable density matrix.

    ``dims`` records the tensor factorization (defaults to a single factor).
    The stored operator is the Hermitian part of the input, which removes
    round-off asymmetry without changing anything above 1e-10.
    """

    __slots__ = ("_op", "_dims")

    def __init__(self, op, dims: Sequence[int] | None = None):
        arr = qops.as_operator(op)
        dim = arr.shape[0]
        dims = (dim,) if dims is None else tuple(int(d) for d in dims)
        if int(np.prod(dims)) != dim:
            raise DimensionMismatch(f"dims {dims} do not multiply to {dim}")
        arr = qops.check_hermitian(arr, STATE_ATOL)
        arr = 0.5 * (arr + qops.dagger(arr))
        tr = float(np.trace(arr).real)
        if abs(tr - 1.0) > STATE_ATOL:
            raise InvalidState(f"trace {tr!r} differs from 1 by more than {STATE_ATOL:.0e}")
        lo = float(np.linalg.eigvalsh(arr)[0])
        if lo < -STATE_ATOL:
            raise NotPSD(f"minimum eigenvalue {lo:.3e} < -{STATE_ATOL:.0e}")
        arr.setflags(write=False)
        self._op = arr
        self._dims = dims

    @classmethod
    def _trusted(cls, op, dims: Sequence[int]) -> "DensityMatrix":
        """Wrap the output of a positive trace-preserving map applied to a
        validated state. Skips the eigenvalue check only; trace is still checked."""
        arr = np.asarray(op, dtype=complex)
        arr = 0.5 * (arr + qops.dagger(arr))
        tr = float(np.trace(arr).real)
        if abs(tr - 1.0) > STATE_ATOL:
            raise InvalidState(f"trace {tr!r} differs from 1 by more than {STATE_ATOL:.0e}")
        arr.setflags(write=False)
        self = object.__new__(cls)
        self._op = arr
        self._dims = tuple(int(d) for d in dims)
        return self

    @property
    def op(self) -> np.ndarray:
        return self._op

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def dim(self) -> int:
        return self._op.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._op
        return self._op.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, dims={self.dims})"

    def purity(self) -> float:
        return float(np.real(np.vdot(self._op, self._op)))

    def reduced(self, keep: Sequence[int]) -> "DensityMatrix":
        keep = sorted(set(keep))
        reduced = qops.partial_trace(self._op, self._dims, keep)
        return DensityMatrix(reduced, [self._dims[k] for k in keep])

    def with_dims(self, dims: Sequence[int]) -> "DensityMatrix":
        dims = tuple(int(d) for d in dims)
        if int(np.prod(dims)) != self.dim:
            raise DimensionMismatch(f"dims {dims} do not multiply to {self.dim}")
        return DensityMatrix._trusted(self._op, dims)


def as_density(rho, dims: Sequence[int] | None = None) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho if dims is None or tuple(dims) == rho.dims else rho.with_dims(dims)
    return DensityMatrix(rho, dims)


@dataclass(frozen=True)
class PointerBasis:
    """Orthonormal measurement basis on the system; columns are the pointer states."""

    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = qops.as_operator(self.basis)
        err = float(np.max(np.abs(qops.dagger(b) @ b - np.eye(b.shape[0]))))
        if err > UNITARY_ATOL:
            raise InvalidState(f"pointer basis is not unitary (error {err:.3e})")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def computational(cls, dim: int) -> "PointerBasis":
        return cls(np.eye(dim, dtype=complex))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def is_computational(self) -> bool:
        return bool(np.array_equal(self.basis, np.eye(self.dim)))

    def projector(self, i: int) -> np.ndarray:
        v = self.basis[:, i]
        return np.outer(v, v.conj())

    def to_pointer_frame(self, op, d_env: int = 1) -> np.ndarray:
        """Express ``op`` on ``H_S ⊗ H_E`` in the pointer ⊗ standard basis."""
        arr = np.asarray(op, dtype=complex)
        if self.is_computational:
            return arr
        u = np.kron(self.basis, np.eye(d_env))
        return qops.dagger(u) @ arr @ u

    def from_pointer_frame(self, op, d_env: int = 1) -> np.ndarray:
        arr = np.asarray(op, dtype=complex)
        if self.is_computational:
            return arr
        u = np.kron(self.basis, np.eye(d_env))
        return u @ arr @ qops.dagger(u)


def pointer_probabilities(rho_S, basis: PointerBasis) -> np.ndarray:
    """``p_i = <i|rho_S|i>`` in the pointer basis; small negatives are clipped."""
    arr = np.asarray(as_density(rho_S))
    if arr.shape[0] != basis.dim:
        raise DimensionMismatch(f"state dim {arr.shape[0]} != basis dim {basis.dim}")
    b = basis.basis
    p = np.real(np.einsum("ki,kl,li->i", b.conj(), arr, b))
    p = np.where(p < 0.0, 0.0, p)
    return p


def random_density(dim: int, rank: int | None = None, seed: int = 0) -> DensityMatrix:
    """Rank-``rank`` Wishart state ``G G† / Tr(G G†)`` with complex Gaussian ``G``.

    Deterministic in ``(dim, rank, seed)``; ``rank`` defaults to ``dim``.
    """
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise InvalidRank(f"rank must be in [1, {dim}], got {rank}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    w = g @ g.conj().T
    return DensityMatrix(w / np.trace(w).real)


def pure_state(vector) -> DensityMatrix:
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()))


def basis_state(dim: int, index: int) -> DensityMatrix:
    op = np.zeros((dim, dim), dtype=complex)
    op[index, index] = 1.0
    return DensityMatrix(op)


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)


def product_state(parts: Sequence) -> DensityMatrix:
    """Tensor product of states; factor dims are concatenated."""
    parts = [as_density(p) for p in parts]
    if not parts:
        raise ValueError("product_state needs at least one part")
    if len(parts) == 1:
        return parts[0]
    dims = tuple(d for p in parts for d in p.dims)
    return DensityMatrix._trusted(qops.tensor_all([p.op for p in parts]), dims)
