"""Builders for conditional, star and von Neumann Hamiltonians, spectrum
diagnostics (degeneracy, equal gaps) and seeded random ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import qops
from .errors import DegenerateAfterRetries, DimensionMismatch, InvalidDims
from .states import HilbertFactorization, PointerBasis

DEFAULT_GAP_REL = 1e-8
MAX_REDRAWS = 16


def _frozen(op) -> np.ndarray:
    arr = np.array(qops.check_hermitian(op), dtype=complex)
    arr.setflags(write=False)
    return arr


def _default_basis(basis, d_S):
    if basis is None:
        return PointerBasis.computational(d_S)
    if basis.dim != d_S:
        raise DimensionMismatch(f"pointer basis dim {basis.dim} != number of branches {d_S}")
    return basis


@dataclass(frozen=True)
class ConditionalHamiltonianSpec:
    """``H = sum_i |i><i| ⊗ H_E^(i)``."""

    branch_ops: tuple[np.ndarray, ...] = field(repr=False)
    basis: PointerBasis | None = None
    env_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        ops = tuple(_frozen(op) for op in self.branch_ops)
        if not ops:
            raise InvalidDims("need at least one branch operator")
        d_E = ops[0].shape[0]
        if any(op.shape[0] != d_E for op in ops):
            raise DimensionMismatch("branch operators have different dimensions")
        env_dims = (d_E,) if self.env_dims is None else tuple(int(d) for d in self.env_dims)
        if int(np.prod(env_dims)) != d_E:
            raise DimensionMismatch(f"env_dims {env_dims} do not multiply to {d_E}")
        object.__setattr__(self, "branch_ops", ops)
        object.__setattr__(self, "env_dims", env_dims)
        object.__setattr__(self, "basis", _default_basis(self.basis, len(ops)))

    @property
    def d_S(self) -> int:
        return len(self.branch_ops)

    @property
    def d_E(self) -> int:
        return self.branch_ops[0].shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.d_S, *self.env_dims)

    def branch_operator(self, i: int) -> np.ndarray:
        return self.branch_ops[i]


@dataclass(frozen=True)
class StarHamiltonianSpec:
    """``H = sum_i |i><i| ⊗ sum_k c_k H_k^(i)``; ``local_ops[i][k]`` is ``H_k^(i)``."""

    couplings: tuple[float, ...]
    local_ops: tuple[tuple[np.ndarray, ...], ...] = field(repr=False)
    basis: PointerBasis | None = None

    def __post_init__(self):
        couplings = tuple(float(c) for c in self.couplings)
        if not couplings:
            raise InvalidDims("need at least one environment factor")
        if not all(np.isfinite(c) and c != 0.0 for c in couplings):
            raise ValueError("couplings must be finite and non-zero")
        grid = tuple(tuple(_frozen(op) for op in row) for row in self.local_ops)
        if not grid:
            raise InvalidDims("need at least one branch")
        if any(len(row) != len(couplings) for row in grid):
            raise DimensionMismatch("every branch needs one local operator per coupling")
        dims = tuple(op.shape[0] for op in grid[0])
        if any(tuple(op.shape[0] for op in row) != dims for row in grid):
            raise DimensionMismatch("local operator dimensions differ between branches")
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "local_ops", grid)
        object.__setattr__(self, "basis", _default_basis(self.basis, len(grid)))

    @property
    def d_S(self) -> int:
        return len(self.local_ops)

    @property
    def n_env(self) -> int:
        return len(self.couplings)

    @property
    def env_dims(self) -> tuple[int, ...]:
        return tuple(op.shape[0] for op in self.local_ops[0])

    @property
    def d_E(self) -> int:
        return int(np.prod(self.env_dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.d_S, *self.env_dims)

    @property
    def factorization(self) -> HilbertFactorization:
        return HilbertFactorization(self.d_S, self.env_dims)

    def branch_operator(self, i: int) -> np.ndarray:
        qops.check_dim(self.d_E)
        out = np.zeros((self.d_E, self.d_E), dtype=complex)
        for k, (c, op) in enumerate(zip(self.couplings, self.local_ops[i])):
            out += c * qops.embed(op, self.env_dims, k)
        return out

    def branch_eigenvalues(self, i: int) -> np.ndarray:
        """Unsorted spectrum of branch ``i`` in tensor order (Kronecker sum)."""
        total = np.zeros(1)
        for c, op in zip(self.couplings, self.local_ops[i]):
            total = np.add.outer(total, c * np.linalg.eigvalsh(op)).ravel()
        return total

    def spectrum(self) -> np.ndarray:
        return np.sort(np.concatenate([self.branch_eigenvalues(i) for i in range(self.d_S)]))

    def to_conditional(self) -> ConditionalHamiltonianSpec:
        return ConditionalHamiltonianSpec(
            tuple(self.branch_operator(i) for i in range(self.d_S)), self.basis, self.env_dims
        )


@dataclass(frozen=True)
class VonNeumannSpec:
    """``H = X_S ⊗ Y`` with ``X_S = sum_i x_i |i><i|``."""

    pointer_values: tuple[float, ...]
    env_op: np.ndarray = field(repr=False)
    basis: PointerBasis | None = None
    env_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        xs = tuple(float(x) for x in self.pointer_values)
        if not xs or not all(np.isfinite(xs)):
            raise ValueError("pointer values must be finite and non-empty")
        y = _frozen(self.env_op)
        env_dims = (y.shape[0],) if self.env_dims is None else tuple(int(d) for d in self.env_dims)
        if int(np.prod(env_dims)) != y.shape[0]:
            raise DimensionMismatch(f"env_dims {env_dims} do not multiply to {y.shape[0]}")
        object.__setattr__(self, "pointer_values", xs)
        object.__setattr__(self, "env_op", y)
        object.__setattr__(self, "env_dims", env_dims)
        object.__setattr__(self, "basis", _default_basis(self.basis, len(xs)))

    @property
    def d_S(self) -> int:
        return len(self.pointer_values)

    @property
    def d_E(self) -> int:
        return self.env_op.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.d_S, *self.env_dims)

    def system_operator(self) -> np.ndarray:
        b = self.basis.basis
        return (b * np.asarray(self.pointer_values)) @ b.conj().T

    def to_conditional(self) -> ConditionalHamiltonianSpec:
        return ConditionalHamiltonianSpec(
            tuple(x * self.env_op for x in self.pointer_values), self.basis, self.env_dims
        )


HamiltonianSpec = Union[ConditionalHamiltonianSpec, StarHamiltonianSpec, VonNeumannSpec]


def assemble(spec: HamiltonianSpec) -> np.ndarray:
    """Dense Hermitian operator on ``H_S ⊗ H_E`` for any structured spec."""
    qops.check_dim(spec.d_S * spec.d_E)
    if isinstance(spec, VonNeumannSpec):
        return qops.tensor(spec.system_operator(), spec.env_op)
    if isinstance(spec, ConditionalHamiltonianSpec):
        out = np.zeros((spec.d_S * spec.d_E,) * 2, dtype=complex)
        for i, op in enumerate(spec.branch_ops):
            out += np.kron(spec.basis.projector(i), op)
        return out
    if isinstance(spec, StarHamiltonianSpec):
        # summed observer by observer on the full space, not branch by branch
        d_S, dims = spec.d_S, spec.env_dims
        out = np.zeros((d_S * spec.d_E,) * 2, dtype=complex)
        for k, c in enumerate(spec.couplings):
            term = sum(np.kron(spec.basis.projector(i), qops.embed(spec.local_ops[i][k], dims, k)) for i in range(d_S))
            out += c * term
        return out
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


@dataclass(frozen=True)
class SpectrumDiagnostics:
    is_nondegenerate: bool
    has_equal_gaps: bool | None
    min_gap: float
    tolerance: float
    degeneracy_witness: tuple[int, int] | None = None
    gap_witness: tuple[int, int, int, int] | None = None


def default_gap_tolerance(eigenvalues: np.ndarray, rel: float = DEFAULT_GAP_REL) -> float:
    return qops.default_cluster_tolerance(np.sort(np.asarray(eigenvalues, dtype=float)), rel)


def diagnose_eigenvalues(eigenvalues, gap_tolerance: float | None = None, *, check_gaps: bool = True) -> SpectrumDiagnostics:
    """Degeneracy and equal-gap diagnostics of a real spectrum.

    ``min_gap`` is the smallest spacing between adjacent *distinct* levels
    (spacings within ``gap_tolerance`` are degeneracies, not gaps); it is 0
    for a single-level spectrum. Equal gaps are found by sorting all
    ``E_b - E_a`` (a < b) and comparing neighbours, which detects a matching
    pair exactly when an exhaustive pair scan would. Indices in witnesses
    refer to the ascending eigenvalue order.
    """
    evals = np.sort(np.asarray(eigenvalues, dtype=float))
    tol = default_gap_tolerance(evals) if gap_tolerance is None else float(gap_tolerance)
    spacings = np.diff(evals)
    close = np.nonzero(spacings <= tol)[0]
    degeneracy = (int(close[0]), int(close[0]) + 1) if len(close) else None
    distinct = spacings[spacings > tol]
    min_gap = float(distinct.min()) if len(distinct) else 0.0
    if not check_gaps:
        return SpectrumDiagnostics(degeneracy is None, None, min_gap, tol, degeneracy)
    a, b = np.triu_indices(len(evals), k=1)
    gaps = evals[b] - evals[a]
    order = np.argsort(gaps, kind="stable")
    hits = np.nonzero(np.diff(gaps[order]) <= tol)[0]
    gap_witness = None
    if len(hits):
        p, q = order[hits[0]], order[hits[0] + 1]
        gap_witness = (int(a[p]), int(b[p]), int(a[q]), int(b[q]))
    return SpectrumDiagnostics(degeneracy is None, gap_witness is not None, min_gap, tol, degeneracy, gap_witness)


def diagnose_spectrum(H, gap_tolerance: float | None = None, *, check_gaps: bool = True) -> SpectrumDiagnostics:
    """Diagnose a Hermitian operator; ``gap_tolerance`` defaults to 1e-8 × spectral range."""
    arr = qops.check_hermitian(H)
    return diagnose_eigenvalues(np.linalg.eigvalsh(arr), gap_tolerance, check_gaps=check_gaps)


def spectrum_of(spec_or_H) -> np.ndarray:
    """Sorted spectrum, using branch structure when available."""
    if isinstance(spec_or_H, StarHamiltonianSpec):
        return spec_or_H.spectrum()
    if isinstance(spec_or_H, VonNeumannSpec):
        eps = np.linalg.eigvalsh(spec_or_H.env_op)
        return np.sort(np.outer(spec_or_H.pointer_values, eps).ravel())
    if isinstance(spec_or_H, ConditionalHamiltonianSpec):
        return np.sort(np.concatenate([np.linalg.eigvalsh(op) for op in spec_or_H.branch_ops]))
    return np.linalg.eigvalsh(qops.check_hermitian(spec_or_H))


def random_gue(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian Hermitian matrix; off-diagonal entries have unit variance."""
    a = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    return 0.5 * (a + a.conj().T)


def random_hermitian(dim: int, seed: int) -> np.ndarray:
    return random_gue(dim, np.random.default_rng(seed))


def random_branch_ensemble(
    fact: HilbertFactorization,
    d_S: int | None = None,
    seed: int = 0,
    *,
    coupling_range: tuple[float, float] = (0.5, 1.5),
    basis: PointerBasis | None = None,
) -> StarHamiltonianSpec:
    """Random star Hamiltonian with GUE local operators and uniform couplings.

    The draw is repeated (up to 16 redraws from the same generator) until the
    assembled Hamiltonian is non-degenerate.

    Raises:
        DegenerateAfterRetries: if every draw was degenerate.
    """
    d_S = fact.system_dim if d_S is None else int(d_S)
    if d_S != fact.system_dim:
        raise DimensionMismatch(f"d_S={d_S} disagrees with factorization system_dim={fact.system_dim}")
    rng = np.random.default_rng(seed)
    lo, hi = coupling_range
    for _ in range(MAX_REDRAWS + 1):
        couplings = rng.uniform(lo, hi, size=fact.n_env)
        grid = [[random_gue(d, rng) for d in fact.env_dims] for _ in range(d_S)]
        spec = StarHamiltonianSpec(tuple(couplings), tuple(tuple(row) for row in grid), basis)
        if diagnose_eigenvalues(spec.spectrum(), check_gaps=False).is_nondegenerate:
            return spec
    raise DegenerateAfterRetries(f"no non-degenerate draw after {MAX_REDRAWS} redraws (seed={seed})")


def iid_star(
    fact: HilbertFactorization,
    seed: int = 0,
    *,
    coupling_range: tuple[float, float] = (0.5, 1.5),
) -> StarHamiltonianSpec:
    """Star Hamiltonian whose observers all carry the same branch operators.

    Only the couplings differ between observers, so pinched observer states
    coincide while the total spectrum stays generically non-degenerate.
    """
    if len(set(fact.env_dims)) != 1:
        raise InvalidDims("identical observers need equal factor dimensions")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS + 1):
        couplings = rng.uniform(*coupling_range, size=fact.n_env)
        row_ops = [random_gue(fact.env_dims[0], rng) for _ in range(fact.system_dim)]
        grid = tuple(tuple(row_ops[i] for _ in range(fact.n_env)) for i in range(fact.system_dim))
        spec = StarHamiltonianSpec(tuple(couplings), grid)
        if diagnose_eigenvalues(spec.spectrum(), check_gaps=False).is_nondegenerate:
            return spec
    raise DegenerateAfterRetries(f"no non-degenerate draw after {MAX_REDRAWS} redraws (seed={seed})")


def random_conditional(d_S: int, env_dims: Sequence[int], seed: int) -> ConditionalHamiltonianSpec:
    env_dims = tuple(int(d) for d in env_dims)
    d_E = int(np.prod(env_dims))
    qops.check_dim(d_S * d_E)
    rng = np.random.default_rng(seed)
    return ConditionalHamiltonianSpec(tuple(random_gue(d_E, rng) for _ in range(d_S)), None, env_dims)


def random_von_neumann(d_S: int, env_dims: Sequence[int], seed: int) -> VonNeumannSpec:
    """Pointer values uniform in [-1, 1] with a GUE environment observable."""
    env_dims = tuple(int(d) for d in env_dims)
    d_E = int(np.prod(env_dims))
    qops.check_dim(d_S * d_E)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.0, 1.0, size=d_S)
    return VonNeumannSpec(tuple(xs), random_gue(d_E, rng), None, env_dims)


def cross_branch_overlaps(
    spec: ConditionalHamiltonianSpec | StarHamiltonianSpec,
    rho_E0,
    gap_tolerance: float | None = None,
) -> list[tuple[int, int, int, int, float]]:
    """Overlaps ``||P_n^(i) rho_E0 P_m^(j)||`` for every coinciding pair of levels
    in distinct branches ``i < j``.

    Levels are the degenerate clusters of each branch operator. An empty list
    means the branches share no energy.
    """
    if isinstance(spec, StarHamiltonianSpec):
        spec = spec.to_conditional()
    rho = np.asarray(rho_E0, dtype=complex)
    if rho.shape[0] != spec.d_E:
        raise DimensionMismatch(f"environment state dim {rho.shape[0]} != {spec.d_E}")
    all_evals = spectrum_of(spec)
    tol = default_gap_tolerance(all_evals) if gap_tolerance is None else gap_tolerance
    decomps = [qops.hermitian_eig(op, tol) for op in spec.branch_ops]
    found = []
    for i in range(spec.d_S):
        for j in range(i + 1, spec.d_S):
            ei, ej = decomps[i].cluster_energies, decomps[j].cluster_energies
            for n, m in zip(*np.nonzero(np.abs(ei[:, None] - ej[None, :]) <= tol)):
                block = decomps[i].projector(n) @ rho @ decomps[j].projector(m)
                found.append((i, int(n), j, int(m), float(np.linalg.norm(block, 2))))
    return found


def _matrix_to_json(op) -> dict:
    arr = np.asarray(op, dtype=complex)
    return {"re": arr.real.tolist(), "im": arr.imag.tolist()}


def _matrix_from_json(obj) -> np.ndarray:
    return np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)


def spec_to_dict(spec: HamiltonianSpec) -> dict:
    """JSON-compatible description of a spec (round-trips through :func:`spec_from_dict`)."""
    out: dict = {"basis": _matrix_to_json(spec.basis.basis)}
    if isinstance(spec, ConditionalHamiltonianSpec):
        out.update(family="conditional", env_dims=list(spec.env_dims), branch_ops=[_matrix_to_json(op) for op in spec.branch_ops])
    elif isinstance(spec, StarHamiltonianSpec):
        out.update(
            family="star",
            couplings=list(spec.couplings),
            local_ops=[[_matrix_to_json(op) for op in row] for row in spec.local_ops],
        )
    elif isinstance(spec, VonNeumannSpec):
        out.update(
            family="von-neumann",
            env_dims=list(spec.env_dims),
            pointer_values=list(spec.pointer_values),
            env_op=_matrix_to_json(spec.env_op),
        )
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")
    return out


def spec_from_dict(data: dict) -> HamiltonianSpec:
    basis = PointerBasis(_matrix_from_json(data["basis"])) if "basis" in data else None
    family = data["family"]
    if family == "conditional":
        ops = tuple(_matrix_from_json(op) for op in data["branch_ops"])
        return ConditionalHamiltonianSpec(ops, basis, data.get("env_dims"))
    if family == "star":
        grid = tuple(tuple(_matrix_from_json(op) for op in row) for row in data["local_ops"])
        return StarHamiltonianSpec(tuple(data["couplings"]), grid, basis)
    if family == "von-neumann":
        return VonNeumannSpec(tuple(data["pointer_values"]), _matrix_from_json(data["env_op"]), basis, data.get("env_dims"))
    raise ValueError(f"unknown Hamiltonian family {family!r}")
