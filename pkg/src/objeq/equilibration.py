"""Time averages of unitary dynamics, effective dimension, equilibration
bound checks and the equilibrium states of conditional Hamiltonians.

Time evolution is ``U(t) = exp(-iHt)`` with ħ = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from . import qops
from .errors import (
    DegenerateBranchStructure,
    DimensionMismatch,
    EqualGapsDetected,
    NonPositiveWindow,
    NumericalFailure,
    ResonantEigenvalues,
)
from .hamiltonians import (
    ConditionalHamiltonianSpec,
    SpectrumDiagnostics,
    StarHamiltonianSpec,
    VonNeumannSpec,
    assemble,
    cross_branch_overlaps,
    default_gap_tolerance,
    diagnose_eigenvalues,
    diagnose_spectrum,
)
from .qops import SpectralDecomposition
from .states import DensityMatrix, as_density, pointer_probabilities, product_state

BOUND_SLACK = 1e-9
ORACLE_ATOL = 1e-10
OVERLAP_ATOL = 1e-10
LARGE_WINDOW = 100.0
_CHUNK_ELEMENTS = 1 << 22


def _decompose(H, cluster_tolerance=None) -> SpectralDecomposition:
    if isinstance(H, SpectralDecomposition):
        return H
    return qops.hermitian_eig(H, cluster_tolerance)


def pinch(rho, H, cluster_tolerance: float | None = None) -> DensityMatrix:
    """Project ``rho`` onto the block diagonal of ``H``'s degenerate eigenspaces.

    ``H`` may be a Hermitian matrix or an existing :class:`SpectralDecomposition`.
    This is the infinite-time average of ``U(t) rho U(t)†``.
    """
    rho = as_density(rho)
    decomp = _decompose(H, cluster_tolerance)
    if decomp.dim != rho.dim:
        raise DimensionMismatch(f"state dim {rho.dim} != Hamiltonian dim {decomp.dim}")
    in_basis = decomp.to_eigenbasis(rho.op)
    in_basis[~decomp.same_cluster_mask()] = 0.0
    return DensityMatrix._trusted(decomp.from_eigenbasis(in_basis), rho.dims)


def time_average_kernel(decomp: SpectralDecomposition, T: float) -> np.ndarray:
    """``<exp(-i(E_m - E_n) t)>`` over ``[0, T]`` for every eigenpair ``(m, n)``.

    Equals ``i (exp(-i w T) - 1) / (w T)`` with ``w = E_m - E_n``, and exactly 1
    inside a degenerate cluster.
    """
    if not T > 0:
        raise NonPositiveWindow(f"averaging window must be positive, got {T}")
    e = decomp.eigenvalues
    x = (e[:, None] - e[None, :]) * T
    # i(e^{-ix} - 1)/x rewritten with sinc to stay accurate as x -> 0
    kernel = np.sinc(x / np.pi) - 0.5j * x * np.sinc(x / (2 * np.pi)) ** 2
    kernel[decomp.same_cluster_mask()] = 1.0
    return kernel


def finite_time_average_analytic(rho0, H, T: float, cluster_tolerance: float | None = None) -> DensityMatrix:
    rho0 = as_density(rho0)
    decomp = _decompose(H, cluster_tolerance)
    if decomp.dim != rho0.dim:
        raise DimensionMismatch(f"state dim {rho0.dim} != Hamiltonian dim {decomp.dim}")
    averaged = decomp.to_eigenbasis(rho0.op) * time_average_kernel(decomp, T)
    return DensityMatrix(decomp.from_eigenbasis(averaged), rho0.dims)


def finite_time_average_quadrature(rho0, H, T: float, n_samples: int) -> DensityMatrix:
    """Trapezoid average of ``U(t) rho0 U(t)†`` on ``n_samples`` equally spaced
    times in ``[0, T]``, with each ``U(t)`` from a matrix exponential."""
    if not T > 0:
        raise NonPositiveWindow(f"averaging window must be positive, got {T}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rho0 = as_density(rho0)
    h = qops.check_hermitian(H)
    if h.shape[0] != rho0.dim:
        raise DimensionMismatch(f"state dim {rho0.dim} != Hamiltonian dim {h.shape[0]}")
    times = np.linspace(0.0, T, n_samples)
    weights = np.full(n_samples, 1.0 / (n_samples - 1))
    weights[[0, -1]] *= 0.5
    d = rho0.dim
    chunk = max(1, _CHUNK_ELEMENTS // (d * d))
    total = np.zeros((d, d), dtype=complex)
    for start in range(0, n_samples, chunk):
        t = times[start : start + chunk]
        u = scipy.linalg.expm(-1j * t[:, None, None] * h[None, :, :])
        evolved = u @ rho0.op @ qops.dagger(u)
        total += np.tensordot(weights[start : start + chunk], evolved, axes=1)
    return DensityMatrix(total, rho0.dims)


def finite_time_average(
    rho0,
    H,
    T: float,
    n_samples: int = 2000,
    *,
    method: str = "analytic",
    cluster_tolerance: float | None = None,
) -> DensityMatrix:
    """Average of the evolved state over ``[0, T]``.

    ``method="analytic"`` applies the exact kernel in the eigenbasis and is the
    reference; ``method="quadrature"`` integrates numerically (``n_samples``
    points) and serves as an independent cross-check.
    """
    if method == "analytic":
        if not T > 0:
            raise NonPositiveWindow(f"averaging window must be positive, got {T}")
        return finite_time_average_analytic(rho0, H, T, cluster_tolerance)
    if method == "quadrature":
        if isinstance(H, SpectralDecomposition):
            H = H.from_eigenbasis(np.diag(H.eigenvalues))
        return finite_time_average_quadrature(rho0, H, T, n_samples)
    raise ValueError(f"unknown method {method!r}")


def level_populations(rho0, decomp: SpectralDecomposition) -> np.ndarray:
    diag = np.real(np.diagonal(decomp.to_eigenbasis(np.asarray(rho0))))
    return np.array([diag[list(c)].sum() for c in decomp.clusters])


def effective_dimension(rho0, H) -> float:
    """Inverse participation ratio ``1 / sum_n p_n**2`` over energy levels."""
    rho0 = as_density(rho0)
    decomp = _decompose(H)
    if decomp.dim != rho0.dim:
        raise DimensionMismatch(f"state dim {rho0.dim} != Hamiltonian dim {decomp.dim}")
    p = level_populations(rho0, decomp)
    return float(1.0 / np.sum(p**2))


@dataclass(frozen=True)
class EquilibrationReport:
    """Outcome of a bound check; the pair not being checked is left as None."""

    d_eff: float
    n_time_samples: int
    T_window: float
    min_gap: float
    observable_bound_lhs: float | None = None
    observable_bound_rhs: float | None = None
    subsystem_bound_lhs: float | None = None
    subsystem_bound_rhs: float | None = None

    @property
    def asserted(self) -> bool:
        """Whether the window is long enough (T >= 100/min_gap) for the bound to be enforced."""
        return self.min_gap > 0 and self.T_window * self.min_gap >= LARGE_WINDOW

    @property
    def holds(self) -> bool:
        pairs = [
            (self.observable_bound_lhs, self.observable_bound_rhs),
            (self.subsystem_bound_lhs, self.subsystem_bound_rhs),
        ]
        return all(lhs <= rhs + BOUND_SLACK for lhs, rhs in pairs if lhs is not None)

    def to_dict(self) -> dict:
        return {
            "d_eff": self.d_eff,
            "n_time_samples": self.n_time_samples,
            "T_window": self.T_window,
            "min_gap": self.min_gap,
            "observable_bound_lhs": self.observable_bound_lhs,
            "observable_bound_rhs": self.observable_bound_rhs,
            "subsystem_bound_lhs": self.subsystem_bound_lhs,
            "subsystem_bound_rhs": self.subsystem_bound_rhs,
            "asserted": self.asserted,
            "holds": self.holds,
        }


def _require_no_equal_gaps(H, gap_tolerance) -> SpectrumDiagnostics:
    diag = diagnose_spectrum(H, gap_tolerance)
    if diag.has_equal_gaps:
        raise EqualGapsDetected(f"Hamiltonian has equal energy gaps {diag.gap_witness}", diag.gap_witness)
    return diag


def _sample_times(T: float, n_samples: int) -> np.ndarray:
    if not T > 0:
        raise NonPositiveWindow(f"averaging window must be positive, got {T}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    return (np.arange(n_samples) + 0.5) * (T / n_samples)


def check_observable_bound(rho0, H, O, T: float, n_samples: int, *, gap_tolerance: float | None = None) -> EquilibrationReport:
    """Time-averaged squared deviation of ``<O>`` from its equilibrium value
    against ``||O||**2 / d_eff``.

    Samples are the midpoints of ``n_samples`` equal sub-intervals of ``[0, T]``.

    Raises:
        EqualGapsDetected: if two energy gaps of ``H`` coincide.
    """
    rho0 = as_density(rho0)
    times = _sample_times(T, n_samples)
    diag = _require_no_equal_gaps(H, gap_tolerance)
    o = qops.as_operator(O)
    decomp = qops.hermitian_eig(H)
    if o.shape[0] != decomp.dim or rho0.dim != decomp.dim:
        raise DimensionMismatch("state, Hamiltonian and observable dimensions differ")
    r = decomp.to_eigenbasis(rho0.op)
    o_eig = decomp.to_eigenbasis(o)
    weights = o_eig.T * r  # entry (m, n) = O_nm rho_mn
    fluct = np.where(decomp.same_cluster_mask(), 0.0, weights)
    lhs_sum = 0.0
    chunk = max(1, _CHUNK_ELEMENTS // decomp.dim)
    for start in range(0, len(times), chunk):
        phases = np.exp(-1j * np.outer(times[start : start + chunk], decomp.eigenvalues))
        values = np.einsum("tm,mn,tn->t", phases, fluct, phases.conj())
        lhs_sum += float(np.sum(np.abs(values) ** 2))
    d_eff = float(1.0 / np.sum(level_populations(rho0, decomp) ** 2))
    op_norm = float(np.linalg.norm(o, 2))
    return EquilibrationReport(
        d_eff=d_eff,
        n_time_samples=len(times),
        T_window=float(T),
        min_gap=diag.min_gap,
        observable_bound_lhs=lhs_sum / len(times),
        observable_bound_rhs=op_norm**2 / d_eff,
    )


def _batched_partial_trace(ops: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    keep = sorted(keep)
    if len(keep) == n:
        return ops
    batch = ops.shape[0]
    tensor_form = ops.reshape((batch, *dims, *dims))
    b = 2 * n
    row = list(range(n))
    col = [n + k if k in keep else k for k in range(n)]
    out = [b] + keep + [n + k for k in keep]
    reduced = np.einsum(tensor_form, [b] + row + col, out)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return reduced.reshape(batch, d_keep, d_keep)


def check_subsystem_bound(
    rho0, H, keep: Sequence[int], T: float, n_samples: int, *, gap_tolerance: float | None = None
) -> EquilibrationReport:
    """Time-averaged trace distance of the reduced state on ``keep`` from the
    reduced equilibrium state, against ``0.5 * sqrt(d**2 / d_eff)``.

    Raises:
        EqualGapsDetected: if two energy gaps of ``H`` coincide.
    """
    rho0 = as_density(rho0)
    times = _sample_times(T, n_samples)
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= len(rho0.dims):
        raise DimensionMismatch(f"keep {keep} invalid for factorization {rho0.dims}")
    diag = _require_no_equal_gaps(H, gap_tolerance)
    decomp = qops.hermitian_eig(H)
    if decomp.dim != rho0.dim:
        raise DimensionMismatch(f"state dim {rho0.dim} != Hamiltonian dim {decomp.dim}")
    target = qops.partial_trace(pinch(rho0, decomp).op, rho0.dims, keep)
    r = decomp.to_eigenbasis(rho0.op)
    v = decomp.eigenvectors
    d = decomp.dim
    chunk = max(1, _CHUNK_ELEMENTS // (d * d))
    distances = []
    for start in range(0, len(times), chunk):
        phases = np.exp(-1j * np.outer(times[start : start + chunk], decomp.eigenvalues))
        evolved = phases[:, :, None] * r[None, :, :] * phases.conj()[:, None, :]
        evolved = v @ evolved @ qops.dagger(v)
        reduced = _batched_partial_trace(evolved, rho0.dims, keep) - target
        reduced = 0.5 * (reduced + qops.dagger(reduced))
        distances.append(0.5 * np.sum(np.abs(np.linalg.eigvalsh(reduced)), axis=1))
    lhs = float(np.mean(np.concatenate(distances)))
    d_eff = float(1.0 / np.sum(level_populations(rho0, decomp) ** 2))
    d_keep = int(np.prod([rho0.dims[k] for k in keep]))
    return EquilibrationReport(
        d_eff=d_eff,
        n_time_samples=len(times),
        T_window=float(T),
        min_gap=diag.min_gap,
        subsystem_bound_lhs=lhs,
        subsystem_bound_rhs=float(0.5 * np.sqrt(d_keep**2 / d_eff)),
    )


@dataclass(frozen=True)
class BranchEquilibrium:
    """Conditional environment states of a conditional-Hamiltonian equilibrium.

    ``factor_states[i][k]`` is set only on the factor-wise path (star
    Hamiltonian, product environment, non-degenerate total Hamiltonian).
    """

    probabilities: np.ndarray
    env_states: tuple[DensityMatrix, ...]
    factor_states: tuple[tuple[DensityMatrix, ...], ...] | None
    path: str
    diagnostics: SpectrumDiagnostics
    branch_levels: tuple[int, ...]


def conditional_branch_states(
    spec: ConditionalHamiltonianSpec | StarHamiltonianSpec,
    rho_S0,
    rho_E0,
    *,
    path: str = "auto",
    gap_tolerance: float | None = None,
    cluster_tolerance: float | None = None,
) -> BranchEquilibrium:
    """Pinch the initial environment state once per pointer branch.

    ``rho_E0`` is either a state on the whole environment or a list of factor
    states (a product environment). ``path`` is ``"auto"``, ``"branchwise"``
    or ``"factorwise"``; the factor-wise path needs a star Hamiltonian, a
    product environment and a non-degenerate total Hamiltonian.

    Raises:
        DegenerateBranchStructure: if two branches share an energy level and the
            initial environment state couples the two eigenspaces.
    """
    if path not in ("auto", "branchwise", "factorwise"):
        raise ValueError(f"unknown path {path!r}")
    p = pointer_probabilities(rho_S0, spec.basis)
    factors = None
    if isinstance(rho_E0, (list, tuple)):
        factors = [as_density(r) for r in rho_E0]
        if tuple(f.dim for f in factors) != tuple(spec.env_dims):
            raise DimensionMismatch(f"factor dims {[f.dim for f in factors]} != {list(spec.env_dims)}")

    if isinstance(spec, StarHamiltonianSpec):
        evals = spec.spectrum()
    else:
        evals = np.sort(np.concatenate([np.linalg.eigvalsh(op) for op in spec.branch_ops]))
    diag = diagnose_eigenvalues(evals, gap_tolerance, check_gaps=False)
    # one absolute clustering scale for every branch, matching a dense eigensolve of H
    tol = cluster_tolerance if cluster_tolerance is not None else qops.default_cluster_tolerance(evals)

    factorwise_ok = isinstance(spec, StarHamiltonianSpec) and factors is not None and diag.is_nondegenerate
    if path == "factorwise" and not factorwise_ok:
        raise ValueError("factor-wise path needs a star spec, factor states and a non-degenerate Hamiltonian")
    if factorwise_ok and path != "branchwise":
        grid = tuple(
            tuple(pinch(factors[k], spec.local_ops[i][k]) for k in range(spec.n_env)) for i in range(spec.d_S)
        )
        env_states = tuple(product_state(row).with_dims(spec.env_dims) if len(row) > 1 else row[0] for row in grid)
        return BranchEquilibrium(p, env_states, grid, "factorwise", diag, (spec.d_E,) * spec.d_S)

    rho_E = product_state(factors) if factors is not None else as_density(rho_E0, spec.env_dims)
    if rho_E.dim != spec.d_E:
        raise DimensionMismatch(f"environment state dim {rho_E.dim} != {spec.d_E}")
    cond = spec.to_conditional() if isinstance(spec, StarHamiltonianSpec) else spec
    if not diag.is_nondegenerate:
        overlaps = cross_branch_overlaps(cond, rho_E.op, diag.tolerance)
        bad = [w for w in overlaps if w[4] > OVERLAP_ATOL]
        if bad:
            worst = max(bad, key=lambda w: w[4])
            raise DegenerateBranchStructure(
                f"branches {worst[0]} and {worst[2]} share a level with initial-state overlap {worst[4]:.3e}", worst
            )
    decomps = [qops.hermitian_eig(op, tol) for op in cond.branch_ops]
    env_states = tuple(pinch(rho_E, dec).with_dims(spec.env_dims) for dec in decomps)
    return BranchEquilibrium(p, env_states, None, "branchwise", diag, tuple(dec.n_clusters for dec in decomps))


def _cq_state(basis, p, env_states, dims) -> DensityMatrix:
    d_S = len(p)
    d_E = env_states[0].dim
    out = np.zeros((d_S * d_E, d_S * d_E), dtype=complex)
    for i, (p_i, state) in enumerate(zip(p, env_states)):
        out[i * d_E : (i + 1) * d_E, i * d_E : (i + 1) * d_E] = p_i * state.op
    return DensityMatrix._trusted(basis.from_pointer_frame(out, d_E), dims)


def conditional_equilibrium(
    spec: ConditionalHamiltonianSpec | StarHamiltonianSpec,
    rho_S0,
    rho_E0,
    **kwargs,
) -> DensityMatrix:
    """Equilibrium ``sum_i p_i |i><i| ⊗ pinch(rho_E0, H_E^(i))`` without a
    full-space eigensolve. Keyword arguments go to :func:`conditional_branch_states`."""
    branches = conditional_branch_states(spec, rho_S0, rho_E0, **kwargs)
    return _cq_state(spec.basis, branches.probabilities, branches.env_states, spec.dims)


def dense_equilibrium(spec, rho_S0, rho_E0) -> DensityMatrix:
    """Pinch the full initial state with the assembled Hamiltonian (reference path)."""
    if isinstance(rho_E0, (list, tuple)):
        rho_E0 = product_state(rho_E0)
    rho0 = product_state([as_density(rho_S0), as_density(rho_E0)]).with_dims(spec.dims)
    return pinch(rho0, assemble(spec))


def von_neumann_equilibrium(
    spec: VonNeumannSpec,
    rho_S0,
    rho_E0,
    *,
    gap_tolerance: float | None = None,
    cross_check: bool = True,
) -> DensityMatrix:
    """Equilibrium of ``X_S ⊗ Y``: dephased system times the environment
    pinched by ``Y``.

    Raises:
        ResonantEigenvalues: if ``x_i eps_m`` coincides for two distinct index
            pairs (the total Hamiltonian is degenerate).
        NumericalFailure: if ``cross_check`` is on and the product formula
            disagrees with a dense pinch of the assembled Hamiltonian.
    """
    rho_E0 = as_density(rho_E0)
    if rho_E0.dim != spec.d_E:
        raise DimensionMismatch(f"environment state dim {rho_E0.dim} != {spec.d_E}")
    y = qops.hermitian_eig(spec.env_op)
    levels = np.outer(spec.pointer_values, y.eigenvalues).ravel()
    tol = default_gap_tolerance(levels) if gap_tolerance is None else gap_tolerance
    order = np.argsort(levels, kind="stable")
    hits = np.nonzero(np.diff(levels[order]) <= tol)[0]
    if len(hits):
        (i, m), (j, n) = (divmod(int(order[hits[0]]), spec.d_E), divmod(int(order[hits[0] + 1]), spec.d_E))
        raise ResonantEigenvalues(f"x_{i} eps_{m} coincides with x_{j} eps_{n}", (i, j, m, n))
    p = pointer_probabilities(rho_S0, spec.basis)
    env = pinch(rho_E0, y).with_dims(spec.env_dims)
    result = _cq_state(spec.basis, p, (env,) * spec.d_S, spec.dims)
    if cross_check:
        dense = dense_equilibrium(spec, rho_S0, rho_E0)
        gap = qops.trace_distance(result.op, dense.op)
        if gap > ORACLE_ATOL:
            raise NumericalFailure(f"product-form equilibrium differs from dense pinch by {gap:.3e}")
    return result


infinite_time_average = pinch
