"""Objectivity diagnostics of system-environment states: conditional
environment states, fidelity matrices and their bounds, macro-observer decay
constants, distance from classical-quantum and broadcast structure,
faithfulness and structural certification of conditional Hamiltonians.

Environment factors and macro-observer groups are indexed from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qops
from .equilibration import conditional_branch_states, conditional_equilibrium, pinch
from .errors import (
    DimensionMismatch,
    IncompleteGrid,
    InvalidDims,
    NotBlockDiagonal,
    NotDiagonal,
)
from .hamiltonians import StarHamiltonianSpec
from .qops import SpectralDecomposition
from .states import DensityMatrix, PointerBasis, as_density, product_state, random_density

P_FLOOR = 1e-12
OFF_BLOCK_ATOL = 1e-8
DIAGONAL_ATOL = 1e-9
ETA_ONE_ATOL = 1e-12
FAITHFUL_ATOL = 1e-9
COMMUTATOR_ATOL = 1e-9
STRUCTURE_ATOL = 1e-10
INDEPENDENCE_METRIC = "trace distance to product of group marginals"


@dataclass(frozen=True)
class MacroPartition:
    """Disjoint groups of environment factors, each treated as one observer."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(k) for k in g)) for g in self.groups)
        if not groups or any(not g for g in groups):
            raise InvalidDims("a partition needs at least one non-empty group")
        flat = [k for g in groups for k in g]
        if len(flat) != len(set(flat)):
            raise InvalidDims("macro-observer groups must be disjoint")
        if min(flat) < 0:
            raise InvalidDims("factor indices must be non-negative")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def single(cls, indices: Sequence[int]) -> "MacroPartition":
        return cls((tuple(indices),))

    @classmethod
    def blocks(cls, n_env: int, size: int) -> "MacroPartition":
        """Consecutive groups of ``size`` factors; a shorter remainder is dropped."""
        return cls(tuple(tuple(range(s, s + size)) for s in range(0, n_env - size + 1, size)))

    @property
    def covered(self) -> tuple[int, ...]:
        return tuple(sorted(k for g in self.groups for k in g))

    def check(self, n_env: int) -> None:
        if max(self.covered) >= n_env:
            raise InvalidDims(f"partition references factor {max(self.covered)} but only {n_env} exist")


def _pointer_blocks(rho: DensityMatrix, basis: PointerBasis | None):
    if len(rho.dims) < 2:
        raise DimensionMismatch("state needs a system factor and at least one environment factor")
    d_S = rho.dims[0]
    basis = PointerBasis.computational(d_S) if basis is None else basis
    if basis.dim != d_S:
        raise DimensionMismatch(f"pointer basis dim {basis.dim} != system dim {d_S}")
    d_E = rho.dim // d_S
    framed = basis.to_pointer_frame(rho.op, d_E)
    return framed.reshape(d_S, d_E, d_S, d_E), basis


def conditional_env_states(
    rho,
    basis: PointerBasis | None = None,
    *,
    p_floor: float = P_FLOOR,
    off_block_tolerance: float = OFF_BLOCK_ATOL,
) -> tuple[np.ndarray, list[DensityMatrix | None]]:
    """Split a classical-quantum state into ``p_i`` and ``<i|rho|i> / p_i``.

    Branches with ``p_i <= p_floor`` are returned as None.

    Raises:
        NotBlockDiagonal: if any coherence between pointer states exceeds
            ``off_block_tolerance``.
    """
    rho = as_density(rho)
    blocks, _ = _pointer_blocks(rho, None if basis is None else basis)
    d_S = blocks.shape[0]
    off = 0.0
    for i in range(d_S):
        for j in range(d_S):
            if i != j:
                off = max(off, float(np.max(np.abs(blocks[i, :, j, :]))))
    if off > off_block_tolerance:
        raise NotBlockDiagonal(f"pointer coherence {off:.3e} exceeds {off_block_tolerance:.1e}")
    env_dims = rho.dims[1:]
    p = np.array([float(np.trace(blocks[i, :, i, :]).real) for i in range(d_S)])
    states = [
        DensityMatrix(blocks[i, :, i, :] / p[i], env_dims) if p[i] > p_floor else None for i in range(d_S)
    ]
    return p, states


def _basis_matrix(decomp) -> np.ndarray:
    if isinstance(decomp, SpectralDecomposition):
        return decomp.eigenvectors
    return np.asarray(decomp, dtype=complex)


def eta(rho_i, rho_j, decomp_i) -> float:
    """Overlap sum ``sum_m sqrt(<m|rho_i rho_j|m>)`` in the eigenbasis ``{|m>}``
    of branch ``i``; an upper bound on ``sqrt(F(rho_i, rho_j))``.

    ``decomp_i`` is a :class:`SpectralDecomposition` or a unitary whose columns
    are the basis vectors.

    Raises:
        NotDiagonal: if ``rho_i`` is not diagonal in that basis (within 1e-9).
    """
    a = np.asarray(rho_i, dtype=complex)
    b = np.asarray(rho_j, dtype=complex)
    v = _basis_matrix(decomp_i)
    if a.shape != b.shape or v.shape != a.shape:
        raise DimensionMismatch(f"shapes {a.shape}, {b.shape} and basis {v.shape} differ")
    in_basis = qops.dagger(v) @ a @ v
    off = in_basis - np.diag(np.diagonal(in_basis))
    if off.size and float(np.max(np.abs(off))) > DIAGONAL_ATOL:
        raise NotDiagonal(f"rho_i is not diagonal in the given basis (off-diagonal {np.max(np.abs(off)):.3e})")
    overlaps = np.real(np.diagonal(qops.dagger(v) @ a @ b @ v))
    return float(np.sum(np.sqrt(np.clip(overlaps, 0.0, None))))


def gamma(etas: Sequence[float]) -> tuple[float, int]:
    """Decay rate ``-2 ln(max eta)`` over the observers with ``eta < 1``.

    Returns ``(gamma, support)`` where ``support`` counts those observers. An
    empty support gives ``(0.0, 0)``; an exact zero ``eta`` in the support gives
    ``gamma = inf``.
    """
    support = [float(e) for e in etas if e < 1.0 - ETA_ONE_ATOL]
    if not support:
        return 0.0, 0
    if min(support) <= 0.0:
        return math.inf, len(support)
    return -2.0 * math.log(max(support)), len(support)


def decay_bound(gamma_value: float, support: int) -> float:
    """``exp(-gamma * support)``, exactly 0 for infinite ``gamma``."""
    if math.isinf(gamma_value):
        return 0.0
    return math.exp(-gamma_value * support)


@dataclass(frozen=True)
class MacroFidelities:
    """Fidelity and decay-rate tables, indexed ``[observer or group, i, j]``.

    Absent branches give NaN rows and columns.
    """

    micro: np.ndarray
    eta: np.ndarray
    macro: np.ndarray
    gamma: np.ndarray
    support: np.ndarray
    bound: np.ndarray
    present: tuple[bool, ...]
    partition: MacroPartition


def _grid_shape(states) -> tuple[int, int, list[bool]]:
    rows = list(states)
    present = [row is not None and any(s is not None for s in row) for row in rows]
    if not any(present):
        raise IncompleteGrid("no branch has conditional states")
    n_env = {len(row) for row, ok in zip(rows, present) if ok}
    if len(n_env) != 1:
        raise IncompleteGrid("branches have different numbers of observers")
    for row, ok in zip(rows, present):
        if ok and any(s is None for s in row):
            raise IncompleteGrid("a present branch is missing observer states")
    return len(rows), n_env.pop(), present


def macro_fidelity_matrix(states, partition: MacroPartition, bases=None) -> MacroFidelities:
    """Per-observer and per-group fidelities of conditional states.

    ``states[i][k]`` is the state of observer ``k`` given pointer outcome ``i``
    (a whole row may be None for an absent branch). Group fidelities use the
    product law ``F(⊗σ_k, ⊗ρ_k) = ∏ F(σ_k, ρ_k)``. ``bases[i][k]`` is the
    eigenbasis defining ``eta``; by default each state's own eigenbasis is used.

    Raises:
        IncompleteGrid: if a present branch lacks an observer state.
    """
    d_S, n_env, present = _grid_shape(states)
    partition.check(n_env)
    rho = [[None if not present[i] else np.asarray(states[i][k]) for k in range(n_env)] for i in range(d_S)]
    vecs = [[None] * n_env for _ in range(d_S)]
    for i in range(d_S):
        if not present[i]:
            continue
        for k in range(n_env):
            if bases is not None and bases[i][k] is not None:
                vecs[i][k] = _basis_matrix(bases[i][k])
            else:
                vecs[i][k] = np.linalg.eigh(rho[i][k])[1]
    micro = np.full((n_env, d_S, d_S), np.nan)
    etas = np.full((n_env, d_S, d_S), np.nan)
    for k in range(n_env):
        for i in range(d_S):
            if not present[i]:
                continue
            for j in range(d_S):
                if not present[j]:
                    continue
                if j >= i:
                    f = 1.0 if i == j else qops.fidelity(rho[i][k], rho[j][k])
                    micro[k, i, j] = micro[k, j, i] = f
                etas[k, i, j] = eta(rho[i][k], rho[j][k], vecs[i][k])
    n_groups = len(partition.groups)
    macro = np.full((n_groups, d_S, d_S), np.nan)
    gam = np.full((n_groups, d_S, d_S), np.nan)
    support = np.zeros((n_groups, d_S, d_S), dtype=int)
    bound = np.full((n_groups, d_S, d_S), np.nan)
    for q, group in enumerate(partition.groups):
        for i in range(d_S):
            for j in range(d_S):
                if not (present[i] and present[j]):
                    continue
                macro[q, i, j] = float(np.prod(micro[list(group), i, j]))
                g, s = gamma(etas[list(group), i, j])
                gam[q, i, j], support[q, i, j] = g, s
                bound[q, i, j] = decay_bound(g, s)
    return MacroFidelities(micro, etas, macro, gam, support, bound, tuple(present), partition)


def fidelity_lower_bound(rho_E0, d_i: int, d_j: int, d_E: int | None = None) -> tuple[float, float]:
    """Lower bounds on the fidelity of two conditional equilibrium states
    pinched from the same ``rho_E0``.

    Returns ``(Tr(rho_E0**2) / (d_i d_j), 1 / d_E**2)`` where ``d_i``, ``d_j``
    count distinct branch energies.

    Raises:
        InvalidDims: unless ``1 <= d_i, d_j <= d_E``.
    """
    rho = as_density(rho_E0)
    d_E = rho.dim if d_E is None else int(d_E)
    if d_E != rho.dim:
        raise InvalidDims(f"d_E={d_E} but the state has dimension {rho.dim}")
    if not (1 <= d_i <= d_E and 1 <= d_j <= d_E):
        raise InvalidDims(f"need 1 <= d_i, d_j <= {d_E}, got {d_i}, {d_j}")
    return rho.purity() / (d_i * d_j), 1.0 / d_E**2


def _block_diagonal_part(blocks: np.ndarray) -> np.ndarray:
    d_S, d_E = blocks.shape[:2]
    out = np.zeros_like(blocks)
    for i in range(d_S):
        out[i, :, i, :] = blocks[i, :, i, :]
    return out.reshape(d_S * d_E, d_S * d_E)


def cq_distance(rho, basis: PointerBasis | None = None) -> float:
    """Trace distance from ``rho`` to its pointer-block-diagonal part."""
    rho = as_density(rho)
    blocks, _ = _pointer_blocks(rho, basis)
    framed = blocks.reshape(rho.dim, rho.dim)
    return qops.trace_distance(framed, _block_diagonal_part(blocks))


def _permute_factors(op: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = op.reshape(tuple(dims) * 2)
    t = np.transpose(t, list(order) + [n + k for k in order])
    d = op.shape[0]
    return t.reshape(d, d)


@dataclass(frozen=True)
class SBSComponents:
    cq_distance: float
    max_macro_fidelity: float
    independence_deviation: float
    independence_metric: str = INDEPENDENCE_METRIC

    @property
    def deviation(self) -> float:
        return max(self.cq_distance, self.max_macro_fidelity, self.independence_deviation)


def sbs_components(
    rho, basis: PointerBasis | None, partition: MacroPartition, *, p_floor: float = P_FLOOR
) -> SBSComponents:
    """The three ingredients of :func:`sbs_deviation`, reported separately."""
    rho = as_density(rho)
    blocks, _ = _pointer_blocks(rho, basis)
    env_dims = rho.dims[1:]
    partition.check(len(env_dims))
    cq = qops.trace_distance(blocks.reshape(rho.dim, rho.dim), _block_diagonal_part(blocks))
    covered = list(partition.covered)
    # covered factors relabelled 0..len-1, then reordered group by group
    local = {k: n for n, k in enumerate(covered)}
    group_order = [local[k] for g in partition.groups for k in g]
    covered_dims = [env_dims[k] for k in covered]
    marginals = []
    independence = 0.0
    for i in range(blocks.shape[0]):
        block = blocks[i, :, i, :]
        p_i = float(np.trace(block).real)
        if p_i <= p_floor:
            marginals.append(None)
            continue
        cond = block / p_i
        groups = [qops.partial_trace(cond, env_dims, g) for g in partition.groups]
        marginals.append(groups)
        joint = _permute_factors(qops.partial_trace(cond, env_dims, covered), covered_dims, group_order)
        independence = max(independence, qops.trace_distance(joint, qops.tensor_all(groups)))
    fid = 0.0
    for i, mi in enumerate(marginals):
        for j, mj in enumerate(marginals):
            if i < j and mi is not None and mj is not None:
                fid = max(fid, max(qops.fidelity(a, b) for a, b in zip(mi, mj)))
    return SBSComponents(cq, fid, independence)


def sbs_deviation(rho, basis: PointerBasis | None, partition: MacroPartition, *, p_floor: float = P_FLOOR) -> float:
    """Distance from broadcast structure for the macro-observers in ``partition``.

    The maximum of: the pointer coherence (:func:`cq_distance`), the largest
    fidelity between conditional group states of distinct outcomes, and the
    largest trace distance between a conditional state of the covered factors
    and the product of its group marginals. Zero exactly for broadcast states.
    """
    return sbs_components(rho, basis, partition, p_floor=p_floor).deviation


@dataclass(frozen=True)
class Faithfulness:
    faithful: bool
    overlap: float
    captured: float

    def __bool__(self) -> bool:
        return self.faithful


def _support_projector(state: np.ndarray, leak: float) -> np.ndarray:
    """Smallest spectral projector holding all but ``leak`` of the weight."""
    evals, evecs = np.linalg.eigh(state)
    dropped = np.cumsum(np.clip(evals, 0.0, None))
    keep = dropped > leak
    v = evecs[:, keep]
    return v @ qops.dagger(v)


def check_faithfulness(
    rho, basis: PointerBasis | None = None, *, off_block_tolerance: float = OFF_BLOCK_ATOL
) -> Faithfulness:
    """Whether conditional environment states can be told apart perfectly.

    Builds the support projector of each conditional state (dropping at most
    1e-9 of weight); these are the smallest projectors commuting with the
    state that capture it. The state is faithful iff they are mutually
    orthogonal, i.e. ``sum_i Tr[(|i><i| ⊗ Π_i) rho] = 1`` for orthogonal
    ``Π_i``. ``overlap`` is the largest ``||Π_i Π_j||``.

    Raises:
        NotBlockDiagonal: if ``rho`` is not classical-quantum.
    """
    p, states = conditional_env_states(rho, basis, off_block_tolerance=off_block_tolerance)
    projectors = [None if s is None else _support_projector(s.op, FAITHFUL_ATOL) for s in states]
    overlap = 0.0
    for i, a in enumerate(projectors):
        for j, b in enumerate(projectors):
            if i < j and a is not None and b is not None:
                overlap = max(overlap, float(np.linalg.norm(a @ b, 2)))
    captured = sum(
        p_i * float(np.trace(proj @ s.op).real) for p_i, proj, s in zip(p, projectors, states) if s is not None
    )
    faithful = overlap <= FAITHFUL_ATOL and abs(captured - 1.0) <= FAITHFUL_ATOL
    return Faithfulness(bool(faithful), overlap, captured)


@dataclass(frozen=True)
class CQCertificate:
    certified: bool
    max_commutator: float
    off_block_max: float
    witness: DensityMatrix | None = field(default=None, repr=False)

    def __bool__(self) -> bool:
        return self.certified


def verify_cq_commutation(H, basis: PointerBasis, trials: int = 16, seed: int = 0) -> CQCertificate:
    """Check numerically that ``H`` commutes with classical-quantum states of
    arbitrary pointer statistics, which singles out the form
    ``sum_i |i><i| ⊗ H_E^(i)``.

    Each trial draws random probabilities and conditional states pinched by the
    diagonal blocks ``<i|H|i>``; any commutator above 1e-9 fails and returns
    that state as the witness. Certification additionally requires every
    off-diagonal pointer block of ``H`` to vanish (below 1e-10).
    """
    h = qops.check_hermitian(H)
    d_S = basis.dim
    if h.shape[0] % d_S:
        raise DimensionMismatch(f"dimension {h.shape[0]} is not a multiple of d_S={d_S}")
    d_E = h.shape[0] // d_S
    blocks = basis.to_pointer_frame(h, d_E).reshape(d_S, d_E, d_S, d_E)
    off_block = max(
        (float(np.max(np.abs(blocks[i, :, j, :]))) for i in range(d_S) for j in range(d_S) if i != j),
        default=0.0,
    )
    diag_decomps = [qops.hermitian_eig(blocks[i, :, i, :]) for i in range(d_S)]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = rng.dirichlet(np.ones(d_S))
        conditionals = [
            pinch(random_density(d_E, seed=int(rng.integers(2**63))), diag_decomps[i]).op for i in range(d_S)
        ]
        framed = np.zeros((d_S * d_E, d_S * d_E), dtype=complex)
        for i in range(d_S):
            framed[i * d_E : (i + 1) * d_E, i * d_E : (i + 1) * d_E] = p[i] * conditionals[i]
        state = basis.from_pointer_frame(framed, d_E)
        norm = float(np.linalg.norm(qops.commutator(h, state)))
        worst = max(worst, norm)
        if norm > COMMUTATOR_ATOL:
            return CQCertificate(False, worst, off_block, DensityMatrix(state, (d_S, d_E)))
    return CQCertificate(bool(off_block <= STRUCTURE_ATOL), worst, off_block)


@dataclass(frozen=True)
class ObjectivityReport:
    """Everything measured about one star-Hamiltonian equilibrium.

    ``lower_bound_tight[i, j]`` is ``Tr(rho_E0**2) / (d^(i) d^(j))`` and
    ``lower_bound_loose`` is ``1 / d_E**2``; both bound
    ``fidelity_env[i, j]``, the fidelity of whole-environment conditionals.
    """

    probabilities: np.ndarray
    fidelities: MacroFidelities
    fidelity_env: np.ndarray
    lower_bound_tight: np.ndarray
    lower_bound_loose: float
    cq_distance: float
    sbs: SBSComponents
    faithful: Faithfulness
    path: str

    @property
    def sbs_deviation(self) -> float:
        return self.sbs.deviation

    def to_dict(self) -> dict:
        f = self.fidelities
        return {
            "probabilities": self.probabilities,
            "fidelity_micro": f.micro,
            "eta": f.eta,
            "groups": [list(g) for g in f.partition.groups],
            "fidelity_macro": f.macro,
            "gamma": f.gamma,
            "gamma_support": f.support,
            "macro_bound": f.bound,
            "fidelity_env": self.fidelity_env,
            "lower_bound_tight": self.lower_bound_tight,
            "lower_bound_loose": self.lower_bound_loose,
            "cq_distance": self.cq_distance,
            "sbs_deviation": self.sbs_deviation,
            "sbs_macro_fidelity": self.sbs.max_macro_fidelity,
            "sbs_independence_deviation": self.sbs.independence_deviation,
            "independence_metric": self.sbs.independence_metric,
            "faithful": self.faithful.faithful,
            "faithful_overlap": self.faithful.overlap,
            "equilibrium_path": self.path,
        }


def objectivity_report(
    spec: StarHamiltonianSpec,
    rho_S0,
    env_states: Sequence,
    partition: MacroPartition,
    *,
    p_floor: float = P_FLOOR,
) -> ObjectivityReport:
    """Equilibrate a star Hamiltonian from a product initial state and measure
    how close the result is to broadcast structure."""
    env_states = [as_density(s) for s in env_states]
    branches = conditional_branch_states(spec, rho_S0, env_states)
    p = branches.probabilities
    present = p > p_floor
    grid = []
    bases = []
    for i in range(spec.d_S):
        if not present[i]:
            grid.append(None)
            bases.append(None)
            continue
        if branches.factor_states is not None:
            row = list(branches.factor_states[i])
        else:
            row = [pinch(env_states[k], spec.local_ops[i][k]) for k in range(spec.n_env)]
        grid.append(row)
        bases.append([qops.hermitian_eig(spec.local_ops[i][k]) for k in range(spec.n_env)])
    fids = macro_fidelity_matrix(grid, partition, bases)
    rho_E0 = product_state(env_states)
    levels = branches.branch_levels
    fid_env = np.full((spec.d_S, spec.d_S), np.nan)
    tight = np.full((spec.d_S, spec.d_S), np.nan)
    loose = 1.0 / spec.d_E**2
    for i in range(spec.d_S):
        for j in range(spec.d_S):
            if present[i] and present[j]:
                fid_env[i, j] = float(np.prod(fids.micro[:, i, j]))
                tight[i, j] = fidelity_lower_bound(rho_E0, levels[i], levels[j])[0]
    rho_inf = conditional_equilibrium(spec, rho_S0, env_states)
    return ObjectivityReport(
        probabilities=p,
        fidelities=fids,
        fidelity_env=fid_env,
        lower_bound_tight=tight,
        lower_bound_loose=loose,
        cq_distance=cq_distance(rho_inf, spec.basis),
        sbs=sbs_components(rho_inf, spec.basis, partition, p_floor=p_floor),
        faithful=check_faithfulness(rho_inf, spec.basis),
        path=branches.path,
    )
