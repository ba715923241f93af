"""Scenario execution and result persistence."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import equilibration as eq
from .. import hamiltonians as hm
from .. import objectivity as ob
from .. import qops
from ..errors import ConfigParseError, DimensionOverflow, ObjeqError
from ..states import HilbertFactorization, product_state, random_density
from .config import ScenarioConfig

RESULT_FILE = "result.json"
RUN_INFO_FILE = "run_info.json"
DECAY_FILE = "decay.csv"
FIDELITY_FILE = "fidelity.csv"
DECAY_COLUMNS = ("group_size", "pair_i", "pair_j", "fidelity", "gamma", "bound")
FIDELITY_COLUMNS = ("observer", "i", "j", "value")


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class ResultRecord:
    config: ScenarioConfig
    payload: dict = field(default_factory=dict)
    decay_table: list[tuple] = field(default_factory=list)
    fidelity_table: list[tuple] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    wall_time: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def deterministic_dict(self) -> dict:
        return {
            "config": self.config.echo(),
            "payload": self.payload,
            "decay_table": [dict(zip(DECAY_COLUMNS, row)) for row in self.decay_table],
            "verdicts": [v.to_dict() for v in self.verdicts],
            "passed": self.passed,
        }


class ScenarioError(ObjeqError):
    """A module error raised while running a scenario, with the scenario named."""

    def __init__(self, message: str, cause: Exception):
        super().__init__(message)
        self.cause = cause


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, shortest round-trip floats, ``"inf"`` for infinities."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _seeds(seed: int, n: int) -> list[int]:
    """Independent per-instance seeds derived from the scenario seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _check(name: str, value: float, tolerance: float, *, upper: bool = True, detail: str = "") -> Verdict:
    passed = value <= tolerance if upper else value >= -tolerance
    return Verdict(name, bool(passed), float(value), float(tolerance), detail)


def _run_impossibility(cfg: ScenarioConfig, rec: ResultRecord) -> None:
    slack = cfg.tolerances["bound_slack"]
    instances = []
    worst_tight = math.inf
    worst_loose = math.inf
    for n, s in enumerate(_seeds(cfg.seed, cfg.instances)):
        rng = np.random.default_rng(s)
        sub = lambda: int(rng.integers(2**63))  # noqa: E731
        fact = HilbertFactorization(cfg.system_dim, cfg.env_dims)
        if cfg.family == "star":
            spec = hm.random_branch_ensemble(fact, seed=sub(), coupling_range=cfg.coupling_range)
        else:
            spec = hm.random_conditional(cfg.system_dim, cfg.env_dims, sub())
        rho_S0 = random_density(cfg.system_dim, seed=sub())
        rho_E0 = random_density(fact.d_E, seed=sub()).with_dims(cfg.env_dims)
        branches = eq.conditional_branch_states(spec, rho_S0, rho_E0)
        rho_inf = eq.conditional_equilibrium(spec, rho_S0, rho_E0)
        p, states = ob.conditional_env_states(rho_inf, spec.basis)
        fid = np.full((cfg.system_dim, cfg.system_dim), np.nan)
        tight = np.full_like(fid, np.nan)
        loose = 1.0 / fact.d_E**2
        for i in range(cfg.system_dim):
            for j in range(cfg.system_dim):
                if states[i] is None or states[j] is None:
                    continue
                fid[i, j] = qops.fidelity(states[i], states[j])
                tight[i, j] = ob.fidelity_lower_bound(rho_E0, branches.branch_levels[i], branches.branch_levels[j])[0]
                rec.fidelity_table.append((n, i, j, fid[i, j]))
        worst_tight = min(worst_tight, float(np.nanmin(fid - tight)))
        worst_loose = min(worst_loose, float(np.nanmin(fid)) - loose)
        instances.append(
            {
                "instance": n,
                "probabilities": p,
                "branch_levels": list(branches.branch_levels),
                "purity": rho_E0.purity(),
                "fidelity": fid,
                "lower_bound_tight": tight,
                "lower_bound_loose": loose,
                "cq_distance": ob.cq_distance(rho_inf, spec.basis),
                "faithful": bool(ob.check_faithfulness(rho_inf, spec.basis)),
            }
        )
    rec.payload["instances"] = instances
    rec.verdicts.append(_check("fidelity-above-tight-bound", worst_tight, slack, upper=False, detail="min F - Tr(rho_E0^2)/(d_i d_j)"))
    rec.verdicts.append(_check("fidelity-above-loose-bound", worst_loose, slack, upper=False, detail="min F - 1/d_E^2"))


def _run_standard_model(cfg: ScenarioConfig, rec: ResultRecord) -> None:
    mi_tol = cfg.tolerances["mutual_information"]
    dist_tol = cfg.tolerances["product_distance"]
    worst_mi = 0.0
    worst_dist = 0.0
    instances = []
    d_E = int(np.prod(cfg.env_dims))
    for n, s in enumerate(_seeds(cfg.seed, cfg.instances)):
        rng = np.random.default_rng(s)
        sub = lambda: int(rng.integers(2**63))  # noqa: E731
        spec = hm.random_von_neumann(cfg.system_dim, cfg.env_dims, sub())
        rho_S0 = random_density(cfg.system_dim, seed=sub())
        rho_E0 = random_density(d_E, seed=sub())
        # raises on resonant draws; the dense pinch below is the independent reference
        eq.von_neumann_equilibrium(spec, rho_S0, rho_E0, cross_check=False)
        dense = eq.dense_equilibrium(spec, rho_S0, rho_E0)
        mi = qops.mutual_information(dense, (cfg.system_dim, d_E))
        dephased = np.diag(np.diag(spec.basis.basis.conj().T @ rho_S0.op @ spec.basis.basis))
        dephased = spec.basis.basis @ dephased @ spec.basis.basis.conj().T
        product = qops.tensor(dephased, eq.pinch(rho_E0, spec.env_op).op)
        dist = qops.trace_distance(dense, product)
        worst_mi = max(worst_mi, mi)
        worst_dist = max(worst_dist, dist)
        instances.append({"instance": n, "mutual_information": mi, "product_distance": dist})
    rec.payload["instances"] = instances
    rec.verdicts.append(_check("no-correlation", worst_mi, mi_tol, detail="max equilibrium mutual information"))
    rec.verdicts.append(_check("product-form", worst_dist, dist_tol, detail="max trace distance to dephased x pinched"))


def _run_sbs_scaling(cfg: ScenarioConfig, rec: ResultRecord) -> None:
    slack = cfg.tolerances["bound_slack"]
    law_tol = cfg.tolerances["product_law"]
    fact = HilbertFactorization(cfg.system_dim, cfg.env_dims)
    rng = np.random.default_rng(_seeds(cfg.seed, 1)[0])
    sub = lambda: int(rng.integers(2**63))  # noqa: E731
    if cfg.family == "iid-star":
        spec = hm.iid_star(fact, sub(), coupling_range=cfg.coupling_range)
    else:
        spec = hm.random_branch_ensemble(fact, seed=sub(), coupling_range=cfg.coupling_range)
    rho_S0 = random_density(cfg.system_dim, seed=sub())
    env_states = [random_density(d, seed=sub()) for d in cfg.env_dims]
    if cfg.family == "iid-star":
        env_states = [env_states[0]] * fact.n_env
    branches = eq.conditional_branch_states(spec, rho_S0, env_states)
    rho_inf = eq.conditional_equilibrium(spec, rho_S0, env_states)
    p, conditionals = ob.conditional_env_states(rho_inf, spec.basis)
    grid = [None if c is None else [c.reduced([k]) for k in range(fact.n_env)] for c in conditionals]
    bases = [[qops.hermitian_eig(spec.local_ops[i][k]) for k in range(fact.n_env)] for i in range(fact.system_dim)]
    worst_bound = -math.inf
    worst_law = 0.0
    monotone_violation = 0.0
    sizes = list(cfg.partition_sizes)
    per_size = []
    previous = {}
    for size in sizes:
        part = ob.MacroPartition.single(range(size))
        fids = ob.macro_fidelity_matrix(grid, part, bases)
        for i in range(fact.system_dim):
            for j in range(fact.system_dim):
                if i == j or not (fids.present[i] and fids.present[j]):
                    continue
                f, g, b = float(fids.macro[0, i, j]), float(fids.gamma[0, i, j]), float(fids.bound[0, i, j])
                rec.decay_table.append((size, i, j, f, g, b))
                worst_bound = max(worst_bound, f - b)
                direct = qops.fidelity(conditionals[i].reduced(part.groups[0]), conditionals[j].reduced(part.groups[0]))
                worst_law = max(worst_law, abs(direct - f))
                if (i, j) in previous:
                    monotone_violation = max(monotone_violation, f - previous[(i, j)])
                previous[(i, j)] = f
        per_size.append({"group_size": size, "max_fidelity": float(np.nanmax(np.where(np.eye(fact.system_dim, dtype=bool), np.nan, fids.macro[0])))})
    last = ob.macro_fidelity_matrix(grid, ob.MacroPartition.blocks(fact.n_env, 1), bases)
    for k in range(fact.n_env):
        for i in range(fact.system_dim):
            for j in range(fact.system_dim):
                if last.present[i] and last.present[j]:
                    rec.fidelity_table.append((k, i, j, float(last.micro[k, i, j])))
    rec.payload.update(
        {
            "probabilities": p,
            "equilibrium_path": branches.path,
            "per_size": per_size,
            "eta": last.eta,
            "fidelity_micro": last.micro,
            "cq_distance": ob.cq_distance(rho_inf, spec.basis),
            "sbs_deviation": ob.sbs_deviation(rho_inf, spec.basis, ob.MacroPartition.blocks(fact.n_env, 1)),
            "independence_metric": ob.INDEPENDENCE_METRIC,
        }
    )
    if cfg.family == "iid-star":
        rec.verdicts.append(_log_linearity(rec.decay_table, fact.system_dim, cfg.tolerances["linearity_residual"]))
    rec.verdicts.append(_check("macro-decay-bound", worst_bound, slack, detail="max F - exp(-gamma |N_q|)"))
    rec.verdicts.append(_check("product-law", worst_law, law_tol, detail="max |direct F - product of site F|"))
    rec.verdicts.append(_check("monotone-decay", monotone_violation, slack, detail="max increase of F with group size"))


def _log_linearity(table, d_S: int, tolerance: float) -> Verdict:
    """Residual of a straight-line fit of ln F against group size per pair."""
    worst = 0.0
    for i in range(d_S):
        for j in range(d_S):
            rows = [(r[0], r[3]) for r in table if r[1] == i and r[2] == j]
            if len(rows) < 3 or min(f for _, f in rows) <= 0:
                continue
            x = np.array([r[0] for r in rows], dtype=float)
            y = np.log([r[1] for r in rows])
            coef = np.polyfit(x, y, 1)
            worst = max(worst, float(np.max(np.abs(np.polyval(coef, x) - y))))
    return _check("log-fidelity-linear", worst, tolerance, detail="max residual of ln F vs group size")


def _run_equilibration_bounds(cfg: ScenarioConfig, rec: ResultRecord) -> None:
    slack = cfg.tolerances["bound_slack"]
    dims = (cfg.system_dim, *cfg.env_dims)
    total = cfg.total_dim
    worst = -math.inf
    rows = []
    for n, s in enumerate(_seeds(cfg.seed, cfg.instances)):
        rng = np.random.default_rng(s)
        H = hm.random_gue(total, rng)
        O = hm.random_gue(total, rng)
        rho0 = random_density(total, seed=int(rng.integers(2**63))).with_dims(dims)
        gap_tol = hm.default_gap_tolerance(np.linalg.eigvalsh(H), cfg.tolerances["gap_rel"])
        for m in cfg.window_multiples:
            diag = hm.diagnose_spectrum(H, gap_tol)
            T = m / diag.min_gap
            obs = eq.check_observable_bound(rho0, H, O, T, cfg.samples, gap_tolerance=gap_tol)
            subsys = eq.check_subsystem_bound(rho0, H, [0], T, cfg.samples, gap_tolerance=gap_tol)
            for r in (obs, subsys):
                if r.asserted:
                    lhs = r.observable_bound_lhs if r.observable_bound_lhs is not None else r.subsystem_bound_lhs
                    rhs = r.observable_bound_rhs if r.observable_bound_rhs is not None else r.subsystem_bound_rhs
                    worst = max(worst, lhs - rhs)
            rows.append({"instance": n, "window_multiple": m, "observable": obs.to_dict(), "subsystem": subsys.to_dict()})
    rec.payload["instances"] = rows
    rec.verdicts.append(_check("equilibration-bounds", worst, slack, detail="max lhs - rhs over asserted windows"))


def _run_custom(cfg: ScenarioConfig, rec: ResultRecord) -> None:
    try:
        spec = hm.spec_from_dict(json.loads(Path(cfg.spec_file).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigParseError(f"cannot load Hamiltonian file: {exc}", field="hamiltonian.spec_file") from exc
    if tuple(spec.dims) != (cfg.system_dim, *cfg.env_dims):
        raise ConfigParseError(f"Hamiltonian dims {spec.dims} disagree with [dims]", field="dims.env")
    rng = np.random.default_rng(_seeds(cfg.seed, 1)[0])
    rho_S0 = random_density(cfg.system_dim, seed=int(rng.integers(2**63)))
    env_states = [random_density(d, seed=int(rng.integers(2**63))) for d in cfg.env_dims]
    if isinstance(spec, hm.VonNeumannSpec):
        rho_inf = eq.von_neumann_equilibrium(spec, rho_S0, product_state(env_states).with_dims(cfg.env_dims))
        rec.payload["mutual_information"] = qops.mutual_information(rho_inf, (cfg.system_dim, cfg.d_E))
    elif isinstance(spec, hm.StarHamiltonianSpec):
        report = ob.objectivity_report(spec, rho_S0, env_states, ob.MacroPartition.blocks(len(cfg.env_dims), 1))
        rec.payload.update(report.to_dict())
        rho_inf = eq.conditional_equilibrium(spec, rho_S0, env_states)
        gap = float(np.nanmin(report.fidelity_env - report.lower_bound_tight))
        rec.verdicts.append(_check("fidelity-above-tight-bound", gap, cfg.tolerances["bound_slack"], upper=False))
    else:
        rho_inf = eq.conditional_equilibrium(spec, rho_S0, env_states)
    cq = ob.cq_distance(rho_inf, spec.basis)
    rec.payload["cq_distance"] = cq
    rec.verdicts.append(_check("classical-quantum", cq, cfg.tolerances["cq_distance"]))


RUNNERS = {
    "impossibility": _run_impossibility,
    "standard-model": _run_standard_model,
    "sbs-scaling": _run_sbs_scaling,
    "equilibration-bounds": _run_equilibration_bounds,
    "custom": _run_custom,
}


def run(config: ScenarioConfig, *, write: bool = True) -> ResultRecord:
    """Run a scenario and, if ``write``, persist JSON and CSV results under
    ``config.output_path``.

    Raises:
        ConfigParseError, DimensionOverflow: propagated unchanged.
        ScenarioError: wrapping any other module error.
    """
    rec = ResultRecord(config)
    start = time.perf_counter()
    try:
        RUNNERS[config.experiment](config, rec)
    except (ConfigParseError, DimensionOverflow):
        raise
    except (ObjeqError, np.linalg.LinAlgError) as exc:
        raise ScenarioError(f"{config.experiment} (seed {config.seed}): {type(exc).__name__}: {exc}", exc) from exc
    rec.wall_time["compute"] = time.perf_counter() - start
    if write:
        t = time.perf_counter()
        write_results(rec, config.output_path)
        rec.wall_time["write"] = time.perf_counter() - t
        write_atomic(
            Path(config.output_path) / RUN_INFO_FILE,
            dumps({"wall_time": rec.wall_time, "output_path": str(config.output_path), "source": config.source}),
        )
    return rec


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_csv(record: ResultRecord, path) -> None:
    """Write ``decay.csv`` and ``fidelity.csv`` into the directory ``path``.

    Floats use 17 significant digits so that parsing them back is exact.
    """
    path = Path(path)
    write_atomic(path / DECAY_FILE, _csv_text(DECAY_COLUMNS, record.decay_table))
    write_atomic(path / FIDELITY_FILE, _csv_text(FIDELITY_COLUMNS, record.fidelity_table))


def write_results(record: ResultRecord, path) -> None:
    path = Path(path)
    write_atomic(path / RESULT_FILE, dumps(record.deterministic_dict()))
    emit_csv(record, path)
