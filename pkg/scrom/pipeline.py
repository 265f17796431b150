"""Scenario pipeline: FOM run, basis construction, ROM run, report comparison
and artifact verification.

Every command reads and writes files below ``cfg.output_dir``:

    snapshots.bin             FOM snapshot matrix (one column per output step)
    fom_report.csv            FOM diagnostics
    rom_<kind>.npz            basis artifact written by build-basis
    rom_<kind>_report.csv     ROM diagnostics
    *.csv.meta.json           run metadata next to every report
    runs.db                   run catalog (unless SCROM_DATABASE_URL is set)
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy

import scrom
from scrom.artifacts import (
    RomArtifact,
    load_artifact,
    read_report,
    read_snapshots,
    save_artifact,
    write_metadata,
    write_report,
    write_snapshots,
)
from scrom.database import create_db_and_tables, database_url, get_engine, record_run
from scrom.errors import ArtifactError, DimensionError
from scrom.linalg import numerical_rank, svd
from scrom.models import REPORT_COLUMNS, BasisAudit, RunMetadata, RunRecord, RunReport, ScenarioConfig, ThresholdConfig
from scrom.ns_fom import (
    NsState,
    divergence_residual,
    fom_step,
    instantaneous_pressure,
    subdomain_momentum_residual,
)
from scrom.ns_fom import kinetic_energy as fom_kinetic_energy
from scrom.ns_rom import (
    CarlbergVelocityRom,
    DivergenceFreeSplit,
    VelocityRom,
    WeightedBasis,
    divergence_free_split,
    kinetic_energy,
    mass_residual,
    momentum_residual,
    weighted_constrained_basis,
)
from scrom.problems import BurgersProblem, Problem, build_problem
from scrom.rom import (
    DEFAULT_ENERGY,
    GalerkinRom,
    InvariantSpec,
    PerturbedRom,
    apply_invariant_offsets,
    constrained_pod_basis,
    pod_basis,
    subdomain_residual,
)
from scrom.summary_engine import AuditCheck, ColumnComparison, SummaryEngine
from scrom.timeint import integrate, make_stepper

logger = logging.getLogger(__name__)

SNAPSHOT_FILE = "snapshots.bin"
FOM_REPORT_FILE = "fom_report.csv"
AUDIT_LIMIT = 1e-10
DIVERGENCE_LIMIT = 1e-11
RELOAD_TOL = 1e-14


def output_dir(cfg: ScenarioConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def artifact_path(cfg: ScenarioConfig) -> Path:
    return Path(cfg.output_dir) / f"rom_{cfg.rom.kind}.npz"


def rom_report_path(cfg: ScenarioConfig) -> Path:
    return Path(cfg.output_dir) / f"rom_{cfg.rom.kind}_report.csv"


@contextmanager
def _stage(cfg: ScenarioConfig, command: str, output_path: Path):
    """Times a command and files it in the run catalog, failed or not."""
    engine = get_engine(database_url(output_dir(cfg)))
    create_db_and_tables(engine)
    start = time.perf_counter()
    status = "failed"
    timing = {}
    try:
        yield timing
        status = "ok"
    finally:
        elapsed = time.perf_counter() - start
        timing["wall_time_s"] = elapsed
        record_run(
            engine,
            RunRecord(
                scenario=cfg.name,
                command=command,
                status=status,
                config_hash=cfg.config_hash(),
                package_version=scrom.__version__,
                numpy_version=np.__version__,
                scipy_version=scipy.__version__,
                wall_time_s=elapsed,
                output_path=str(output_path),
            ),
        )
        logger.info("%s: %s %s in %.2fs", cfg.name, command, status, elapsed)


def _metadata(cfg: ScenarioConfig, command: str, wall_time_s: float) -> RunMetadata:
    return RunMetadata(
        scenario=cfg.name,
        command=command,
        config_hash=cfg.config_hash(),
        package_version=scrom.__version__,
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
        wall_time_s=wall_time_s,
    )


def _max_abs(x: np.ndarray) -> Optional[float]:
    return float(np.max(np.abs(x))) if np.size(x) else None


@dataclass(frozen=True, eq=False)
class FomResult:
    times: np.ndarray
    snapshots: np.ndarray
    report: RunReport


def simulate_fom(cfg: ScenarioConfig, problem: Optional[Problem] = None) -> FomResult:
    """Integrate the FOM and collect snapshots and diagnostics, without file I/O."""
    problem = problem or build_problem(cfg)
    tc = cfg.time
    integrator = tc.integrator()
    n_steps = integrator.n_steps
    stride = tc.snapshot_stride

    if isinstance(problem, BurgersProblem):
        fom = problem.fom
        trajectory = integrate(make_stepper(fom.rhs, integrator), problem.u0, tc.dt, n_steps, stride)
        times, X = trajectory.times, trajectory.states
        subdom, energy = [], []
        for n, t in enumerate(times):
            u = X[:, n]
            if problem.C.shape[1]:
                res = subdomain_residual(problem.C, fom, u, fom.rhs(u, t), t)
                subdom.append(_max_abs(res))
            else:
                subdom.append(None)
            energy.append(0.5 * float(u @ (fom.volumes * u)))
        report = RunReport(
            t=times.tolist(),
            subdom_res_max=subdom,
            kinetic_energy=energy,
            mass_res_max=[None] * times.size,
            state_err_l2=[None] * times.size,
        )
        return FomResult(times=times, snapshots=X, report=report)

    ops = problem.ops
    state = NsState(velocity=problem.V0, pressure=np.zeros(problem.grid.n_p), t=0.0)
    times, columns = [0.0], [state.velocity.copy()]
    for n in range(n_steps):
        state = fom_step(ops, state, tc.dt, problem.nu, problem.force, integrator)
        state = NsState(velocity=state.velocity, pressure=state.pressure, t=(n + 1) * tc.dt)
        if (n + 1) % stride == 0:
            times.append(state.t)
            columns.append(state.velocity.copy())
    times = np.asarray(times)
    X = np.stack(columns, axis=1)
    subdom, energy, mass = [], [], []
    for n, t in enumerate(times):
        V = X[:, n]
        energy.append(fom_kinetic_energy(ops, V))
        mass.append(divergence_residual(ops, V))
        if problem.C.shape[1]:
            p, omega_dvdt = instantaneous_pressure(ops, V, t, problem.nu, problem.force)
            res = subdomain_momentum_residual(
                ops, problem.C, V, omega_dvdt / ops.omega, t, problem.nu, problem.force, pressure=p
            )
            subdom.append(_max_abs(res))
        else:
            subdom.append(None)
    report = RunReport(
        t=times.tolist(),
        subdom_res_max=subdom,
        kinetic_energy=energy,
        mass_res_max=mass,
        state_err_l2=[None] * times.size,
    )
    return FomResult(times=times, snapshots=X, report=report)


def run_fom(cfg: ScenarioConfig) -> FomResult:
    """fom-run: integrates the FOM and writes snapshots, report and metadata.

    Args:
        cfg: Validated scenario.

    Returns:
        The snapshots and the FOM report, as also written to the output
        directory.

    Raises:
        ConvergenceError: If an implicit step does not converge.
    """
    out = output_dir(cfg)
    report_path = out / FOM_REPORT_FILE
    with _stage(cfg, "fom-run", report_path) as timing:
        result = simulate_fom(cfg)
        write_snapshots(out / SNAPSHOT_FILE, result.snapshots)
        write_report(report_path, result.report)
    write_metadata(report_path, _metadata(cfg, "fom-run", timing["wall_time_s"]))
    return result


def _size(cfg: ScenarioConfig) -> Optional[int]:
    rom = cfg.rom
    if cfg.problem == "ns2d":
        return rom.r_v
    return rom.q if rom.kind == "novel" else rom.p


def _split_from_artifact(artifact: RomArtifact) -> DivergenceFreeSplit:
    if artifact.q1m is None or artifact.q2m is None or artifact.r1m is None:
        raise ArtifactError("ns2d artifact lacks the divergence-free split")
    return DivergenceFreeSplit(phi=artifact.basis.matrix, q1m=artifact.q1m, q2m=artifact.q2m, r1m=artifact.r1m)


def build_basis(cfg: ScenarioConfig, snapshots: np.ndarray, problem: Optional[Problem] = None) -> RomArtifact:
    """Construct the configured basis and its audit, without file I/O.

    Args:
        cfg: Validated scenario; ``rom`` and ``tolerances`` select the basis.
        snapshots: Snapshot matrix, one FOM state per column.
        problem: Prebuilt problem; built from ``cfg`` when omitted.

    Returns:
        The artifact ``build-basis`` would write. For ``carlberg`` its audit
        records whether rank(CᵀΦ) = rank(C).

    Raises:
        DimensionError: If the snapshot rows do not match the problem size.
    """
    problem = problem or build_problem(cfg)
    rom_cfg = cfg.rom
    tol = cfg.tolerances.rank_tol
    size = _size(cfg)
    C = problem.C
    X = np.asarray(snapshots, dtype=float)

    if isinstance(problem, BurgersProblem):
        if X.shape[0] != problem.fom.dim:
            raise DimensionError(f"snapshots have {X.shape[0]} rows, the FOM has {problem.fom.dim}")
        if rom_cfg.kind == "novel":
            basis = constrained_pod_basis(X, C, q=size, energy=rom_cfg.energy or DEFAULT_ENERGY, tol=tol)
        else:
            basis = pod_basis(X, p=size, energy=rom_cfg.energy if size is None else None, tol=tol)
        feasible = None
        if rom_cfg.kind == "carlberg":
            feasible = PerturbedRom.from_fom(
                basis, C, problem.fom, tol, feasibility_tol=cfg.tolerances.feasibility_tol
            ).is_feasible
        n_frozen = 0
        if rom_cfg.invariant:
            flagged = C[:, rom_cfg.invariant]
            n_frozen = numerical_rank(svd(flagged).s, tol)
        audit = BasisAudit(
            kind=rom_cfg.kind,
            problem=cfg.problem,
            n_rows=basis.n_rows,
            dim=basis.dim,
            n_constraint_modes=basis.n_constraint_modes,
            constraint_rank=numerical_rank(svd(C).s, tol) if C.shape[1] else 0,
            rank_tol=tol,
            orthonormality=basis.orthonormality_residual(),
            constraint_inclusion=basis.constraint_inclusion_residual(C) if C.shape[1] else None,
            feasible=feasible,
            n_frozen=n_frozen,
        )
        logger.info("%s: %s basis with %d modes", cfg.name, rom_cfg.kind, basis.dim)
        return RomArtifact(problem=cfg.problem, basis=basis, C=C, audit=audit)

    ops = problem.ops
    if X.shape[0] != ops.grid.n_v:
        raise DimensionError(f"snapshots have {X.shape[0]} rows, the grid has {ops.grid.n_v} velocity unknowns")
    if rom_cfg.kind == "novel":
        weighted = weighted_constrained_basis(
            X, C, ops.omega, n_modes=size, energy=rom_cfg.energy or DEFAULT_ENERGY, tol=tol
        )
    else:
        weighted = WeightedBasis(
            pod_basis(X, p=size, energy=rom_cfg.energy if size is None else None, weights=ops.omega, tol=tol)
        )
    basis = weighted.basis
    split = divergence_free_split(weighted, ops.M, atol=cfg.tolerances.split_atol)
    velocity_rom = VelocityRom(split, ops, problem.nu, problem.force)
    checks = velocity_rom.audit(C if C.shape[1] else None)
    feasible = None
    if rom_cfg.kind == "carlberg":
        feasible = CarlbergVelocityRom(velocity_rom, C, tol, cfg.tolerances.feasibility_tol).perturbed.is_feasible
    scaled_c = C / np.sqrt(ops.omega)[:, None]
    audit = BasisAudit(
        kind=rom_cfg.kind,
        problem=cfg.problem,
        n_rows=basis.n_rows,
        dim=basis.dim,
        n_constraint_modes=basis.n_constraint_modes,
        constraint_rank=numerical_rank(svd(scaled_c).s, tol) if C.shape[1] else 0,
        rank_tol=tol,
        orthonormality=basis.orthonormality_residual(),
        constraint_inclusion=basis.constraint_inclusion_residual(C) if C.shape[1] else None,
        r1=split.r1,
        r2=split.r2,
        divergence_max=checks["divergence_max"],
        pressure_coupling_max=checks["pressure_coupling_max"],
        constraint_divergence_max=checks.get("constraint_divergence_max"),
        feasible=feasible,
    )
    logger.info("%s: %s velocity basis R_V=%d, r1=%d, r2=%d", cfg.name, rom_cfg.kind, basis.dim, split.r1, split.r2)
    return RomArtifact(
        problem=cfg.problem, basis=basis, C=C, audit=audit, q1m=split.q1m, q2m=split.q2m, r1m=split.r1m
    )


def build_rom(cfg: ScenarioConfig) -> RomArtifact:
    """build-basis: reads the FOM snapshots and writes the ROM artifact."""
    out = output_dir(cfg)
    snapshot_file = out / SNAPSHOT_FILE
    if not snapshot_file.exists():
        raise ArtifactError(f"{snapshot_file} not found; run fom-run first")
    path = artifact_path(cfg)
    with _stage(cfg, "build-basis", path):
        artifact = build_basis(cfg, read_snapshots(snapshot_file))
        save_artifact(path, artifact)
    return artifact


def make_reduced_model(cfg: ScenarioConfig, problem: Problem, artifact: RomArtifact):
    """Assemble the reduced ODE an artifact and its scenario describe.

    Args:
        cfg: Validated scenario; ``rom.kind`` and ``tolerances`` pick the variant.
        problem: Numerical problem built from ``cfg``.
        artifact: Basis artifact written by ``build-basis``.

    Returns:
        A ``GalerkinRom``, ``OffsetGalerkinRom``, ``PerturbedRom``,
        ``VelocityRom`` or ``CarlbergVelocityRom``. Each exposes ``rhs``,
        ``lift``, ``initial_state`` and ``reduced_dim``. The perturbed
        variants raise ``InfeasibleConstraintError`` from ``rhs`` when the
        subdomain constraint cannot be met.

    Raises:
        ArtifactError: If the artifact was built for another problem.
    """
    if artifact.problem != cfg.problem:
        raise ArtifactError(f"artifact was built for {artifact.problem}, scenario is {cfg.problem}")
    kind = cfg.rom.kind
    tol = cfg.tolerances.rank_tol
    feasibility_tol = cfg.tolerances.feasibility_tol
    if isinstance(problem, BurgersProblem):
        if kind == "carlberg":
            return PerturbedRom.from_fom(
                artifact.basis, problem.C, problem.fom, tol, feasibility_tol=feasibility_tol, enforce=True
            )
        galerkin = GalerkinRom(artifact.basis, problem.fom)
        if kind == "novel" and cfg.rom.invariant:
            spec = InvariantSpec.from_indices(cfg.rom.invariant, problem.C.shape[1])
            a0 = galerkin.initial_state(problem.u0)
            return apply_invariant_offsets(artifact.basis, problem.C, spec, a0, problem.fom, tol)
        return galerkin

    base = VelocityRom(_split_from_artifact(artifact), problem.ops, problem.nu, problem.force)
    if kind == "carlberg":
        return CarlbergVelocityRom(base, problem.C, tol, feasibility_tol)
    return base


def _reference_states(cfg: ScenarioConfig, times: np.ndarray) -> Optional[np.ndarray]:
    snapshot_file = Path(cfg.output_dir) / SNAPSHOT_FILE
    if not snapshot_file.exists():
        return None
    X = read_snapshots(snapshot_file)
    if X.shape[1] != times.size:
        logger.warning("%s: snapshot count %d does not match %d ROM outputs; skipping state error",
                       cfg.name, X.shape[1], times.size)
        return None
    return X


def simulate_rom(
    cfg: ScenarioConfig,
    artifact: RomArtifact,
    problem: Optional[Problem] = None,
    reference: Optional[np.ndarray] = None,
) -> RunReport:
    """Integrate the reduced ODE and evaluate diagnostics on the lifted states.

    The subdomain residual at an output state uses the continuous-time
    derivative, the lift of the reduced right-hand side.

    Args:
        cfg: Validated scenario.
        artifact: Basis artifact matching ``cfg.problem``.
        problem: Prebuilt problem; built from ``cfg`` when omitted.
        reference: FOM snapshots on the same output times, for ``state_err_l2``.

    Returns:
        One report row per output step.

    Raises:
        InfeasibleConstraintError: If a perturbed ROM meets a right-hand side
            whose constraint cannot be satisfied.
        ConvergenceError: If an implicit step does not converge.
    """
    problem = problem or build_problem(cfg)
    model = make_reduced_model(cfg, problem, artifact)
    tc = cfg.time
    integrator = tc.integrator()
    u0 = problem.u0 if isinstance(problem, BurgersProblem) else problem.V0
    a0 = model.initial_state(u0)
    trajectory = integrate(make_stepper(model.rhs, integrator), a0, tc.dt, integrator.n_steps, tc.snapshot_stride)
    times = trajectory.times
    zero = model.lift(np.zeros(model.reduced_dim))

    subdom, energy, mass, error = [], [], [], []
    for n, t in enumerate(times):
        a = trajectory.states[:, n]
        u = model.lift(a)
        if isinstance(problem, BurgersProblem):
            dudt = model.lift(model.rhs(a, t)) - zero
            if problem.C.shape[1]:
                subdom.append(_max_abs(subdomain_residual(problem.C, problem.fom, u, dudt, t)))
            else:
                subdom.append(None)
            energy.append(0.5 * float(u @ (problem.fom.volumes * u)))
            mass.append(None)
            volumes = problem.fom.volumes
        else:
            subdom.append(_max_abs(momentum_residual(model, problem.C, a, t)) if problem.C.shape[1] else None)
            energy.append(kinetic_energy(a))
            mass.append(mass_residual(model, a))
            volumes = problem.ops.omega
        if reference is not None:
            diff = u - reference[:, n]
            error.append(float(np.sqrt(diff @ (volumes * diff))))
        else:
            error.append(None)
    return RunReport(t=times.tolist(), subdom_res_max=subdom, kinetic_energy=energy, mass_res_max=mass, state_err_l2=error)


def run_rom(cfg: ScenarioConfig) -> RunReport:
    """rom-run: integrates the ROM from the stored artifact and writes its report."""
    path = artifact_path(cfg)
    if not path.exists():
        raise ArtifactError(f"{path} not found; run build-basis first")
    report_path = rom_report_path(cfg)
    with _stage(cfg, "rom-run", report_path) as timing:
        artifact = load_artifact(path)
        tc = cfg.time
        times = np.arange(0, tc.integrator().n_steps + 1, tc.snapshot_stride) * tc.dt
        report = simulate_rom(cfg, artifact, reference=_reference_states(cfg, times))
        write_report(report_path, report)
    write_metadata(report_path, _metadata(cfg, "rom-run", timing["wall_time_s"]))
    return report


@dataclass(frozen=True)
class CompareResult:
    rows: List[ColumnComparison]
    failures: List[str]
    text: str

    @property
    def passed(self) -> bool:
        return not self.failures


def compare_reports(
    report_a: RunReport,
    report_b: RunReport,
    thresholds: Optional[ThresholdConfig] = None,
    label_a: str = "a",
    label_b: str = "b",
) -> CompareResult:
    """Column-by-column comparison of two reports on the same time grid.

    Args:
        report_a: First report.
        report_b: Second report.
        thresholds: Pass/fail limits per column; none by default.
        label_a: Name of ``report_a`` in messages and the summary.
        label_b: Name of ``report_b`` in messages and the summary.

    Returns:
        Per-column statistics, the failed checks and the rendered summary.

    Raises:
        ArtifactError: If the time columns differ.
    """
    thresholds = thresholds or ThresholdConfig()
    t_a, t_b = np.asarray(report_a.t), np.asarray(report_b.t)
    if t_a.shape != t_b.shape or np.max(np.abs(t_a - t_b), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(t_a), initial=0.0))):
        raise ArtifactError(f"reports {label_a} and {label_b} have different time grids")

    rows, failures = [], []
    for name in REPORT_COLUMNS[1:]:
        pairs = [(x, y) for x, y in zip(report_a.column(name), report_b.column(name)) if x is not None and y is not None]
        row = ColumnComparison(column=name)
        if pairs:
            a = np.array([x for x, _ in pairs])
            b = np.array([y for _, y in pairs])
            diff = np.abs(a - b)
            row.max_abs_diff = float(diff.max())
            row.mean_abs_diff = float(diff.mean())
            row.max_a = float(np.max(np.abs(a)))
            row.max_b = float(np.max(np.abs(b)))
            if row.max_a > 0.0 and row.max_b > 0.0:
                row.log10_ratio = float(np.log10(row.max_a / row.max_b))
        else:
            row.status = "absent"

        limit = thresholds.max_abs_diff.get(name)
        if limit is not None and (row.max_abs_diff is None or row.max_abs_diff > limit):
            row.status = "FAIL"
            failures.append(f"{name}: max|a-b| = {row.max_abs_diff} exceeds {limit}")
        ratio_limit = thresholds.min_log10_ratio.get(name)
        if ratio_limit is not None and (row.log10_ratio is None or row.log10_ratio < ratio_limit):
            row.status = "FAIL"
            failures.append(f"{name}: log10(max|a|/max|b|) = {row.log10_ratio} is below {ratio_limit}")
        rows.append(row)

    text = SummaryEngine().render_compare(label_a, label_b, len(report_a.t), rows, failures)
    return CompareResult(rows=rows, failures=failures, text=text)


def compare(cfg: ScenarioConfig, path_a: Path, path_b: Path) -> CompareResult:
    """compare: reads two CSV reports and writes compare_summary.txt."""
    out = output_dir(cfg)
    summary_path = out / "compare_summary.txt"
    with _stage(cfg, "compare", summary_path):
        result = compare_reports(
            read_report(path_a), read_report(path_b), cfg.thresholds, label_a=str(path_a), label_b=str(path_b)
        )
        summary_path.write_text(result.text)
    return result


@dataclass(frozen=True)
class VerifyResult:
    checks: List[AuditCheck]
    text: str

    @property
    def passed(self) -> bool:
        return all(check.status == "ok" for check in self.checks)


def _check(name: str, stored: Optional[float], recomputed: float, limit: float) -> AuditCheck:
    status = "ok"
    if recomputed > limit:
        status = "FAIL"
    if stored is not None and abs(stored - recomputed) > RELOAD_TOL * max(1.0, abs(stored)):
        status = "FAIL"
    return AuditCheck(name=name, stored=stored, recomputed=recomputed, limit=limit, status=status)


def verify_artifact(cfg: ScenarioConfig, artifact: RomArtifact, label: str = "artifact") -> VerifyResult:
    """Recompute the basis invariants and compare them with the stored audit."""
    basis = artifact.basis
    audit = artifact.audit
    checks = [_check("orthonormality", audit.orthonormality, basis.orthonormality_residual(), AUDIT_LIMIT)]
    C = artifact.C
    if audit.kind == "novel" and C.shape[1]:
        checks.append(
            _check("constraint_inclusion", audit.constraint_inclusion, basis.constraint_inclusion_residual(C), AUDIT_LIMIT)
        )
    if artifact.problem == "ns2d":
        problem = build_problem(cfg)
        if basis.n_rows != problem.ops.grid.n_v:
            raise ArtifactError(f"artifact has {basis.n_rows} rows, the grid has {problem.ops.grid.n_v} velocity unknowns")
        rom = VelocityRom(_split_from_artifact(artifact), problem.ops, problem.nu, problem.force)
        recomputed = rom.audit()
        checks.append(_check("divergence_max", audit.divergence_max, recomputed["divergence_max"], DIVERGENCE_LIMIT))
        checks.append(
            _check("pressure_coupling_max", audit.pressure_coupling_max, recomputed["pressure_coupling_max"], DIVERGENCE_LIMIT)
        )
        split_orthogonality = np.hstack([artifact.q1m, artifact.q2m])
        residual = float(np.max(np.abs(split_orthogonality.T @ split_orthogonality - np.eye(split_orthogonality.shape[1])), initial=0.0))
        checks.append(_check("split_orthogonality", None, residual, AUDIT_LIMIT))
    passed = all(check.status == "ok" for check in checks)
    text = SummaryEngine().render_verify(label, audit.model_dump(exclude_none=True), checks, passed)
    return VerifyResult(checks=checks, text=text)


def verify(cfg: ScenarioConfig, path: Optional[Path] = None) -> VerifyResult:
    """verify: audits a stored artifact, by default the scenario's own."""
    path = Path(path) if path is not None else artifact_path(cfg)
    if not path.exists():
        raise ArtifactError(f"{path} not found; run build-basis first")
    summary_path = output_dir(cfg) / "verify_summary.txt"
    with _stage(cfg, "verify", summary_path):
        result = verify_artifact(cfg, load_artifact(path), str(path))
        summary_path.write_text(result.text)
    return result

