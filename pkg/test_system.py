#!/usr/bin/env python3
"""
End-to-end checks on the shipped scenarios: subdomain conservation on
Burgers, invariant freezing, mass and energy behaviour of the Navier-Stokes
velocity ROM, and bit-identical reruns.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from scrom import pipeline
from scrom.ns_fom import build_operators
from scrom.ns_rom import CarlbergVelocityRom, VelocityRom, kinetic_energy
from scrom.problems import build_problem
from scrom.rom import GalerkinRom
from scrom.scenario_importer import ScenarioImporter
from scrom.timeint import integrate, make_stepper

SCENARIOS = Path(__file__).parent / "scenarios"

INVARIANT_SCENARIO = """
name: burgers_invariant
problem: burgers1d
grid: {n_cells: 64}
viscosity: 0.05
initial_condition: {preset: sine, amplitude: 0.3, offset: 0.2}
time: {dt: 0.01, t_end: 1.0}
subdomains:
  - ranges: [[0, 64]]
  - ranges: [[8, 24]]
rom: {kind: novel, q: 8, invariant: [0]}
"""


def _load(name, out):
    [cfg] = ScenarioImporter().load(SCENARIOS / name, out=str(out))
    return cfg


def _with_rom(cfg, **changes):
    return cfg.model_copy(update={"rom": cfg.rom.model_copy(update=changes)})


@pytest.fixture(scope="module")
def burgers(tmp_path_factory):
    cfg = _load("burgers_scenario.yaml", tmp_path_factory.mktemp("burgers"))
    problem = build_problem(cfg)
    return cfg, problem, pipeline.simulate_fom(cfg, problem)


@pytest.fixture(scope="module")
def ns(tmp_path_factory):
    cfg = _load("ns_scenario.yaml", tmp_path_factory.mktemp("ns"))
    problem = build_problem(cfg)
    return cfg, problem, pipeline.simulate_fom(cfg, problem)


def test_novel_rom_conserves_where_pod_does_not(burgers):
    cfg, problem, fom = burgers
    assert fom.times.size == 201

    novel = pipeline.simulate_rom(cfg, pipeline.build_basis(cfg, fom.snapshots, problem), problem, fom.snapshots)
    assert max(novel.subdom_res_max) <= 1e-9

    pod_cfg = _with_rom(cfg, kind="pod", q=None, p=10)
    pod = pipeline.simulate_rom(pod_cfg, pipeline.build_basis(pod_cfg, fom.snapshots, problem), problem)
    assert max(pod.subdom_res_max) >= 1e-4


def test_carlberg_rom_conserves_too(burgers):
    cfg, problem, fom = burgers
    carlberg_cfg = _with_rom(cfg, kind="carlberg", q=None, p=10)
    artifact = pipeline.build_basis(carlberg_cfg, fom.snapshots, problem)
    assert artifact.audit.feasible
    report = pipeline.simulate_rom(carlberg_cfg, artifact, problem)
    assert max(report.subdom_res_max) <= 1e-9


def test_galerkin_with_inclusion_basis_solves_merged_system(burgers):
    cfg, problem, fom = burgers
    artifact = pipeline.build_basis(cfg, fom.snapshots, problem)
    rom = GalerkinRom(artifact.basis, problem.fom)
    integrator = cfg.time.integrator()
    trajectory = integrate(make_stepper(rom.rhs, integrator), rom.initial_state(problem.u0), cfg.time.dt, 50)
    merged = np.hstack([artifact.basis.matrix, problem.C])
    for n, t in enumerate(trajectory.times):
        a = trajectory.states[:, n]
        residual = merged.T @ (rom.lift(rom.rhs(a, t)) - problem.fom.rhs(rom.lift(a), t))
        assert np.linalg.norm(residual) <= 1e-10


def test_invariant_freezing_matches_unfrozen_run():
    [cfg] = ScenarioImporter().import_config(INVARIANT_SCENARIO)
    problem = build_problem(cfg)
    fom = pipeline.simulate_fom(cfg, problem)
    artifact = pipeline.build_basis(cfg, fom.snapshots, problem)
    assert artifact.audit.n_frozen == 1

    frozen = pipeline.make_reduced_model(cfg, problem, artifact)
    free = pipeline.make_reduced_model(_with_rom(cfg, invariant=[]), problem, artifact)
    integrator = cfg.time.integrator()
    steps = integrator.n_steps
    frozen_run = integrate(make_stepper(frozen.rhs, integrator), frozen.initial_state(problem.u0), cfg.time.dt, steps)
    free_run = integrate(make_stepper(free.rhs, integrator), free.initial_state(problem.u0), cfg.time.dt, steps)

    whole = problem.C[:, 0] / np.linalg.norm(problem.C[:, 0])
    coefficient = []
    for n in range(free_run.times.size):
        u_free = free.lift(free_run.states[:, n])
        np.testing.assert_allclose(frozen.lift(frozen_run.states[:, n]), u_free, atol=1e-10)
        coefficient.append(whole @ u_free)
    drift = np.max(np.abs(np.array(coefficient) - coefficient[0]))
    assert drift / cfg.time.t_end <= 1e-12


def test_ns_operators_are_structured(ns):
    _, problem, _ = ns
    ops = build_operators(problem.grid)
    assert abs(ops.M + ops.G.T).max() == 0.0
    assert np.max(np.abs(ops.M @ np.ones(ops.grid.n_v))) <= 1e-12
    assert np.all(ops.omega > 0.0)


def test_ns_novel_rom_conserves_mass_and_momentum(ns):
    cfg, problem, fom = ns
    assert max(fom.report.mass_res_max) <= 1e-10
    artifact = pipeline.build_basis(cfg, fom.snapshots, problem)
    audit = artifact.audit
    assert audit.r1 + audit.r2 == 12
    assert audit.pressure_coupling_max <= 1e-11
    assert audit.divergence_max <= 1e-11
    assert pipeline.verify_artifact(cfg, artifact).passed

    report = pipeline.simulate_rom(cfg, artifact, problem, fom.snapshots)
    assert max(report.mass_res_max) <= 1e-10
    assert max(report.subdom_res_max) <= 1e-9
    assert np.all(np.diff(report.kinetic_energy) <= 1e-12)


def test_ns_energy_stability(ns, record_property):
    cfg, problem, fom = ns
    integrator = cfg.time.integrator()
    steps = integrator.n_steps
    artifact = pipeline.build_basis(cfg, fom.snapshots, problem)
    split = pipeline.make_reduced_model(cfg, problem, artifact).split

    inviscid = VelocityRom(split, problem.ops, nu=0.0)
    a0 = inviscid.initial_state(problem.V0)
    run = integrate(make_stepper(inviscid.rhs, integrator), a0, cfg.time.dt, steps)
    energies = np.array([kinetic_energy(run.states[:, n]) for n in range(run.times.size)])
    assert np.max(np.abs(energies - energies[0])) <= 1e-9 * energies[0]
    assert np.max(np.abs(problem.ops.M @ (split.phi0 @ run.states))) <= 1e-10

    pod_cfg = _with_rom(cfg, kind="carlberg")
    pod_artifact = pipeline.build_basis(pod_cfg, fom.snapshots, problem)
    viscous_baseline = pipeline.make_reduced_model(pod_cfg, problem, pod_artifact)
    baseline = CarlbergVelocityRom(replace(viscous_baseline.base, nu=0.0), problem.C)
    b0 = baseline.initial_state(problem.V0)
    baseline_run = integrate(make_stepper(baseline.rhs, integrator), b0, cfg.time.dt, steps)
    baseline_energy = np.array([kinetic_energy(baseline_run.states[:, n]) for n in range(baseline_run.times.size)])
    record_property("carlberg_inviscid_energy_drift", float(np.max(np.abs(baseline_energy / baseline_energy[0] - 1.0))))


def test_reruns_are_bit_identical(tmp_path):
    reports = []
    for run in ("first", "second"):
        cfg = _load("burgers_scenario.yaml", tmp_path / run)
        pipeline.run_fom(cfg)
        pipeline.build_rom(cfg)
        pipeline.run_rom(cfg)
        reports.append(
            [(tmp_path / run / name).read_bytes() for name in ("fom_report.csv", "rom_novel_report.csv", "snapshots.bin")]
        )
    assert reports[0] == reports[1]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
