from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml
from numpy.testing import assert_allclose

from scrom import pipeline
from scrom.artifacts import (
    load_artifact,
    metadata_path,
    read_report,
    read_snapshots,
    save_artifact,
    write_report,
    write_snapshots,
)
from scrom.database import DATABASE_URL_ENV, database_url, get_engine, list_runs
from scrom.errors import ArtifactError, InfeasibleConstraintError
from scrom.linalg import ReducedBasis
from scrom.main import EXIT_FAILED_CHECK, EXIT_OK, EXIT_RUNTIME_ERROR, main
from scrom.models import RunReport, ThresholdConfig
from scrom.problems import build_problem
from scrom.scenario_importer import ScenarioImporter

BURGERS = {
    "name": "burgers_tiny",
    "problem": "burgers1d",
    "grid": {"n_cells": 32},
    "viscosity": 0.02,
    "initial_condition": {"preset": "gaussian", "amplitude": 0.5, "width": 0.1, "offset": 0.2},
    "time": {"dt": 0.01, "t_end": 0.2},
    "subdomains": [{"ranges": [[0, 8]]}, {"ranges": [[6, 14]]}, {"cells": [20, 21, 30, 31]}],
    "rom": {"kind": "novel", "q": 6},
}

NS = {
    "name": "ns_tiny",
    "problem": "ns2d",
    "grid": {"nx": 8, "ny": 8},
    "viscosity": 0.02,
    "initial_condition": {"preset": "random_modes", "n_modes": 3},
    "time": {"dt": 0.01, "t_end": 0.1},
    "momentum_subdomains": [
        {"u_block": {"i": [0, 8], "j": [0, 8]}, "v_block": {"i": [0, 8], "j": [0, 8]}},
        {"u_block": {"i": [0, 8], "j": [2, 4]}},
    ],
    "rom": {"kind": "novel", "r_v": 6},
}


@pytest.fixture(autouse=True)
def local_catalog(monkeypatch):
    monkeypatch.delenv(DATABASE_URL_ENV, raising=False)


def _config(tmp_path, base=BURGERS, **rom):
    data = dict(base)
    if rom:
        data["rom"] = rom
    [cfg] = ScenarioImporter().import_config(yaml.safe_dump(data), out=str(tmp_path))
    return cfg


def _report(n=3, energy=1.0):
    return RunReport(
        t=[0.1 * k for k in range(n)],
        subdom_res_max=[1e-14] * n,
        kinetic_energy=[energy + 0.01 * k for k in range(n)],
        mass_res_max=[None] * n,
        state_err_l2=[None, 1e-3, 2e-3][:n],
    )


def test_snapshot_file_round_trip(tmp_path):
    X = np.arange(12.0).reshape(3, 4) / 7.0
    path = tmp_path / "snap.bin"
    write_snapshots(path, X)
    assert path.read_bytes()[:8] == b"ROMSNAP1"
    assert np.array_equal(read_snapshots(path), X)


def test_corrupt_snapshot_files(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTSNAPSHOT")
    with pytest.raises(ArtifactError):
        read_snapshots(path)
    write_snapshots(path, np.ones((2, 2)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ArtifactError, match="expected"):
        read_snapshots(path)


def test_report_csv_keeps_absent_values(tmp_path):
    path = tmp_path / "report.csv"
    report = _report()
    write_report(path, report)
    assert path.read_text().splitlines()[0] == "t,subdom_res_max,kinetic_energy,mass_res_max,state_err_l2"
    loaded = read_report(path)
    assert loaded == report
    assert loaded.mass_res_max == [None, None, None]
    assert loaded.state_err_l2[0] is None


def test_report_with_wrong_header(tmp_path):
    path = tmp_path / "report.csv"
    path.write_text("time,energy\n0.0,1.0\n")
    with pytest.raises(ArtifactError, match="header"):
        read_report(path)


def test_fom_run_writes_outputs_and_catalog(tmp_path):
    cfg = _config(tmp_path)
    result = pipeline.run_fom(cfg)
    assert result.snapshots.shape == (32, 21)
    assert read_snapshots(tmp_path / "snapshots.bin").shape == (32, 21)
    report = read_report(tmp_path / "fom_report.csv")
    assert max(report.subdom_res_max) < 1e-12
    assert metadata_path(tmp_path / "fom_report.csv").exists()
    runs = list_runs(get_engine(database_url(tmp_path)), scenario="burgers_tiny")
    assert [(r.command, r.status) for r in runs] == [("fom-run", "ok")]
    assert runs[0].config_hash == cfg.config_hash()


def test_fom_run_is_deterministic(tmp_path):
    first = _config(tmp_path / "a")
    second = _config(tmp_path / "b")
    pipeline.run_fom(first)
    pipeline.run_fom(second)
    assert (tmp_path / "a" / "snapshots.bin").read_bytes() == (tmp_path / "b" / "snapshots.bin").read_bytes()


def test_novel_burgers_pipeline(tmp_path):
    cfg = _config(tmp_path)
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    assert artifact.audit.dim == 6
    assert artifact.audit.n_constraint_modes == 3
    assert artifact.audit.constraint_inclusion < 1e-12

    reloaded = load_artifact(tmp_path / "rom_novel.npz")
    assert np.array_equal(reloaded.basis.matrix, artifact.basis.matrix)
    assert reloaded.audit == artifact.audit
    assert pipeline.verify(cfg).passed

    report = pipeline.run_rom(cfg)
    assert max(report.subdom_res_max) < 1e-12
    assert report.state_err_l2[0] is not None
    assert (tmp_path / "rom_novel_report.csv").exists()


def test_plain_pod_violates_subdomain_balance(tmp_path):
    cfg = _config(tmp_path, kind="pod", p=3)
    pipeline.run_fom(cfg)
    pipeline.build_rom(cfg)
    report = pipeline.run_rom(cfg)
    assert max(report.subdom_res_max) > 1e-8


def test_carlberg_burgers_pipeline(tmp_path):
    cfg = _config(tmp_path, kind="carlberg", p=5)
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    assert artifact.audit.feasible
    report = pipeline.run_rom(cfg)
    assert max(report.subdom_res_max) < 1e-10


def test_invariant_freezing_keeps_total_mass(tmp_path):
    data = dict(BURGERS, subdomains=[{"ranges": [[0, 32]]}, {"ranges": [[4, 12]]}])
    cfg = _config(tmp_path, base=data, kind="novel", q=6, invariant=[0])
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    assert artifact.audit.n_frozen == 1
    report = pipeline.run_rom(cfg)
    assert max(report.subdom_res_max) < 1e-12


def test_build_basis_requires_snapshots(tmp_path):
    with pytest.raises(ArtifactError, match="fom-run"):
        pipeline.build_rom(_config(tmp_path))


def test_tampered_artifact_fails_verification(tmp_path):
    cfg = _config(tmp_path)
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    bad_basis = ReducedBasis(
        matrix=1.01 * artifact.basis.matrix,
        kind=artifact.basis.kind,
        n_constraint_modes=artifact.basis.n_constraint_modes,
    )
    path = tmp_path / "tampered.npz"
    save_artifact(path, replace(artifact, basis=bad_basis))
    result = pipeline.verify(cfg, path)
    assert not result.passed
    assert "result: FAIL" in result.text


def test_ns_pipeline(tmp_path):
    cfg = _config(tmp_path, base=NS)
    fom = pipeline.run_fom(cfg)
    assert max(fom.report.mass_res_max) < 1e-10
    artifact = pipeline.build_rom(cfg)
    assert artifact.audit.r1 + artifact.audit.r2 == 6
    assert artifact.audit.constraint_divergence_max < 1e-12
    assert pipeline.verify(cfg).passed

    report = pipeline.run_rom(cfg)
    assert max(report.mass_res_max) < 1e-12
    assert max(report.subdom_res_max) < 1e-10
    energies = np.array(report.kinetic_energy)
    assert np.all(np.diff(energies) <= 1e-14)


def test_carlberg_model_uses_configured_feasibility_tolerance(tmp_path):
    data = dict(BURGERS, tolerances={"feasibility_tol": 1e-8})
    cfg = _config(tmp_path, base=data, kind="carlberg", p=5)
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    model = pipeline.make_reduced_model(cfg, build_problem(cfg), artifact)
    assert model.feasibility_tol == 1e-8
    assert model.enforce


def test_ns_carlberg_rejects_single_face_subdomains(tmp_path):
    data = dict(NS, momentum_subdomains=[{"u": [k]} for k in range(0, 64, 4)])
    cfg = _config(tmp_path, base=data, kind="carlberg", r_v=3)
    pipeline.run_fom(cfg)
    artifact = pipeline.build_rom(cfg)
    assert artifact.audit.feasible is False
    model = pipeline.make_reduced_model(cfg, build_problem(cfg), artifact)
    assert model.perturbed.feasibility_tol == cfg.tolerances.feasibility_tol
    with pytest.raises(InfeasibleConstraintError) as info:
        pipeline.run_rom(cfg)
    assert info.value.rows
    assert [run.status for run in list_runs(get_engine(database_url(tmp_path)))][-1] == "failed"


def test_ns_carlberg_pipeline_runs_with_rounding_level_rows(tmp_path):
    cfg = _config(tmp_path, base=NS, kind="carlberg", r_v=6)
    pipeline.run_fom(cfg)
    pipeline.build_rom(cfg)
    report = pipeline.run_rom(cfg)
    assert len(report.t) == 11
    assert max(report.mass_res_max) < 1e-12


def test_compare_identical_reports_passes(tmp_path):
    report = _report()
    thresholds = ThresholdConfig(max_abs_diff={"kinetic_energy": 1e-12})
    result = pipeline.compare_reports(report, report, thresholds)
    assert result.passed
    assert "result: PASS" in result.text
    absent = {row.column: row.status for row in result.rows}
    assert absent["mass_res_max"] == "absent"


def test_compare_reports_threshold_breach():
    thresholds = ThresholdConfig(max_abs_diff={"kinetic_energy": 1e-3}, min_log10_ratio={"subdom_res_max": 2.0})
    result = pipeline.compare_reports(_report(energy=1.0), _report(energy=1.1), thresholds)
    assert not result.passed
    assert len(result.failures) == 2
    energy_row = next(row for row in result.rows if row.column == "kinetic_energy")
    assert energy_row.max_abs_diff == pytest.approx(0.1)


def test_compare_rejects_different_time_grids():
    with pytest.raises(ArtifactError, match="time grids"):
        pipeline.compare_reports(_report(3), _report(2))


def _write_config(tmp_path, data):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_cli_exit_codes(tmp_path, capsys):
    config = _write_config(tmp_path, BURGERS)
    out = str(tmp_path / "cli")
    common = ["--config", config, "--out", out, "--log-level", "error"]

    assert main(["rom-run", *common]) == EXIT_RUNTIME_ERROR
    assert main(["fom-run", *common]) == EXIT_OK
    assert main(["build-basis", *common]) == EXIT_OK
    assert main(["rom-run", *common]) == EXIT_OK
    assert main(["verify", *common]) == EXIT_OK

    fom_report = str(Path(out) / "fom_report.csv")
    rom_report = str(Path(out) / "rom_novel_report.csv")
    assert main(["compare", *common, fom_report, fom_report]) == EXIT_OK
    assert "result: PASS" in capsys.readouterr().out
    assert main(["compare", *common, fom_report, str(tmp_path / "missing.csv")]) == EXIT_RUNTIME_ERROR
    assert main(["compare", *common, fom_report, rom_report]) == EXIT_OK


def test_cli_threshold_failure_and_bad_config(tmp_path):
    out = str(tmp_path / "cli")
    strict = dict(BURGERS, rom={"kind": "pod", "p": 3}, thresholds={"max_abs_diff": {"subdom_res_max": 1e-14}})
    config = _write_config(tmp_path, strict)
    common = ["--config", config, "--out", out, "--log-level", "error"]
    for command in ("fom-run", "build-basis", "rom-run"):
        assert main([command, *common]) == EXIT_OK
    reports = [str(Path(out) / "fom_report.csv"), str(Path(out) / "rom_pod_report.csv")]
    assert main(["compare", *common, *reports]) == EXIT_FAILED_CHECK

    broken = _write_config(tmp_path, dict(BURGERS, rom={"kind": "novel", "q": 2}))
    assert main(["fom-run", "--config", broken, "--out", out, "--log-level", "error"]) == EXIT_FAILED_CHECK


def test_cli_batch_with_threads(tmp_path):
    batch = {"scenarios": [dict(BURGERS, name="one"), dict(BURGERS, name="two", viscosity=0.05)]}
    config = _write_config(tmp_path, batch)
    out = tmp_path / "batch"
    assert main(["fom-run", "--config", config, "--out", str(out), "--threads", "2", "--log-level", "error"]) == EXIT_OK
    one = read_snapshots(out / "one" / "snapshots.bin")
    two = read_snapshots(out / "two" / "snapshots.bin")
    assert_allclose(one[:, 0], two[:, 0])
    assert not np.array_equal(one, two)
