"""File formats: binary snapshot matrices, CSV reports, ``.npz`` ROM artifacts
and the JSON metadata sidecars."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from scrom.errors import ArtifactError
from scrom.linalg import BasisKind, ReducedBasis
from scrom.models import REPORT_COLUMNS, BasisAudit, RunMetadata, RunReport

SNAPSHOT_MAGIC = b"ROMSNAP1"
_HEADER_SIZE = len(SNAPSHOT_MAGIC) + 16

PathLike = Union[str, Path]


def write_snapshots(path: PathLike, X: np.ndarray) -> None:
    """Magic, little-endian u64 rows and cols, then float64 values column by column."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ArtifactError(f"snapshot matrix must be 2-D, got shape {X.shape}")
    header = SNAPSHOT_MAGIC + np.array(X.shape, dtype="<u8").tobytes()
    Path(path).write_bytes(header + X.astype("<f8").tobytes(order="F"))


def read_snapshots(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER_SIZE or data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise ArtifactError(f"{path} is not a snapshot file")
    rows, cols = (int(n) for n in np.frombuffer(data, dtype="<u8", count=2, offset=len(SNAPSHOT_MAGIC)))
    expected = _HEADER_SIZE + 8 * rows * cols
    if len(data) != expected:
        raise ArtifactError(f"{path} holds {len(data)} bytes, expected {expected} for a {rows}x{cols} matrix")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER_SIZE)
    return values.reshape((rows, cols), order="F").astype(float)


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_report(path: PathLike, report: RunReport) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for k in range(report.n_rows):
            writer.writerow([_format(report.column(name)[k]) for name in REPORT_COLUMNS])


def read_report(path: PathLike) -> RunReport:
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise ArtifactError(f"{path} does not start with the report header {','.join(REPORT_COLUMNS)}")
    columns = {name: [] for name in REPORT_COLUMNS}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(REPORT_COLUMNS):
            raise ArtifactError(f"{path}:{line_no}: expected {len(REPORT_COLUMNS)} fields, got {len(row)}")
        for name, cell in zip(REPORT_COLUMNS, row):
            try:
                columns[name].append(float(cell) if cell else None)
            except ValueError as exc:
                raise ArtifactError(f"{path}:{line_no}: bad value {cell!r} in column {name}") from exc
    if any(t is None for t in columns["t"]):
        raise ArtifactError(f"{path}: the t column may not have empty fields")
    return RunReport(**columns)


def metadata_path(report_path: PathLike) -> Path:
    report_path = Path(report_path)
    return report_path.with_name(report_path.name + ".meta.json")


def write_metadata(report_path: PathLike, metadata: RunMetadata) -> Path:
    path = metadata_path(report_path)
    path.write_text(json.dumps(metadata.model_dump(), indent=2, sort_keys=True) + "\n")
    return path


@dataclass(frozen=True, eq=False)
class RomArtifact:
    """Everything ``rom-run`` and ``verify`` need from ``build-basis``."""

    problem: str
    basis: ReducedBasis
    C: np.ndarray
    audit: BasisAudit
    q1m: Optional[np.ndarray] = None
    q2m: Optional[np.ndarray] = None
    r1m: Optional[np.ndarray] = None


def save_artifact(path: PathLike, artifact: RomArtifact) -> None:
    arrays = {
        "problem": np.array(artifact.problem),
        "kind": np.array(artifact.basis.kind.value),
        "basis": artifact.basis.matrix,
        "n_constraint_modes": np.array(artifact.basis.n_constraint_modes),
        "C": artifact.C,
        "audit": np.array(artifact.audit.model_dump_json()),
    }
    if artifact.basis.weights is not None:
        arrays["weights"] = artifact.basis.weights
    if artifact.basis.singular_values is not None:
        arrays["singular_values"] = artifact.basis.singular_values
    for name in ("q1m", "q2m", "r1m"):
        value = getattr(artifact, name)
        if value is not None:
            arrays[name] = value
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_artifact(path: PathLike) -> RomArtifact:
    try:
        with np.load(path, allow_pickle=False) as data:
            stored = {name: data[name] for name in data.files}
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read ROM artifact {path}: {exc}") from exc
    missing = {"problem", "kind", "basis", "C", "audit", "n_constraint_modes"} - set(stored)
    if missing:
        raise ArtifactError(f"ROM artifact {path} lacks {sorted(missing)}")
    basis = ReducedBasis(
        matrix=stored["basis"],
        kind=BasisKind(str(stored["kind"])),
        weights=stored.get("weights"),
        singular_values=stored.get("singular_values"),
        n_constraint_modes=int(stored["n_constraint_modes"]),
    )
    return RomArtifact(
        problem=str(stored["problem"]),
        basis=basis,
        C=stored["C"],
        audit=BasisAudit.model_validate_json(str(stored["audit"])),
        q1m=stored.get("q1m"),
        q2m=stored.get("q2m"),
        r1m=stored.get("r1m"),
    )
