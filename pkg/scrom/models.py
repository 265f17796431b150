import hashlib
import json
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict
from pydantic import Field as PydanticField
from sqlmodel import Field, SQLModel

from scrom.timeint import IntegratorConfig

REPORT_COLUMNS = ("t", "subdom_res_max", "kinetic_energy", "mass_res_max", "state_err_l2")
BURGERS_PRESETS = ("constant", "gaussian", "sine")
NS_PRESETS = ("taylor_green", "random_modes")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(StrictModel):
    n_cells: Optional[int] = PydanticField(default=None, ge=2, description="Cells of the 1-D mesh")
    length: float = PydanticField(default=1.0, gt=0.0, description="Length of the 1-D domain")
    nx: Optional[int] = PydanticField(default=None, ge=3, description="Pressure cells in x")
    ny: Optional[int] = PydanticField(default=None, ge=3, description="Pressure cells in y")
    lx: float = PydanticField(default=1.0, gt=0.0)
    ly: float = PydanticField(default=1.0, gt=0.0)


class ForceConfig(StrictModel):
    kind: Literal["none", "sinusoidal"] = "none"
    amplitude: float = 0.0
    wavenumber: int = PydanticField(default=1, ge=1)


class InitialConditionConfig(StrictModel):
    preset: Literal["constant", "gaussian", "sine", "taylor_green", "random_modes"]
    amplitude: float = 1.0
    offset: float = 0.0
    center: float = 0.5
    width: float = PydanticField(default=0.1, gt=0.0)
    wavenumber: int = PydanticField(default=1, ge=1)
    n_modes: int = PydanticField(default=4, ge=1)
    coefficients: List[float] = PydanticField(
        default_factory=list, description="Sine-series coefficients; replaces amplitude/wavenumber"
    )


class TimeConfig(StrictModel):
    dt: float = PydanticField(gt=0.0)
    t_end: float = PydanticField(ge=0.0)
    method: Literal["rk4", "implicit_midpoint"] = "implicit_midpoint"
    snapshot_stride: int = PydanticField(default=1, ge=1)
    newton_tol: float = PydanticField(default=1e-12, gt=0.0)
    newton_max_iter: int = PydanticField(default=50, ge=1)
    jacobian: Literal["finite_difference", "fixed_point"] = "finite_difference"

    def integrator(self, jacobian: Optional[str] = None) -> IntegratorConfig:
        return IntegratorConfig(
            dt=self.dt,
            t_end=self.t_end,
            method=self.method,
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
            jacobian=jacobian or self.jacobian,
        )


class SubdomainConfig(StrictModel):
    """Cell set of a 1-D subdomain: explicit cells plus half-open ranges."""

    cells: List[int] = PydanticField(default_factory=list)
    ranges: List[Tuple[int, int]] = PydanticField(default_factory=list)

    def indices(self) -> List[int]:
        out = list(self.cells)
        for start, stop in self.ranges:
            out.extend(range(start, stop))
        return out


class BlockConfig(StrictModel):
    """Half-open (start, stop) index ranges in x and y."""

    i: Tuple[int, int]
    j: Tuple[int, int]


class NsSubdomainConfig(StrictModel):
    u: List[int] = PydanticField(default_factory=list)
    v: List[int] = PydanticField(default_factory=list)
    u_block: Optional[BlockConfig] = None
    v_block: Optional[BlockConfig] = None

    def component_indices(self, ny: int) -> Dict[str, List[int]]:
        out = {}
        for name, cells, block in (("u", self.u, self.u_block), ("v", self.v, self.v_block)):
            indices = list(cells)
            if block is not None:
                indices.extend(i * ny + j for i in range(*block.i) for j in range(*block.j))
            out[name] = indices
        return out


class RomConfig(StrictModel):
    kind: Literal["pod", "novel", "carlberg"]
    p: Optional[int] = PydanticField(default=None, ge=1, description="POD size (burgers1d pod/carlberg)")
    q: Optional[int] = PydanticField(default=None, ge=1, description="Constrained basis size (burgers1d novel)")
    r_v: Optional[int] = PydanticField(default=None, ge=1, description="Velocity basis size (ns2d)")
    energy: Optional[float] = PydanticField(default=None, gt=0.0, le=1.0)
    invariant: List[int] = PydanticField(
        default_factory=list, description="Constraint columns frozen as invariants"
    )


class ToleranceConfig(StrictModel):
    rank_tol: float = PydanticField(default=1e-10, gt=0.0)
    feasibility_tol: float = PydanticField(default=1e-10, gt=0.0)
    split_atol: float = PydanticField(default=1e-12, gt=0.0)


class ThresholdConfig(StrictModel):
    """Limits applied by ``compare``, keyed by report column."""

    max_abs_diff: Dict[str, float] = PydanticField(default_factory=dict)
    min_log10_ratio: Dict[str, float] = PydanticField(default_factory=dict)


class ScenarioConfig(StrictModel):
    name: str = "scenario"
    problem: Literal["burgers1d", "ns2d"]
    grid: GridConfig
    viscosity: float = PydanticField(default=0.0, ge=0.0)
    force: ForceConfig = PydanticField(default_factory=ForceConfig)
    initial_condition: InitialConditionConfig
    time: TimeConfig
    subdomains: List[SubdomainConfig] = PydanticField(default_factory=list)
    momentum_subdomains: List[NsSubdomainConfig] = PydanticField(default_factory=list)
    rom: RomConfig
    tolerances: ToleranceConfig = PydanticField(default_factory=ToleranceConfig)
    thresholds: ThresholdConfig = PydanticField(default_factory=ThresholdConfig)
    output_dir: str = "out"
    seed: int = PydanticField(default=0, ge=0, lt=2**64)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


class BatchConfig(StrictModel):
    scenarios: List[ScenarioConfig]


# Validation response models
class FieldError(BaseModel):
    field: str
    message: str
    value: Any = None


class ValidationResult(BaseModel):
    valid: bool
    errors: List[FieldError] = []


class BasisAudit(BaseModel):
    kind: str
    problem: str
    n_rows: int
    dim: int
    n_constraint_modes: int = 0
    constraint_rank: int = 0
    rank_tol: float
    orthonormality: float
    constraint_inclusion: Optional[float] = None
    r1: Optional[int] = None
    r2: Optional[int] = None
    divergence_max: Optional[float] = None
    pressure_coupling_max: Optional[float] = None
    constraint_divergence_max: Optional[float] = None
    feasible: Optional[bool] = None
    n_frozen: int = 0


class RunMetadata(BaseModel):
    scenario: str
    command: str
    config_hash: str
    package_version: str
    numpy_version: str
    scipy_version: str
    wall_time_s: float


class RunReport(BaseModel):
    """Diagnostic time series, one entry per output step; None is an absent value."""

    t: List[float]
    subdom_res_max: List[Optional[float]]
    kinetic_energy: List[Optional[float]]
    mass_res_max: List[Optional[float]]
    state_err_l2: List[Optional[float]]

    def column(self, name: str) -> List[Optional[float]]:
        if name not in REPORT_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    @property
    def n_rows(self) -> int:
        return len(self.t)


class RunRecordBase(SQLModel):
    scenario: str = Field(index=True, description="Scenario name")
    command: str = Field(description="Pipeline command, e.g. fom-run")
    status: str = Field(default="ok", description="ok or failed")
    config_hash: str = Field(description="SHA-256 of the canonical scenario JSON")
    package_version: str
    numpy_version: str
    scipy_version: str
    wall_time_s: float = Field(default=0.0)
    output_path: Optional[str] = Field(default=None, description="Main file written by the command")


class RunRecord(RunRecordBase, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    created_at: datetime = Field(default_factory=datetime.utcnow)
