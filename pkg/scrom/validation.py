from typing import Any, List, Optional

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from scrom.linalg import numerical_rank, svd
from scrom.models import (
    BURGERS_PRESETS,
    NS_PRESETS,
    REPORT_COLUMNS,
    FieldError,
    ScenarioConfig,
    ValidationResult,
)
from scrom.problems import constraint_matrix


class ScenarioValidator:
    """Cross-field checks on a parsed scenario.

    Field-level constraints (types, ranges, unknown keys) are already enforced
    by the pydantic models; this pass collects every inconsistency between
    fields so a user sees all of them at once.
    """

    def validate(self, cfg: ScenarioConfig) -> ValidationResult:
        errors: List[FieldError] = []
        if cfg.problem == "burgers1d":
            errors.extend(self._validate_burgers(cfg))
        else:
            errors.extend(self._validate_ns(cfg))
        errors.extend(self._validate_time(cfg))
        errors.extend(self._validate_thresholds(cfg))
        if not errors:
            errors.extend(self._validate_rom_sizes(cfg))
        return ValidationResult(valid=len(errors) == 0, errors=errors)

    def _validate_burgers(self, cfg: ScenarioConfig) -> List[FieldError]:
        errors = []
        grid = cfg.grid
        if grid.n_cells is None:
            errors.append(FieldError(field="grid.n_cells", message="Field is required for burgers1d"))
        for name in ("nx", "ny"):
            if getattr(grid, name) is not None:
                errors.append(
                    FieldError(field=f"grid.{name}", message="Not used by burgers1d", value=getattr(grid, name))
                )
        if cfg.momentum_subdomains:
            errors.append(FieldError(field="momentum_subdomains", message="Not used by burgers1d; use subdomains"))
        if cfg.initial_condition.preset not in BURGERS_PRESETS:
            errors.append(
                FieldError(
                    field="initial_condition.preset",
                    message=f"Value must be one of: {', '.join(BURGERS_PRESETS)}",
                    value=cfg.initial_condition.preset,
                )
            )
        if cfg.rom.r_v is not None:
            errors.append(FieldError(field="rom.r_v", message="Not used by burgers1d", value=cfg.rom.r_v))

        if grid.n_cells is not None:
            for k, subdomain in enumerate(cfg.subdomains):
                errors.extend(self._validate_index_set(f"subdomains[{k}]", subdomain.indices(), grid.n_cells))
                for start, stop in subdomain.ranges:
                    if start >= stop:
                        errors.append(
                            FieldError(
                                field=f"subdomains[{k}].ranges",
                                message="Range start must be below its stop",
                                value=[start, stop],
                            )
                        )

        rom = cfg.rom
        if rom.kind == "novel":
            if rom.p is not None:
                errors.append(FieldError(field="rom.p", message="Use rom.q for the novel ROM", value=rom.p))
            size = rom.q
        else:
            if rom.q is not None:
                errors.append(FieldError(field="rom.q", message=f"Use rom.p for the {rom.kind} ROM", value=rom.q))
            size = rom.p
        errors.extend(self._validate_size_choice(size, rom.energy, "rom.q" if rom.kind == "novel" else "rom.p"))
        if size is not None and grid.n_cells is not None and size > grid.n_cells:
            errors.append(
                FieldError(
                    field="rom.q" if rom.kind == "novel" else "rom.p",
                    message=f"Value must be no more than {grid.n_cells}",
                    value=size,
                )
            )

        if rom.invariant:
            if rom.kind != "novel":
                errors.append(
                    FieldError(field="rom.invariant", message="Invariant freezing needs the novel ROM", value=rom.invariant)
                )
            bad = [k for k in rom.invariant if k < 0 or k >= len(cfg.subdomains)]
            if bad:
                errors.append(
                    FieldError(
                        field="rom.invariant",
                        message=f"Indices must lie in [0, {len(cfg.subdomains)})",
                        value=bad,
                    )
                )
            if cfg.force.kind != "none" and cfg.force.amplitude != 0.0:
                errors.append(
                    FieldError(
                        field="rom.invariant",
                        message="Subdomain quantities are not invariant under a source term",
                        value=rom.invariant,
                    )
                )
        if rom.kind in ("novel", "carlberg") and not cfg.subdomains:
            errors.append(FieldError(field="subdomains", message=f"The {rom.kind} ROM needs at least one subdomain"))
        return errors

    def _validate_ns(self, cfg: ScenarioConfig) -> List[FieldError]:
        errors = []
        grid = cfg.grid
        for name in ("nx", "ny"):
            if getattr(grid, name) is None:
                errors.append(FieldError(field=f"grid.{name}", message="Field is required for ns2d"))
        if grid.n_cells is not None:
            errors.append(FieldError(field="grid.n_cells", message="Not used by ns2d", value=grid.n_cells))
        if cfg.subdomains:
            errors.append(FieldError(field="subdomains", message="Not used by ns2d; use momentum_subdomains"))
        if cfg.initial_condition.preset not in NS_PRESETS:
            errors.append(
                FieldError(
                    field="initial_condition.preset",
                    message=f"Value must be one of: {', '.join(NS_PRESETS)}",
                    value=cfg.initial_condition.preset,
                )
            )

        rom = cfg.rom
        for name in ("p", "q"):
            if getattr(rom, name) is not None:
                errors.append(FieldError(field=f"rom.{name}", message="Use rom.r_v for ns2d", value=getattr(rom, name)))
        if rom.invariant:
            errors.append(
                FieldError(field="rom.invariant", message="Invariant freezing is available for burgers1d only", value=rom.invariant)
            )
        errors.extend(self._validate_size_choice(rom.r_v, rom.energy, "rom.r_v"))

        if grid.nx is not None and grid.ny is not None:
            n_p = grid.nx * grid.ny
            if rom.r_v is not None and rom.r_v > 2 * n_p:
                errors.append(FieldError(field="rom.r_v", message=f"Value must be no more than {2 * n_p}", value=rom.r_v))
            for k, subdomain in enumerate(cfg.momentum_subdomains):
                block_errors = []
                for name, block in (("u_block", subdomain.u_block), ("v_block", subdomain.v_block)):
                    if block is None:
                        continue
                    for axis, (start, stop), limit in (("i", block.i, grid.nx), ("j", block.j, grid.ny)):
                        if not 0 <= start < stop <= limit:
                            block_errors.append(
                                FieldError(
                                    field=f"momentum_subdomains[{k}].{name}.{axis}",
                                    message=f"Range must satisfy 0 <= start < stop <= {limit}",
                                    value=[start, stop],
                                )
                            )
                errors.extend(block_errors)
                if block_errors:
                    continue
                indices = subdomain.component_indices(grid.ny)
                if not indices["u"] and not indices["v"]:
                    errors.append(
                        FieldError(field=f"momentum_subdomains[{k}]", message="Subdomain selects no velocity faces")
                    )
                for name in ("u", "v"):
                    errors.extend(
                        self._validate_index_set(f"momentum_subdomains[{k}].{name}", indices[name], n_p, allow_empty=True)
                    )
        if rom.kind in ("novel", "carlberg") and not cfg.momentum_subdomains:
            errors.append(
                FieldError(field="momentum_subdomains", message=f"The {rom.kind} ROM needs at least one subdomain")
            )
        return errors

    def _validate_time(self, cfg: ScenarioConfig) -> List[FieldError]:
        errors = []
        time = cfg.time
        n_steps = round(time.t_end / time.dt)
        if abs(n_steps * time.dt - time.t_end) > 1e-9 * max(1.0, time.t_end):
            errors.append(
                FieldError(field="time.t_end", message=f"Value must be a multiple of time.dt={time.dt}", value=time.t_end)
            )
        elif n_steps and n_steps % time.snapshot_stride:
            errors.append(
                FieldError(
                    field="time.snapshot_stride",
                    message=f"Value must divide the number of steps ({n_steps})",
                    value=time.snapshot_stride,
                )
            )
        return errors

    def _validate_thresholds(self, cfg: ScenarioConfig) -> List[FieldError]:
        errors = []
        for group in ("max_abs_diff", "min_log10_ratio"):
            for key in getattr(cfg.thresholds, group):
                if key not in REPORT_COLUMNS or key == "t":
                    errors.append(
                        FieldError(
                            field=f"thresholds.{group}.{key}",
                            message=f"Key must be a report column: {', '.join(REPORT_COLUMNS[1:])}",
                            value=key,
                        )
                    )
        return errors

    def _validate_rom_sizes(self, cfg: ScenarioConfig) -> List[FieldError]:
        """q (or R_V) must be at least rank(C); needs C, so runs last."""
        rom = cfg.rom
        if rom.kind != "novel":
            return []
        field, size = ("rom.q", rom.q) if cfg.problem == "burgers1d" else ("rom.r_v", rom.r_v)
        if size is None:
            return []
        C = constraint_matrix(cfg)
        if C.shape[1] == 0:
            return []
        weights = None
        if cfg.problem == "ns2d":
            area = (cfg.grid.lx / cfg.grid.nx) * (cfg.grid.ly / cfg.grid.ny)
            weights = np.full(C.shape[0], area)
        scaled = C if weights is None else C / np.sqrt(weights)[:, None]
        rank = numerical_rank(svd(scaled).s, cfg.tolerances.rank_tol)
        if size < rank:
            return [FieldError(field=field, message=f"Value must be at least rank(C)={rank}", value=size)]
        return []

    def _validate_size_choice(self, size: Optional[int], energy: Optional[float], field: str) -> List[FieldError]:
        if size is None and energy is None:
            return [FieldError(field=field, message="Give a basis size or rom.energy")]
        if size is not None and energy is not None:
            return [FieldError(field="rom.energy", message=f"Give either {field} or rom.energy, not both", value=energy)]
        return []

    def _validate_index_set(
        self, field: str, indices: List[int], n: int, allow_empty: bool = False
    ) -> List[FieldError]:
        errors = []
        if not indices and not allow_empty:
            errors.append(FieldError(field=field, message="Subdomain is empty"))
        bad = [j for j in indices if j < 0 or j >= n]
        if bad:
            errors.append(FieldError(field=field, message=f"Indices must lie in [0, {n})", value=bad))
        if len(set(indices)) != len(indices):
            errors.append(FieldError(field=field, message="Subdomain contains duplicate indices"))
        return errors

    @staticmethod
    def from_pydantic(exc: PydanticValidationError, prefix: str = "") -> List[FieldError]:
        """Map pydantic errors onto dotted field paths."""
        errors = []
        for item in exc.errors():
            path = ".".join(
                f"[{part}]" if isinstance(part, int) else str(part) for part in item["loc"]
            ).replace(".[", "[")
            errors.append(FieldError(field=prefix + path, message=item["msg"], value=_plain(item.get("input"))))
        return errors


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return repr(value)
