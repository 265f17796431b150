import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import ValidationError as PydanticValidationError

from scrom.errors import ConfigError
from scrom.models import FieldError, ScenarioConfig
from scrom.validation import ScenarioValidator

logger = logging.getLogger(__name__)


class ScenarioImporter:
    """Parses scenario and batch files (YAML or JSON) into validated configs."""

    def __init__(self):
        self.validator = ScenarioValidator()

    def load(
        self,
        path: Union[str, Path],
        out: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> List[ScenarioConfig]:
        path = Path(path)
        try:
            content = path.read_text()
        except OSError as exc:
            raise ConfigError([FieldError(field="--config", message=str(exc), value=str(path))], str(path)) from exc
        return self.import_config(content, source=str(path), out=out, seed=seed)

    def import_config(
        self,
        content: str,
        config_format: str = "auto",
        source: Optional[str] = None,
        out: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> List[ScenarioConfig]:
        """Return one config per scenario; a plain scenario file gives a list of one.

        ``out`` and ``seed`` override the file values. In a batch each
        scenario writes below ``<out>/<name>``.
        """
        if config_format == "auto":
            config_format = self._detect_format(content)
        try:
            data = yaml.safe_load(content) if config_format == "yaml" else json.loads(content)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError([FieldError(field="<file>", message=f"Cannot parse {config_format}: {exc}")], source) from exc
        if not isinstance(data, dict):
            raise ConfigError([FieldError(field="<file>", message="Top level must be a mapping")], source)

        if "scenarios" in data:
            entries = data["scenarios"]
            extra = sorted(set(data) - {"scenarios"})
            if extra:
                raise ConfigError(
                    [FieldError(field=key, message="Extra inputs are not permitted") for key in extra], source
                )
            if not isinstance(entries, list) or not entries:
                raise ConfigError([FieldError(field="scenarios", message="Must be a nonempty list")], source)
            prefixes = [f"scenarios[{k}]." for k in range(len(entries))]
            batch = True
        else:
            entries, prefixes, batch = [data], [""], False

        configs, errors = [], []
        for k, (entry, prefix) in enumerate(zip(entries, prefixes)):
            entry = self._apply_overrides(entry, out, seed, batch, k)
            try:
                cfg = ScenarioConfig.model_validate(entry)
            except PydanticValidationError as exc:
                errors.extend(ScenarioValidator.from_pydantic(exc, prefix))
                continue
            result = self.validator.validate(cfg)
            for error in result.errors:
                errors.append(error.model_copy(update={"field": prefix + error.field}))
            configs.append(cfg)

        names = [cfg.name for cfg in configs]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if batch and duplicates:
            errors.append(FieldError(field="scenarios", message="Scenario names must be unique", value=duplicates))
        if errors:
            raise ConfigError(errors, source)
        logger.info("loaded %d scenario(s) from %s", len(configs), source or "<string>")
        return configs

    def _apply_overrides(
        self, entry: Any, out: Optional[str], seed: Optional[int], batch: bool, index: int
    ) -> Any:
        if not isinstance(entry, dict):
            return entry
        entry: Dict[str, Any] = dict(entry)
        if batch:
            entry.setdefault("name", f"scenario_{index}")
            base = out if out is not None else entry.get("output_dir", "out")
            if out is not None or "output_dir" not in entry:
                entry["output_dir"] = str(Path(base) / entry["name"])
        elif out is not None:
            entry["output_dir"] = out
        if seed is not None:
            entry["seed"] = seed
        return entry

    def _detect_format(self, content: str) -> str:
        """Detect if content is YAML or JSON."""
        content = content.strip()

        if content.startswith("{"):
            return "json"
        else:
            return "yaml"
