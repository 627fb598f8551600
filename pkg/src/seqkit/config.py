"""
Configuration management for seqkit.

Runtime settings load from TOML/YAML files or environment variables; model
configuration files (JSON, TOML or YAML) load into ``ModelConfig``.
"""

import json
import os
import sys
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, ValidationError

from seqkit.errors import ConfigError
from seqkit.models import ModelConfig, get_preset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class RuntimeConfig(BaseModel):
    """Execution settings shared by every command."""

    # Worker threads for per-image work (None = all cores)
    threads: int | None = Field(default=None, ge=1)
    # Working precision for forward/analysis/training; gradient checks always use float64
    dtype: Literal["float32", "float64"] = "float32"
    # Global seed for parameter init and random:n image sources
    seed: int = 0


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = "INFO"
    format: str = "%(asctime)s | %(levelname)-8s | %(message)s"
    # Log to file as well
    log_file: str | None = None


class SeqkitConfig(BaseModel):
    """Main settings model for seqkit."""

    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


def load_settings(config_path: str | Path | None = None) -> SeqkitConfig:
    """
    Load settings from file or create default.

    Priority:
    1. Explicit config path
    2. ./seqkit.toml or ./seqkit.yaml
    3. ~/.config/seqkit/config.toml or config.yaml
    4. Environment variables (applied on top of whichever file was found)
    5. Defaults

    Args:
        config_path: Optional explicit path to settings file

    Returns:
        SeqkitConfig instance
    """
    config_data: dict[str, Any] = {}

    search_paths: list[Path] = []

    if config_path:
        search_paths.append(Path(config_path))
    else:
        search_paths.extend([Path("seqkit.toml"), Path("seqkit.yaml"), Path("seqkit.yml")])
        config_home = Path(os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config"))
        search_paths.extend(
            [
                config_home / "seqkit" / "config.toml",
                config_home / "seqkit" / "config.yaml",
                config_home / "seqkit" / "config.yml",
            ]
        )

    for path in search_paths:
        if path.exists():
            config_data = _load_file(path)
            break

    config_data = _apply_env_overrides(config_data)

    try:
        return SeqkitConfig(**config_data)
    except ValidationError as e:
        raise ConfigError(f"Invalid settings: {e}") from e


def _load_file(path: Path) -> dict[str, Any]:
    """Load a mapping from a JSON, TOML or YAML file."""
    content = path.read_text(encoding="utf-8")

    if path.suffix == ".toml":
        return tomllib.loads(content)
    elif path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(content) or {}
    elif path.suffix == ".json":
        data = json.loads(content)
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        return data
    else:
        raise ConfigError(f"Unsupported config file format: {path.suffix}")


def _apply_env_overrides(config: dict[str, Any]) -> dict[str, Any]:
    """Apply environment variable overrides to settings."""
    env_mapping = {
        "SEQKIT_THREADS": ("runtime", "threads"),
        "SEQKIT_DTYPE": ("runtime", "dtype"),
        "SEQKIT_SEED": ("runtime", "seed"),
        "SEQKIT_LOG_LEVEL": ("logging", "level"),
    }

    for env_var, path in env_mapping.items():
        value = os.environ.get(env_var)
        if value is not None and value != "":
            _set_nested(config, path, value)

    return config


def _set_nested(d: dict[str, Any], path: tuple[str, ...], value: Any) -> None:
    """Set a nested dictionary value."""
    for key in path[:-1]:
        d = d.setdefault(key, {})

    if path[-1] in ("threads", "seed"):
        try:
            value = int(value)
        except ValueError as e:
            raise ConfigError(f"{path[-1]} must be an integer, got {value!r}") from e

    d[path[-1]] = value


def resolve_threads(cli_threads: int | None, settings: SeqkitConfig) -> int:
    """Thread budget: explicit flag, then settings/env, then every core."""
    if cli_threads is not None:
        if cli_threads < 1:
            raise ConfigError("--threads must be >= 1")
        return cli_threads
    if settings.runtime.threads is not None:
        return settings.runtime.threads
    return os.cpu_count() or 1


# Option names accepted in a model config file, mapped onto ModelConfig fields
_OPTION_FIELDS = {"merge", "direction", "active", "cell_kind", "use_fusion", "hidden_ratio"}
_MODEL_FIELDS = {"use_pe": "use_positional_embedding", "drop_path": "drop_path"}


def model_config_from_mapping(data: dict[str, Any]) -> ModelConfig:
    """
    Build a ModelConfig from the model config file layout.

    The mapping holds either ``preset`` or ``stages`` (never both), an optional
    ``num_classes`` and an optional ``options`` block with
    ``merge``/``direction``/``active``/``cell_kind``/``use_fusion``/
    ``hidden_ratio``/``use_pe``/``drop_path``.
    """
    data = dict(data)
    options = dict(data.pop("options", None) or {})
    preset = data.pop("preset", None)

    if preset is not None and "stages" in data:
        raise ConfigError("Model config may name a preset or list stages, not both")

    unknown = set(options) - _OPTION_FIELDS - set(_MODEL_FIELDS)
    if unknown:
        raise ConfigError(f"Unknown model options: {', '.join(sorted(unknown))}")

    mixer_overrides = {k: v for k, v in options.items() if k in _OPTION_FIELDS}
    model_overrides = {_MODEL_FIELDS[k]: v for k, v in options.items() if k in _MODEL_FIELDS}

    try:
        if preset is not None:
            cfg = get_preset(str(preset))
            if data:
                cfg = cfg.model_copy(update=data)
                cfg = ModelConfig.model_validate(cfg.model_dump())
        else:
            if "stages" not in data:
                raise ConfigError("Model config needs either 'preset' or 'stages'")
            cfg = ModelConfig.model_validate(data)
        return cfg.with_overrides(options=mixer_overrides, **model_overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid model config: {e}") from e


def load_model_config(path: str | Path) -> ModelConfig:
    """Load a model config file (JSON, TOML or YAML)."""
    return model_config_from_mapping(_load_file(Path(path)))
