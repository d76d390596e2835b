"""
Run configuration
=================
Resolution order, later wins:

    model defaults  <  --config file  <  LMREC_ENDPOINT / LMREC_API_KEY  <  command-line flags

The config file is flat key-value text read with python-dotenv; dotted keys
address nested sections (`dataset.min_pos = 21`), lists are comma-separated.
A top-level `seed` is copied into `dataset.seed` and `bpr.seed` unless those
are set explicitly. The resolved config is written back in the same format,
credentials redacted, next to every command's outputs.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel

from app.errors import ConfigError
from models.run_models import RunConfig

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "LMREC_ENDPOINT"
ENV_API_KEY = "LMREC_API_KEY"
RUN_CONFIG_FILE = "run_config.txt"
REDACTED = "***"

_SECRET_KEYS = {"remote.api_key"}
_SEEDED_SECTIONS = ("dataset", "bpr")


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False, encoding="utf-8")
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"{path}: keys without a value: {missing}")
    return dict(values)


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    overrides = {}
    if environ.get(ENV_ENDPOINT):
        overrides["remote.endpoint"] = environ[ENV_ENDPOINT]
    if environ.get(ENV_API_KEY):
        overrides["remote.api_key"] = environ[ENV_API_KEY]
    return overrides


def _check_key(key: str) -> None:
    section, _, option = key.partition(".")
    fields = RunConfig.model_fields
    if section not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    annotation = fields[section].annotation
    is_section = isinstance(annotation, type) and issubclass(annotation, BaseModel)
    if is_section != bool(option):
        raise ConfigError(f"config key {key!r} must {'name an option of' if is_section else 'not nest under'} {section!r}")
    if option and option not in annotation.model_fields:
        raise ConfigError(f"unknown config key {key!r}")


def nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for key, value in flat.items():
        _check_key(key)
        section, _, option = key.partition(".")
        if option:
            tree.setdefault(section, {})[option] = value
        else:
            tree[key] = value
    return tree


def resolve_run_config(
    config_path: Optional[Union[str, Path]] = None,
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge every source into a validated RunConfig; None-valued flags are ignored."""
    flat: Dict[str, Any] = {}
    if config_path is not None:
        flat.update(read_config_file(config_path))
    flat.update(environment_overrides(environ))
    flat.update({k: v for k, v in (flags or {}).items() if v is not None})

    if "seed" in flat:
        for section in _SEEDED_SECTIONS:
            flat.setdefault(f"{section}.seed", flat["seed"])
    cfg = RunConfig.model_validate(nest(flat))
    logger.debug(f"[config] resolved scorer={cfg.scorer.value} template={cfg.template} seed={cfg.seed}")
    return cfg


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join("all" if v is None else str(v) for v in value)
    if isinstance(value, bool):
        return str(value).lower()
    return str(value)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def flatten(cfg: RunConfig, redact: bool = True) -> Dict[str, str]:
    flat: Dict[str, str] = {}
    for key, value in cfg.model_dump(mode="json").items():
        items = value.items() if isinstance(value, dict) else [(None, value)]
        for option, option_value in items:
            name = f"{key}.{option}" if option else key
            if option_value is None:
                continue
            if redact and name in _SECRET_KEYS:
                flat[name] = REDACTED
            else:
                flat[name] = _format(option_value)
    return flat


def dump_run_config(cfg: RunConfig, redact: bool = True) -> str:
    return "".join(f"{key}={_quote(value)}\n" for key, value in flatten(cfg, redact).items())


def write_run_config(cfg: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> Path:
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RUN_CONFIG_FILE
    path.write_text(dump_run_config(cfg), encoding="utf-8")
    return path


def require_inputs(cfg: RunConfig, *fields: str) -> None:
    """Every named path field is set and points at an existing file."""
    for name in fields:
        path = getattr(cfg, name)
        if path is None:
            raise ConfigError(f"{name} is not set (use --{name.replace('_', '-')} or the config file)")
        if not Path(path).is_file():
            raise ConfigError(f"input file not found: {path}")
