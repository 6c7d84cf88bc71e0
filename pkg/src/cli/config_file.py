"""
Run-configuration files.

Format: ``key = value`` lines with optional ``[section]`` headers and ``#`` /
``;`` comments. Keys are globally unique, so a key may also appear before any
header and ``--set key=value`` overrides need no section::

    [episode]
    way = 5
    shot = 1

    [dcl]
    scheme = NonlinearLogistic
"""

import configparser
import hashlib
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from pydantic import ValidationError

from src.data.domain import DomainConfig
from src.pipeline.schemas import (
    AdaptConfig,
    EpisodeConfig,
    ExperimentConfig,
    ModelConfig,
    PretrainConfig,
    RunConfig,
)
from src.utils.errors import ConfigError

_ROOT = "__root__"

DCL_KEYS = (
    "lambda_dcl",
    "scheme",
    "logistic_k",
    "logistic_x0",
    "lambda_n_mode",
    "dcl_mode",
    "top_k",
    "sigma",
)

# Set per episode by the runner
_DERIVED_KEYS = ("seed",)

LIST_KEYS = ("hidden_dims",)


def _fields(model: type, exclude: Iterable[str] = ()) -> List[str]:
    return [name for name in model.model_fields if name not in exclude]


# file section -> (ExperimentConfig member, keys)
SECTIONS: Dict[str, Tuple[str, List[str]]] = {
    "domain": ("domain", _fields(DomainConfig)),
    "episode": ("episode", _fields(EpisodeConfig)),
    "model": ("model", _fields(ModelConfig)),
    "pretrain": ("pretrain", _fields(PretrainConfig)),
    "adapt": ("adapt", _fields(AdaptConfig, exclude=DCL_KEYS + _DERIVED_KEYS)),
    "dcl": ("adapt", list(DCL_KEYS)),
    "run": ("run", _fields(RunConfig)),
}

KEY_SECTION: Dict[str, str] = {
    key: section for section, (_, keys) in SECTIONS.items() for key in keys
}


def _parse_value(key: str, raw: str) -> object:
    raw = raw.strip()
    if key in LIST_KEYS:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return parts
    return raw


def _check_key(key: str, section: Optional[str], where: str) -> None:
    if key not in KEY_SECTION:
        raise ConfigError(f"Unknown key '{key}' {where}")
    if section is not None and section != _ROOT and KEY_SECTION[key] != section:
        raise ConfigError(
            f"Unknown key '{key}' in section [{section}] {where} "
            f"(it belongs to [{KEY_SECTION[key]}])"
        )


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse config text into a flat key -> raw value mapping.

    Raises:
        ConfigError: On syntax errors (with line number), unknown sections or keys
    """
    parser = configparser.ConfigParser(
        delimiters=("=",),
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#", ";"),
        interpolation=None,
        strict=True,
        default_section="__defaults__",
    )
    parser.optionxform = str  # keep key case
    # Header line so keys before any section parse; shift reported lines back
    try:
        parser.read_string(f"[{_ROOT}]\n{text}", source=source)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"{source}: line {e.lineno - 1}: duplicate key '{e.option}'") from e
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"{source}: line {e.lineno - 1}: duplicate section [{e.section}]") from e
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"{source}: line {lineno - 1}: cannot parse {line.strip()!r}") from e

    values: Dict[str, str] = {}
    for section in parser.sections():
        if section != _ROOT and section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            _check_key(key, section, f"in {source}")
            if key in values:
                raise ConfigError(f"{source}: key '{key}' given twice")
            values[key] = raw
    return values


def parse_overrides(overrides: Iterable[str]) -> Dict[str, str]:
    """``["key=value", ...]`` -> mapping; later entries win."""
    values: Dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        _check_key(key, None, "in --set")
        values[key] = raw.strip()
    return values


def _loc_key(loc: Tuple[object, ...]) -> str:
    names = [str(part) for part in loc if isinstance(part, str)]
    return names[-1] if names else ""


def build_config(values: Dict[str, str]) -> ExperimentConfig:
    """
    Validate a flat key mapping into an ExperimentConfig.

    Raises:
        ConfigError: Naming the offending key when a value is malformed
    """
    nested: Dict[str, Dict[str, object]] = {}
    for key, raw in values.items():
        member = SECTIONS[KEY_SECTION[key]][0]
        nested.setdefault(member, {})[key] = _parse_value(key, raw)

    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        first = e.errors()[0]
        key = _loc_key(first["loc"])
        if key:
            raise ConfigError(
                f"Invalid value for '{key}': {values.get(key)!r} ({first['msg']})"
            ) from e
        raise ConfigError(f"Invalid configuration: {first['msg']}") from e


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()
) -> ExperimentConfig:
    """
    Read a config file (optional), apply ``key=value`` overrides, validate.

    Raises:
        ConfigError: On unreadable files, syntax errors, unknown keys or bad values
    """
    values: Dict[str, str] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        values.update(parse_config_text(text, source=str(path)))
    values.update(parse_overrides(overrides))
    return build_config(values)


def _format_value(value: object) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(config: ExperimentConfig) -> str:
    """Canonical text form; ``load_config`` of it yields an equal config."""
    lines: List[str] = []
    for section, (member, keys) in SECTIONS.items():
        part = getattr(config, member)
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format_value(getattr(part, key))}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the rendered configuration."""
    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()
