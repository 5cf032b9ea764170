"""
Settings loader

Layering: packaged defaults.yaml <- environments/<LGC_ENV>.yaml <- user file
<- CLI overrides. The merged mapping is validated against
config/settings_schema.json; errors carry the user-file line when known.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import yaml
from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match

from longitudinal_gc.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent / "config"
REPO_ROOT = Path(__file__).resolve().parent.parent
CONTRACT_PATH = REPO_ROOT / "DISCOVERY_CONTRACT.json"
ENV_VAR = "LGC_ENV"


# -----------------------------
# Schema + YAML helpers
# -----------------------------

@lru_cache(maxsize=None)
def load_schema(name: str) -> Dict[str, Any]:
    with open(CONFIG_DIR / name, "r", encoding="utf-8") as f:
        return json.load(f)


def _read_yaml(path: Path) -> Tuple[Dict[str, Any], Optional[yaml.Node]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"{path}: {exc.problem}", line=line) from exc
    if data is None:
        return {}, node
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping", line=1)
    return data, node


def _line_for(node: Optional[yaml.Node], path: Sequence[Any]) -> Optional[int]:
    """1-based line of the deepest key along `path` present in the composed YAML."""
    line = None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            match = next(((k, v) for k, v in node.value if k.value == str(key)), None)
            if match is None:
                break
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def validate_against(payload: Any, schema_name: str, node: Optional[yaml.Node] = None,
                     source: str = "") -> None:
    validator = Draft7Validator(load_schema(schema_name))
    error = best_match(validator.iter_errors(payload))
    if error is None:
        return
    where = ".".join(str(p) for p in error.absolute_path) or "<root>"
    prefix = f"{source}: " if source else ""
    raise ConfigError(f"{prefix}{where}: {error.message}", line=_line_for(node, list(error.absolute_path)))


def deep_merge(base: Mapping[str, Any], overlay: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in overlay.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_overrides(settings: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Dotted-key overrides (`forecaster.hidden_size`); None values are skipped."""
    out = copy.deepcopy(settings)
    for dotted, value in overrides.items():
        if value is None:
            continue
        cursor = out
        *parents, leaf = dotted.split(".")
        for part in parents:
            cursor = cursor.setdefault(part, {})
        cursor[leaf] = value
    return out


# -----------------------------
# Public API
# -----------------------------

def load_settings(path: Optional[Path | str] = None,
                  overrides: Optional[Mapping[str, Any]] = None,
                  env: Optional[str] = None) -> Dict[str, Any]:
    defaults, _ = _read_yaml(CONFIG_DIR / "defaults.yaml")
    settings = defaults

    env = env if env is not None else os.getenv(ENV_VAR)
    if env:
        env_path = CONFIG_DIR / "environments" / f"{env}.yaml"
        if not env_path.exists():
            raise ConfigError(f"Unknown environment {env!r} (set via {ENV_VAR})")
        overlay, _ = _read_yaml(env_path)
        settings = deep_merge(settings, overlay)

    node = None
    source = ""
    if path is not None:
        user, node = _read_yaml(Path(path))
        validate_against(user, "settings_schema.json", node=node, source=str(path))
        settings = deep_merge(settings, user)
        source = str(path)

    if overrides:
        settings = apply_overrides(settings, overrides)
    validate_against(settings, "settings_schema.json", node=node, source=source)
    return settings


def config_digest(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha3_256(canonical.encode("utf-8")).hexdigest()


def load_contract() -> Dict[str, Any]:
    with open(CONTRACT_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def contract_mismatches(settings: Mapping[str, Any]) -> Dict[str, Tuple[Any, Any]]:
    """Keys where `settings` deviates from the frozen reference settings."""
    reference = load_contract()["reference_settings"]
    mismatches = {}
    for section in ("forecaster", "detection", "postprocess"):
        for key, expected in reference[section].items():
            if key in settings.get(section, {}) and settings[section][key] != expected:
                mismatches[f"{section}.{key}"] = (settings[section][key], expected)
    return mismatches


def constant_mismatches(section: str, constants: Mapping[str, Any]) -> Dict[str, Tuple[Any, Any]]:
    """Built-in constants of `section` that deviate from the frozen reference settings."""
    reference = load_contract()["reference_settings"][section]
    return {
        f"{section}.{key}": (constants[key], expected)
        for key, expected in reference.items()
        if key in constants and constants[key] != expected
    }
