"""
Configuration management — environment settings plus layered run configs.

Environment variables (read from ``.env`` next to this file) only control
where runs are written and how many worker threads integration may use.
Everything else lives in the run config: a nested mapping assembled from a
preset, an optional YAML file and ``section.key=value`` overrides.
"""

import copy
import os
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from errors import ConfigParseError

# Always load .env from the directory containing this file (project root).
_env_path = Path(__file__).resolve().parent / ".env"
load_dotenv(dotenv_path=_env_path)


def _getenv(key: str, default: str = "") -> str:
    """Get env var and strip whitespace (stops trailing newline/space in .env from breaking values)."""
    return (os.getenv(key) or default).strip()


# ── Environment ─────────────────────────────────────────────────────────
OUTPUT_DIR: str = _getenv("NEURVEC_OUTPUT_DIR", "runs")
WORKERS: int = int(_getenv("NEURVEC_WORKERS", "1"))

# ── Run config sections ─────────────────────────────────────────────────
SECTIONS = ("dataset", "train", "simulate", "evaluate", "bench", "error_map", "inputs")

DEFAULT_SCALE = 0.01

# Keys each verb cannot run without.
REQUIRED_KEYS: dict[str, tuple[str, ...]] = {
    "generate": (
        "dataset.system", "dataset.count", "dataset.delta", "dataset.scheme",
        "dataset.duration", "dataset.eta", "dataset.seed",
    ),
    "train": ("inputs.dataset", "train.scheme", "train.k"),
    "simulate": ("inputs.reference", "simulate.scheme", "simulate.dt"),
    "evaluate": ("inputs.pred", "inputs.reference"),
    "bench": ("inputs.reference", "bench.scheme", "bench.fine_dt", "bench.coarse_dt"),
    "error-map": ("inputs.model",),
    "describe": ("inputs.file",),
    "replay": ("inputs.file",),
}


def empty_config() -> dict[str, dict[str, Any]]:
    return {section: {} for section in SECTIONS}


def deep_merge(base: dict, update: dict) -> dict:
    """Return a copy of ``base`` with ``update`` merged in (nested dicts merge, everything else replaces)."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config_file(path: str | os.PathLike) -> dict:
    """Parse a YAML run config.  Unknown top-level sections are rejected."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigParseError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"invalid YAML in {path}: {exc}") from exc

    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigParseError(
            f"{path}: unknown section(s) {', '.join(sorted(unknown))}; "
            f"expected {', '.join(SECTIONS)}"
        )
    return data


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """
    Apply ``section.key=value`` overrides.

    Values are parsed as YAML scalars, so ``train.epochs=50`` gives an int
    and ``train.normalize_targets=true`` a bool.
    """
    result = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigParseError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) < 2 or parts[0] not in SECTIONS:
            raise ConfigParseError(
                f"override key must start with one of {', '.join(SECTIONS)}: {dotted!r}"
            )
        try:
            value = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError as exc:
            raise ConfigParseError(f"cannot parse override value {raw!r}: {exc}") from exc
        node = result
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigParseError(f"override {dotted!r} descends into a non-mapping")
        node[parts[-1]] = value
    return result


def get_key(cfg: dict, dotted: str, default: Any = None) -> Any:
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def set_key(cfg: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def missing_keys(cfg: dict, verb: str) -> list[str]:
    """Return a list of required config keys that are absent for ``verb``."""
    return [key for key in REQUIRED_KEYS.get(verb, ()) if get_key(cfg, key) is None]


def dump_config(cfg: dict) -> str:
    """Canonical YAML rendering (sorted keys) used in manifests."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
