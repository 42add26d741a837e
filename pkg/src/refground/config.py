"""Pipeline configuration: strict TOML loading with typed defaults.

Unknown keys are rejected rather than ignored so a typo like
"temprature" fails loudly instead of silently running with defaults.
Range checks happen here, once, so downstream stages can trust the
config object.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from refground.backend import BackendConfig
from refground.core import STAGE_ORDER
from refground.evaluation import MATCHING_POLICIES
from refground.masks import DEFAULT_CONNECTIVITY, DEFAULT_MIN_COMPONENT_PIXELS
from refground.synthesis import DEFAULT_MAX_TARGETS

BACKEND_KINDS = ("mock", "live")


class ConfigError(Exception):
    """Invalid or unreadable configuration; maps to exit code 2."""


@dataclass(frozen=True)
class PipelineConfig:
    manifest: Path
    out_dir: Path
    backend: str = "mock"
    backend_config: BackendConfig | None = None
    lexicon_dir: Path | None = None
    seed: int = 7
    connectivity: int = DEFAULT_CONNECTIVITY
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS
    max_targets: int = DEFAULT_MAX_TARGETS
    queries_per_image: int = 2
    corruption_rate: float = 0.0
    mismatch_rate: float = 0.0
    ambiguous_rate: float = 0.0
    tau: float = 0.5
    matching_policy: str = "optimal"
    concurrency: int = 1
    stages: tuple[str, ...] = STAGE_ORDER

    def __post_init__(self) -> None:
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(f"backend must be one of {BACKEND_KINDS}")
        if self.backend == "live" and self.backend_config is None:
            raise ConfigError("live backend requires a [backend_config] table")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        if self.min_component_pixels < 1:
            raise ConfigError("min_component_pixels must be at least 1")
        if self.max_targets < 1:
            raise ConfigError("max_targets must be at least 1")
        if self.queries_per_image < 1:
            raise ConfigError("queries_per_image must be at least 1")
        for name in ("corruption_rate", "mismatch_rate", "ambiguous_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.corruption_rate + self.mismatch_rate + self.ambiguous_rate > 1.0:
            raise ConfigError("failure rates must sum to at most 1")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau out of range (must be strictly between 0 and 1)")
        if self.matching_policy not in MATCHING_POLICIES:
            raise ConfigError(f"matching_policy must be one of {MATCHING_POLICIES}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        prefix = tuple(self.stages)
        if not prefix or prefix != STAGE_ORDER[: len(prefix)]:
            raise ConfigError(
                f"stages must be a non-empty prefix of {list(STAGE_ORDER)}"
            )


_PATH_KEYS = ("manifest", "out_dir", "lexicon_dir")
_BACKEND_CONFIG_KEYS = {f.name for f in fields(BackendConfig)}
_TOP_LEVEL_KEYS = {f.name for f in fields(PipelineConfig)}

_INT_KEYS = (
    "seed",
    "connectivity",
    "min_component_pixels",
    "max_targets",
    "queries_per_image",
    "concurrency",
)
_FLOAT_KEYS = ("corruption_rate", "mismatch_rate", "ambiguous_rate", "tau")


def _require_type(key: str, value: Any, kind: type, label: str) -> None:
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{key} must be a {label}")


def parse_config(data: Mapping[str, Any], base_dir: Path) -> PipelineConfig:
    unknown = sorted(set(data) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    for required in ("manifest", "out_dir"):
        if required not in data:
            raise ConfigError(f"missing required key {required!r}")

    values: dict[str, Any] = {}
    for key in _PATH_KEYS:
        if key in data:
            _require_type(key, data[key], str, "string")
            values[key] = (base_dir / data[key]).resolve()
    for key in _INT_KEYS:
        if key in data:
            _require_type(key, data[key], int, "whole number")
            values[key] = data[key]
    for key in _FLOAT_KEYS:
        if key in data:
            value = data[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            values[key] = float(value)
    if "backend" in data:
        _require_type("backend", data["backend"], str, "string")
        values["backend"] = data["backend"]
    if "matching_policy" in data:
        _require_type("matching_policy", data["matching_policy"], str, "string")
        values["matching_policy"] = data["matching_policy"]
    if "stages" in data:
        stages = data["stages"]
        if not isinstance(stages, list) or not all(
            isinstance(s, str) for s in stages
        ):
            raise ConfigError("stages must be a list of stage names")
        values["stages"] = tuple(stages)
    if "backend_config" in data:
        table = data["backend_config"]
        if not isinstance(table, dict):
            raise ConfigError("backend_config must be a table")
        unknown = sorted(set(table) - _BACKEND_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown backend_config key {unknown[0]!r}")
        table = dict(table)
        if "transcript_path" in table:
            _require_type("transcript_path", table["transcript_path"], str, "string")
            table["transcript_path"] = (base_dir / table["transcript_path"]).resolve()
        try:
            values["backend_config"] = BackendConfig(**table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid backend_config: {exc}")
    return PipelineConfig(**values)


def validate_config(path: Path) -> PipelineConfig:
    """Load, type-check, range-check, and path-resolve a config file."""
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}")
    return parse_config(data, base_dir=path.parent)
