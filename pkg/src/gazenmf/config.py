"""Pipeline configuration: a flat TOML file whose keys mirror the CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .exceptions import ConfigError, RankOutOfRange
from .fixation import FixationParams
from .nmf import Algorithm, FactorizationOptions
from .patchgrid import StencilSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass
class PipelineConfig:
    recordings: list[str] = field(default_factory=list)
    stencil: tuple[int, int] = (251, 251)
    min_fixation_ms: int = 200
    dispersion_px: float = 25.0
    k: int = 8
    algorithm: str = "mu"
    max_iters: int = 100
    replicates: int = 3
    rel_tol: float = 1e-4
    seed: int = 0
    downscale: int = 1
    out_dir: str = "out"
    threads: int = 1
    boundary_margin: int = 1

    def validate(self, need_recordings: bool = True) -> "PipelineConfig":
        if need_recordings and not self.recordings:
            raise ConfigError("no recordings given")
        self.stencil_spec()
        self.fixation_params()
        self.factorization_options()
        if self.downscale < 1:
            raise ConfigError(f"downscale must be >= 1, got {self.downscale}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.boundary_margin < 0:
            raise ConfigError(f"boundary_margin must be >= 0, got {self.boundary_margin}")
        if self.k < 1:
            # rank errors keep their numerical exit code even when caught early
            raise RankOutOfRange(f"k={self.k} must be positive")
        return self

    def stencil_spec(self) -> StencilSpec:
        return StencilSpec(*self.stencil)

    def fixation_params(self) -> FixationParams:
        return FixationParams(self.dispersion_px, self.min_fixation_ms)

    def factorization_options(self) -> FactorizationOptions:
        try:
            algorithm = Algorithm(self.algorithm)
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.algorithm!r} (mu or hals)") from None
        return FactorizationOptions(
            k=self.k, max_iters=self.max_iters, rel_tol=self.rel_tol,
            replicates=self.replicates, seed=self.seed, algorithm=algorithm,
        )

    def updated(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """Copy with every non-``None`` override applied."""
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return from_mapping(data)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def from_mapping(data: Mapping[str, Any]) -> PipelineConfig:
    unknown = set(data) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {}
    try:
        for key, value in data.items():
            if key == "recordings":
                if isinstance(value, str):
                    raise ConfigError("recordings must be a list of paths")
                kw[key] = [str(v) for v in value]
            elif key == "stencil":
                if isinstance(value, int):
                    value = (value, value)
                if len(value) != 2:
                    raise ConfigError("stencil needs two values (width, height)")
                kw[key] = (int(value[0]), int(value[1]))
            elif key in ("dispersion_px", "rel_tol"):
                kw[key] = float(value)
            elif key in ("algorithm", "out_dir"):
                kw[key] = str(value)
            else:
                if isinstance(value, bool) or int(value) != value:
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
                kw[key] = int(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None
    return PipelineConfig(**kw)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = from_mapping(data)
    # relative recording paths resolve against the config file's directory
    cfg.recordings = [str((path.parent / p)) if not Path(p).is_absolute() else p for p in cfg.recordings]
    return cfg


def _toml_value(v: Any) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in asdict(cfg).items())
