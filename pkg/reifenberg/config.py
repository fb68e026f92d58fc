from __future__ import annotations

import hashlib
import json
from pathlib import Path
from threading import Lock
from typing import Any
from typing import Literal

import tomli
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import field_validator
from pydantic import model_validator
from pydantic_settings import BaseSettings
from pydantic_settings import SettingsConfigDict

from reifenberg.errors import ConfigurationError


class BaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()


class GeometryConfig(BaseConfig):
    boundary_sample_spacing: float = Field(
        default=1 / 64,
        gt=0,
        le=0.25,
        description="Boundary sampling spacing as a fraction of the query radius",
    )
    knn: int = Field(default=8, ge=1, description="Candidate simplices per nearest-simplex query")
    exhaustive_below: int = Field(
        default=32,
        ge=0,
        description="Meshes with fewer simplices are scanned exhaustively",
    )


class DomainSettings(BaseConfig):
    """Which base domain the single-stage commands operate on."""

    kind: Literal["half_space", "ball", "snowflake"] = Field(default="snowflake")
    radius: float = Field(default=1.0, gt=0, description="Radius of the ball domain")


class WhitneySettings(BaseConfig):
    K: float = Field(default=4.0, ge=4, description="Dilation of the standalone decomposition")
    max_level: int = Field(default=24, ge=1, le=60, description="Deepest dyadic level enumerated")
    certify_depth: int = Field(
        default=3,
        ge=0,
        le=6,
        description="Subdivision depth used when the distance certificate is inconclusive",
    )
    max_cubes: int = Field(default=2_000_000, gt=0, description="Budget on emitted cubes")


class SnowflakeSettings(BaseConfig):
    theta: float = Field(default=0.1, ge=0, lt=1, description="Maximal slope of the profile")
    b: float = Field(default=0.05, gt=0, lt=1, description="Tent height fraction")
    N: int | None = Field(default=None, ge=1, description="Frequency; searched when unset")
    depth: int = Field(default=2, ge=0, description="Number of generations")
    bounded: bool = Field(default=True, description="Build the bounded (cube seed) variant")
    k_max: int = Field(default=3, ge=1, le=6, description="Face subdivision depth")
    max_depth: int = Field(default=5, ge=0, description="Largest accepted depth")
    max_faces: int = Field(default=2_000_000, gt=0, description="Budget on mesh simplices")
    profile: Literal["tent"] = Field(default="tent")
    pyramid_radius: float = Field(
        default=0.35,
        gt=0,
        lt=0.5,
        description="Sup-norm support radius of the two-dimensional tent",
    )

    @model_validator(mode="after")
    def validate_depth(self) -> SnowflakeSettings:
        if self.depth > self.max_depth:
            raise ValueError(f"depth {self.depth} exceeds max_depth {self.max_depth}")
        return self


class FlatnessSettings(BaseConfig):
    separation_resolution: int = Field(default=64, ge=4, description="Grid points per axis")
    recheck_factor: int = Field(default=4, ge=1, description="Resolution multiplier on recheck")
    n_probes: int = Field(default=200, ge=1, description="Probes used by certify_domain")


class EnlargementSettings(BaseConfig):
    epsilon: float = Field(default=0.04, gt=0, lt=0.05, description="Enlargement parameter")
    c1: float = Field(default=10.0, gt=0, description="Radius comparability constant")
    c2: float = Field(default=10.0, gt=0, description="Height band constant")
    c3: float = Field(default=10.0, gt=0, description="Neighbour offset constant")
    delta_cap_factor: float = Field(
        default=1.0,
        gt=0,
        description="Base flatness must not exceed delta_cap_factor * epsilon^2",
    )
    strict: bool = Field(default=True, description="Enforce the base flatness precondition")
    e_points: list[list[float]] = Field(
        default=[],
        description="Explicit sample of E; candidates are used when empty",
    )
    sphere_resolution: int = Field(
        default=48,
        ge=8,
        description="Samples per great circle of each ball when building the boundary cloud",
    )


class HarmonicSettings(BaseConfig):
    pole: list[float] | None = Field(default=None, description="Pole; domain-specific default")
    n: int = Field(default=100_000, ge=1, description="Walks per estimate")
    tol: float | None = Field(default=None, gt=0, description="Termination distance")
    tol_fraction: float = Field(default=1e-4, gt=0, description="tol as a fraction of diam")
    max_steps: int = Field(default=100_000, ge=1, description="Step budget per walk")
    max_failure_rate: float = Field(default=1e-3, ge=0, lt=1)
    batch_size: int = Field(default=65_536, ge=1, description="Walks per random stream")
    alpha: float = Field(default=0.5, gt=0, description="Exponent of the singular set test")
    r0: float = Field(default=0.25, gt=0, le=1, description="Largest radius of the test")
    confidence_z: float = Field(default=3.0, gt=0)
    min_hits: int = Field(default=100, ge=1, description="Expected hits at the smallest radius")
    n_probes: int = Field(default=32, ge=1, description="Boundary probes for candidate search")


class MeasureSettings(BaseConfig):
    quadrature_resolution: int = Field(default=256, ge=4, description="Cells per patch radius")
    box_offsets: int = Field(default=4, ge=1, description="Grid shifts used by box counting")
    radius_levels: list[int] = Field(
        default=[4, 5, 6, 7, 8],
        description="Dyadic exponents n of the radii 2^-n swept by the verifier",
    )
    alpha: float = Field(default=0.5, gt=0)
    c_mu: float = Field(default=1.0, gt=0)


class ReifenbergConfig(BaseSettings):
    """Run configuration of the laboratory."""

    model_config = SettingsConfigDict(
        env_prefix="REIFENBERG_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
    )

    debug: bool = Field(default=False, description="Enable debug logging")
    log_level: str = Field(default="INFO", description="Logging level")
    home: str = Field(default=".reifenberg", description="Home directory")
    cache_path: str = Field(default=".cache", description="Path for cache directory")
    output_dir: str = Field(default="output", description="Report bundle directory")
    dimension: int = Field(default=2, description="Ambient dimension d+1")
    seed: int = Field(default=20240601, ge=0, description="Root seed")
    threads: int | None = Field(default=None, ge=1, description="Worker threads")

    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    domain: DomainSettings = Field(default_factory=DomainSettings)
    whitney: WhitneySettings = Field(default_factory=WhitneySettings)
    snowflake: SnowflakeSettings = Field(default_factory=SnowflakeSettings)
    flatness: FlatnessSettings = Field(default_factory=FlatnessSettings)
    enlargement: EnlargementSettings = Field(default_factory=EnlargementSettings)
    harmonic: HarmonicSettings = Field(default_factory=HarmonicSettings)
    measure: MeasureSettings = Field(default_factory=MeasureSettings)

    @field_validator("dimension")
    def validate_dimension(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        return v

    @field_validator("log_level")
    def validate_log_level(cls, v: str) -> str:
        if v.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level '{v}'")
        return v.upper()

    @model_validator(mode="after")
    def validate_points(self) -> ReifenbergConfig:
        for p in self.enlargement.e_points:
            if len(p) != self.dimension:
                raise ValueError(f"E point {p} does not have {self.dimension} coordinates")
        if self.harmonic.pole is not None and len(self.harmonic.pole) != self.dimension:
            raise ValueError(
                f"pole {self.harmonic.pole} does not have {self.dimension} coordinates",
            )
        return self

    @classmethod
    def load(cls, config_file: str | Path | None = None, **overrides) -> ReifenbergConfig:
        """
        Load configuration from multiple sources in order of precedence:
        1. Explicit overrides (command-line flags)
        2. The run configuration file
        3. pyproject.toml
        4. Environment variables
        5. Default values
        """
        config_dict = cls._load_from_pyproject()
        if config_file is not None:
            merge_nested(config_dict, cls._load_from_file(Path(config_file)))
        merge_nested(config_dict, overrides)
        try:
            return cls(**config_dict)
        except ValidationError as ex:
            raise ConfigurationError(ex, describe_validation_error(ex))

    @staticmethod
    def _load_from_pyproject() -> dict[str, Any]:
        pyproject_path = Path("pyproject.toml")
        if not pyproject_path.exists():
            return {}

        try:
            with open(pyproject_path, "rb") as f:
                pyproject = tomli.load(f)
                return pyproject.get("tool", {}).get("reifenberg", {})
        except tomli.TOMLDecodeError:
            return {}

    @staticmethod
    def _load_from_file(path: Path) -> dict[str, Any]:
        if not path.exists():
            raise ConfigurationError(message=f"Configuration file '{path}' not found.")
        try:
            with open(path, "rb") as f:
                return tomli.load(f)
        except tomli.TOMLDecodeError as ex:
            raise ConfigurationError(ex, f"Configuration file '{path}' is not valid: {ex}")


def merge_nested(d: dict, u: dict) -> None:
    """Merge u into d in place, descending into tables present in both."""
    for k, v in u.items():
        if isinstance(v, dict) and k in d and isinstance(d[k], dict):
            merge_nested(d[k], v)
        else:
            d[k] = v


def describe_validation_error(ex: ValidationError) -> str:
    problems = [
        f"{'.'.join(str(p) for p in error['loc'])}: {error['msg']}" for error in ex.errors()
    ]
    return "Invalid configuration: " + "; ".join(problems)


def config_hash(settings: ReifenbergConfig) -> str:
    payload = json.dumps(settings.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Configuration:
    """Process-wide holder of the ReifenbergConfig; every stage reads its settings from here."""

    _instance: Configuration | None = None
    _lock: Lock = Lock()
    _config: ReifenbergConfig | None = None

    def __new__(cls) -> Configuration:
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._config is None:
            with self._lock:
                if self._config is None:
                    self._config = ReifenbergConfig.load()

    @property
    def settings(self) -> ReifenbergConfig:
        """Current settings, loaded on first use."""
        if self._config is None:
            with self._lock:
                if self._config is None:
                    self._config = ReifenbergConfig.load()
        return self._config

    def reload(self) -> None:
        """Drop overrides and read pyproject.toml and the environment again."""
        with self._lock:
            self._config = ReifenbergConfig.load()

    def load_file(self, path: str | Path) -> None:
        """Replace the settings with the ones read from a run configuration file."""
        with self._lock:
            self._config = ReifenbergConfig.load(path)

    def override(self, **kwargs) -> None:
        """Merge nested values into the current settings and validate the result."""
        with self._lock:
            if self._config is None:
                self._config = ReifenbergConfig.load()

            config_dict = self._config.model_dump()
            merge_nested(config_dict, kwargs)
            try:
                self._config = ReifenbergConfig(**config_dict)
            except ValidationError as ex:
                raise ConfigurationError(ex, describe_validation_error(ex))

    def reset(self) -> None:
        """Forget the settings; the next access loads them again."""
        with self._lock:
            self._config = None

    @staticmethod
    def get() -> Configuration:
        return Configuration()
