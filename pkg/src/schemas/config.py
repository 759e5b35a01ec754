"""Run configuration schemas loaded from TOML or JSON files."""

from pathlib import Path
from typing import List, Literal, Optional, Union
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.config import settings
from src.core.exceptions import ConfigValidationError
from src.simulation.integrator import Scheme


class ModelConfig(BaseModel):
    """Agent count, dimension and speed of information."""
    n_agents: int = Field(..., ge=2)
    dim: int = Field(default=1, ge=1)
    c: float = Field(..., gt=0)


class InfluenceSpec(BaseModel):
    """Influence kernel; r_max defaults to 2 (R0 + d0) of the datum."""
    kind: Literal["rational", "gaussian", "affine-cutoff", "tabulated"]
    params: List[float] = Field(..., min_length=1)
    lipschitz: Optional[float] = Field(None, ge=0)
    speed_bound: Optional[float] = Field(None, ge=0)
    r_max: Optional[float] = Field(None, gt=0)


class ScenarioSpec(BaseModel):
    """Initial datum: built from parameters or read from a datum file."""
    kind: Literal["constant", "linear", "random", "symmetric_pair", "file"]
    positions: Optional[List[List[float]]] = None
    velocities: Optional[List[List[float]]] = None
    seed: Optional[int] = None
    box_radius: float = Field(default=1.0, gt=0)
    x0: Optional[float] = None
    slope: float = 0.0
    datum_path: Optional[str] = None

    @model_validator(mode="after")
    def check_kind_fields(self) -> "ScenarioSpec":
        if self.kind in ("constant", "linear") and self.positions is None:
            raise ValueError(f"scenario kind '{self.kind}' needs positions")
        if self.kind == "linear" and self.velocities is None:
            raise ValueError("scenario kind 'linear' needs velocities")
        if self.kind == "random" and self.seed is None:
            raise ValueError("scenario kind 'random' needs a seed")
        if self.kind == "symmetric_pair" and self.x0 is None:
            raise ValueError("scenario kind 'symmetric_pair' needs x0")
        if self.kind == "file":
            if self.datum_path is None:
                raise ValueError("scenario kind 'file' needs datum_path")
            if not Path(self.datum_path).is_file():
                raise ValueError(f"datum file {self.datum_path} does not exist")
        return self


class IntegratorConfig(BaseModel):
    """Scheme, step size and horizon; dt defaults to the resolution rule."""
    scheme: Scheme = Scheme.HEUN
    dt: Optional[float] = Field(None, gt=0)
    T: float = Field(..., gt=0)
    picard_tol: float = Field(default=1e-9, gt=0)
    picard_max_iter: int = Field(default=200, ge=1)


class OutputConfig(BaseModel):
    """Artifact locations, relative to out_dir."""
    out_dir: str = Field(default_factory=lambda: settings.default_out_dir)
    trajectory: str = "trajectory.csv"
    metrics: str = "metrics.csv"
    audit: str = "audit.csv"
    delays: Optional[str] = None
    summary: str = "summary.json"
    eps_rel: float = Field(default=1e-3, gt=0)


class AnalysisConfig(BaseModel):
    """Audit and certificate options."""
    certificate_range: Literal["radius", "diameter"] = "radius"
    strict_audits: bool = True
    cluster_eps: float = Field(default=1e-6, gt=0)


class RunConfig(BaseModel):
    """Complete, self-describing description of one experiment."""
    name: str = "run"
    model: ModelConfig
    influence: InfluenceSpec
    scenario: ScenarioSpec
    integrator: IntegratorConfig
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)

    @model_validator(mode="after")
    def check_shapes(self) -> "RunConfig":
        n, d = self.model.n_agents, self.model.dim
        for label in ("positions", "velocities"):
            rows = getattr(self.scenario, label)
            if rows is None:
                continue
            if len(rows) != n or any(len(row) != d for row in rows):
                raise ValueError(f"scenario.{label} must be {n} rows of {d} coordinates")
        if self.scenario.kind == "symmetric_pair" and (n != 2 or d != 1):
            raise ValueError("scenario kind 'symmetric_pair' needs n_agents = 2 and dim = 1")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def output_path(self, name: str) -> Path:
        return Path(self.outputs.out_dir) / name


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a run configuration from a .toml or .json file.

    Raises:
        ConfigValidationError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigValidationError(f"Config file {path} does not exist", field="config")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            with path.open("rb") as f:
                data = tomllib.load(f)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigValidationError(f"Cannot parse {path}: {e}", field="config") from e
    return parse_run_config(data)


def parse_run_config(data: dict) -> RunConfig:
    """Validate a raw mapping, reporting the first failing field."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or None
        raise ConfigValidationError(f"Invalid configuration: {first['msg']}", field=field) from e


def apply_overrides(
    config: RunConfig,
    dt: Optional[float] = None,
    T: Optional[float] = None,
    scheme: Optional[str] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None
) -> RunConfig:
    """Return a copy with command-line overrides applied and re-validated."""
    integrator = {
        key: value for key, value in {"dt": dt, "T": T, "scheme": scheme}.items() if value is not None
    }
    updated = config.model_copy(update={
        "integrator": config.integrator.model_copy(update=integrator),
        "scenario": config.scenario if seed is None else config.scenario.model_copy(update={"seed": seed}),
        "outputs": config.outputs if out_dir is None else config.outputs.model_copy(update={"out_dir": out_dir}),
    })
    return parse_run_config(updated.model_dump(mode="json"))
