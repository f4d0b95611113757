import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from mtimpute.errors import ConfigError

Mechanism = Literal["MCAR", "MAR", "MNAR"]
Pattern = Literal["random", "uniform"]
Method = Literal["mean", "dae", "dae_mt"]
InitialImputation = Literal["mean", "max", "perfect"]

MECHANISMS: Tuple[str, ...] = ("MCAR", "MAR", "MNAR")
PATTERNS: Tuple[str, ...] = ("random", "uniform")
METHODS: Tuple[str, ...] = ("dae_mt", "dae", "mean")


def digest(payload: BaseModel) -> str:
    """sha256 of the canonical JSON form of a model."""
    text = json.dumps(payload.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class MechanismSpec(BaseModel):
    kind: Mechanism
    pattern: Pattern
    p_m: float = Field(ge=0.0, le=1.0)
    p_p: float = Field(default=0.5, ge=0.0, le=1.0)
    trigger_columns: Optional[Tuple[int, int]] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_triggers(self) -> "MechanismSpec":
        if self.kind == "MCAR" and self.trigger_columns is not None:
            raise ValueError("MCAR takes no trigger columns")
        if self.kind != "MCAR":
            if self.trigger_columns is None:
                raise ValueError(f"{self.kind} needs two trigger columns")
            if self.trigger_columns[0] == self.trigger_columns[1]:
                raise ValueError("trigger columns must be distinct")
        return self


class AdamConfig(BaseModel):
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class ImputationConfig(BaseModel):
    method: Method = "dae_mt"
    n_imputations: int = Field(default=5, ge=1)
    total_epochs: int = Field(default=500, ge=1)
    n_prime: int = Field(default=10, ge=1)
    n_step: int = Field(default=2, ge=1)
    n_feedback_steps: int = Field(default=245, ge=1)
    theta: int = Field(default=7, ge=0)
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    initial_imputation: InitialImputation = "mean"
    seed: int = Field(default=0, ge=0)
    adam: AdamConfig = Field(default_factory=AdamConfig)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_epochs(self) -> "ImputationConfig":
        if self.method == "dae_mt":
            scheduled = self.n_prime + self.n_feedback_steps * self.n_step
            if scheduled != self.total_epochs:
                raise ValueError(
                    f"n_prime + n_feedback_steps * n_step = {scheduled}, "
                    f"but total_epochs = {self.total_epochs}"
                )
        return self

    @classmethod
    def with_epochs(
        cls, method: str, total_epochs: int, n_prime: int = 10, n_step: int = 2, **kwargs
    ) -> "ImputationConfig":
        """Build a config whose feedback schedule fills ``total_epochs`` exactly."""
        steps, rest = divmod(total_epochs - n_prime, n_step)
        if steps < 1 or rest:
            raise ConfigError(
                f"{total_epochs} epochs cannot be split into {n_prime} priming epochs "
                f"plus whole steps of {n_step}"
            )
        return cls(
            method=method,
            total_epochs=total_epochs,
            n_prime=n_prime,
            n_step=n_step,
            n_feedback_steps=steps,
            **kwargs,
        )


class DatasetCatalogEntry(BaseModel):
    abbreviation: str
    name: str
    path: str
    rows: int = Field(ge=1)
    columns: int = Field(ge=1)
    column_names: Optional[List[str]] = None
    drop_columns: List[str] = Field(default_factory=list)
    categorical: List[str] = Field(default_factory=list)
    vulnerable: List[str] = Field(default_factory=list)
    na_values: List[str] = Field(default_factory=lambda: ["NA", ""])
    delimiter: str = ","
    header: bool = True
    # keyed "<mechanism>/<pattern>", fractions of all cells
    missing_targets: Dict[str, float] = Field(default_factory=dict)


class GridConfig(BaseModel):
    mechanisms: List[Mechanism] = Field(default_factory=lambda: list(MECHANISMS))
    patterns: List[Pattern] = Field(default_factory=lambda: list(PATTERNS))


class MissingnessConfig(BaseModel):
    targets: Literal["catalog", "band"] = "catalog"
    low: float = Field(default=0.14, ge=0.0, le=1.0)
    high: float = Field(default=0.20, ge=0.0, le=1.0)
    fallback: float = Field(default=0.10, ge=0.0, le=1.0)
    tolerance: float = Field(default=0.02, gt=0.0)
    draws: int = Field(default=20, ge=20)

    @model_validator(mode="after")
    def check_band(self) -> "MissingnessConfig":
        if not self.fallback <= self.low <= self.high:
            raise ValueError("expected fallback <= low <= high")
        return self


def _default_methods() -> List[ImputationConfig]:
    return [ImputationConfig(method=method) for method in METHODS]


class ExperimentConfig(BaseModel):
    datasets: List[str] = Field(min_length=1)
    grid: GridConfig = Field(default_factory=GridConfig)
    missingness: MissingnessConfig = Field(default_factory=MissingnessConfig)
    methods: List[ImputationConfig] = Field(default_factory=_default_methods, min_length=1)
    seed: int = Field(default=0, ge=0)
    out: Path = Path("results")
    data_dir: Optional[Path] = None
    catalog: Optional[Path] = None

    @model_validator(mode="after")
    def check_methods(self) -> "ExperimentConfig":
        names = [m.method for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"each method may appear once, got {names}")
        if not self.grid.mechanisms or not self.grid.patterns:
            raise ValueError("the grid needs at least one mechanism and one pattern")
        return self

    @classmethod
    def from_yaml(cls, path: Path) -> "ExperimentConfig":
        try:
            with open(path) as f:
                raw = yaml.safe_load(f) or {}
            return cls.model_validate(raw)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"invalid experiment config {path}:\n{e}") from e

    def digest(self) -> str:
        return digest(self)


class MetricSummary(BaseModel):
    values: List[float] = Field(min_length=1)
    mean: float
    max: float

    @model_validator(mode="after")
    def check_order(self) -> "MetricSummary":
        if self.max < self.mean:
            raise ValueError(f"max {self.max} below mean {self.mean}")
        return self


class MethodResult(BaseModel):
    method: Method
    initial_imputation: InitialImputation = "mean"
    seeds: List[int]
    epochs: int
    rmse_sum: MetricSummary
    covariance_drift: MetricSummary


class CellResult(BaseModel):
    dataset: str
    mechanism: Mechanism
    pattern: Pattern
    status: Literal["ok", "degraded", "failed"] = "ok"
    reason: Optional[str] = None
    target_fraction: Optional[float] = None
    achieved_fraction: Optional[float] = None
    spec: Optional[MechanismSpec] = None
    mask_digest: Optional[str] = None
    methods: List[MethodResult] = Field(default_factory=list)
    runtime_seconds: float = 0.0


class ExperimentReport(BaseModel):
    config: ExperimentConfig
    config_digest: str
    seed: int
    cells: List[CellResult]
    runtime_seconds: float = 0.0

    @property
    def failed(self) -> bool:
        return any(cell.status == "failed" for cell in self.cells)


class SensitivityReport(BaseModel):
    dataset: str
    seed: int
    config_digest: str
    spec: MechanismSpec
    achieved_fraction: float
    variants: List[MethodResult]


class TrainingMetrics(BaseModel):
    run: int = 0
    epoch: int
    loss: float
    gradients: Dict[str, float]
    activations: Dict[str, float]
    weights: Dict[str, float]
    custom_metrics: Optional[Dict[str, float]] = None
