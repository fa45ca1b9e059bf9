"""
Experiment Configuration
Validated JSON experiment documents and their conversion into library specs.
"""

import json
import os
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .detectors import DetectorSpec
from .error_handling import ConfigError
from .matrix_factory import MatrixRecipe
from .model_core import NOISE_ANALOG
from .monte_carlo import AmplitudeRule, GramSpec, TrialSpec

SEED_ENV = "RDMUD_SEED"
WORKERS_ENV = "RDMUD_WORKERS"
PRESET_PACKAGE = "rdmud.presets"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Pydantic models
class MatrixConfig(_Strict):
    kind: Literal["gaussian", "partial-dft", "kerdock", "file"] = "partial-dft"
    M: int = Field(default=16, ge=1)
    seed: int = 0
    search_count: int = Field(default=1, ge=0)
    path: Optional[str] = None
    normalize: bool = False

    def to_recipe(self, N: int) -> MatrixRecipe:
        return MatrixRecipe(self.kind, self.M, N, self.seed, self.search_count, self.path, self.normalize)


class GramConfig(_Strict):
    kind: Literal["identity", "gold", "spectrum", "file"] = "identity"
    L: int = Field(default=1023, ge=1)
    eigenvalues: Optional[List[float]] = None
    eigen_denominator: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    path: Optional[str] = None

    def to_spec(self) -> GramSpec:
        eigenvalues = tuple(self.eigenvalues) if self.eigenvalues is not None else None
        return GramSpec(self.kind, self.L, eigenvalues, self.eigen_denominator, self.seed, self.path)


class AmplitudeConfig(_Strict):
    kind: Literal["constant", "uniform"] = "constant"
    value: float = 1.0
    low: float = Field(default=1.0, gt=0)
    high: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.low > self.high:
            raise ValueError("low must not exceed high")
        return self

    def to_rule(self) -> AmplitudeRule:
        return AmplitudeRule(self.kind, self.value, self.low, self.high)


class DetectorConfig(_Strict):
    family: Literal["rdd", "rddt", "rddf", "rddft", "rd-ls", "rd-mmse", "rd-ml", "decorrelator"]
    K: Optional[int] = Field(default=None, ge=1)
    xi: Optional[float] = Field(default=None, gt=0)
    eps: Optional[float] = Field(default=None, gt=0)
    whiten: bool = False
    symbol_stage: Literal["sign", "ls", "mmse"] = "sign"
    ml_max_n: int = Field(default=14, ge=1)

    def to_spec(self, default_K: int) -> DetectorSpec:
        K = self.K
        needs_k = self.family in ("rdd", "rddf") or (self.family in ("rd-ls", "rd-mmse") and self.xi is None)
        if K is None and needs_k:
            K = default_K
        return DetectorSpec(self.family, K, self.xi, self.eps, self.whiten, self.symbol_stage, self.ml_max_n)


class OuterConfig(_Strict):
    variable: Literal["N", "K", "sigma2", "matrix_kind", "gram"]
    values: List[Any] = Field(min_length=1)


class SweepConfig(_Strict):
    variable: Literal["M", "K", "N", "sigma2", "detector"]
    values: List[float] = Field(default_factory=list)
    outer: Optional[OuterConfig] = None
    tune: Dict[Literal["rddt", "rddft"], List[float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _values_present(self):
        if self.variable != "detector" and not self.values:
            raise ValueError(f"sweep over {self.variable} needs values")
        return self


class TuneConfig(_Strict):
    family: Literal["rddt", "rddft"]
    grid: List[float] = Field(min_length=1)


class BoundsConfig(_Strict):
    alpha: float = Field(default=1.0, gt=0)
    K0: Optional[int] = Field(default=None, ge=1)
    c: float = 2.0


class ExperimentConfig(_Strict):
    """A complete experiment: system, detectors, and what to compute."""
    name: str = "experiment"
    notes: Dict[str, str] = Field(default_factory=dict)
    master_seed: int = 0
    trials: int = Field(default=10000, ge=1)
    ci_method: Literal["normal", "exact"] = "normal"
    noise: Literal["analog", "circular"] = NOISE_ANALOG
    N: int = Field(default=100, ge=1)
    K: int = Field(default=2, ge=1)
    sigma2: float = Field(default=0.005, ge=0)
    matrix: MatrixConfig = Field(default_factory=MatrixConfig)
    gram: GramConfig = Field(default_factory=GramConfig)
    amplitude: AmplitudeConfig = Field(default_factory=AmplitudeConfig)
    detectors: List[DetectorConfig] = Field(default_factory=lambda: [DetectorConfig(family="rdd")])
    sweep: Optional[SweepConfig] = None
    tune: Optional[TuneConfig] = None
    bounds: BoundsConfig = Field(default_factory=BoundsConfig)
    output: Optional[str] = None

    @model_validator(mode="after")
    def _consistent(self):
        if self.K > self.N:
            raise ValueError(f"K={self.K} exceeds N={self.N}")
        if not self.detectors:
            raise ValueError("at least one detector is required")
        return self

    def detector_specs(self) -> List[DetectorSpec]:
        return [d.to_spec(self.K) for d in self.detectors]

    def trial_spec(self, detector: Optional[DetectorSpec] = None) -> TrialSpec:
        """TrialSpec for the first detector (or the one given)."""
        return TrialSpec(
            N=self.N,
            K=self.K,
            matrix=self.matrix.to_recipe(self.N),
            detector=detector or self.detector_specs()[0],
            gram=self.gram.to_spec(),
            amplitude=self.amplitude.to_rule(),
            sigma2=self.sigma2,
            master_seed=self.master_seed,
            noise=self.noise,
        )

    def outer_sweep(self) -> Optional[Tuple[str, list]]:
        if self.sweep is None or self.sweep.outer is None:
            return None
        outer = self.sweep.outer
        if outer.variable == "gram":
            return outer.variable, [GramConfig.model_validate(v).to_spec() for v in outer.values]
        if outer.variable == "matrix_kind":
            return outer.variable, [str(v) for v in outer.values]
        return outer.variable, list(outer.values)

    def sweep_values(self) -> list:
        if self.sweep is None:
            return []
        if self.sweep.variable == "detector":
            return self.detector_specs()
        if self.sweep.variable in ("M", "K", "N"):
            return [int(v) for v in self.sweep.values]
        return list(self.sweep.values)


def apply_environment(config: ExperimentConfig) -> ExperimentConfig:
    """RDMUD_SEED overrides the configured master seed."""
    seed = os.getenv(SEED_ENV)
    if seed is None or seed == "":
        return config
    try:
        value = int(seed, 0)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
    return config.model_copy(update={"master_seed": value})


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment config, then apply environment overrides."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    return apply_environment(ExperimentConfig.model_validate(document))


def preset_names() -> List[str]:
    folder = resources.files(PRESET_PACKAGE)
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    """Load a shipped preset by name (e.g. "table1", "fig3")."""
    resource = resources.files(PRESET_PACKAGE) / f"{name}.json"
    if not resource.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    document = json.loads(resource.read_text(encoding="utf-8"))
    return apply_environment(ExperimentConfig.model_validate(document))


def default_workers() -> int:
    value = os.getenv(WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
