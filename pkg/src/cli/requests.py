"""
Request models for the command-line surface.

ExperimentConfig validates both CLI flags and JSON config files; pydantic
errors are turned into ConfigValidationError with the offending field and,
for files, the line it appears on.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..models.errors import ConfigValidationError, InvalidTreeError
from ..services.tree_core import WeightScheme

Family = Literal["path", "star", "caterpillar", "broom", "uniform_random", "random_binary"]

Procedure = Literal[
    "diameter",
    "max_degree",
    "leaves",
    "typical",
    "typical_ustat",
    "typical_pathcount",
    "estimate_diameter",
    "estimate_max_degree",
    "estimate_leaves",
    "estimate_typical",
    "recover",
]

TEST_PROCEDURES = ("diameter", "max_degree", "leaves", "typical", "typical_ustat", "typical_pathcount")
ESTIMATE_PROCEDURES = ("estimate_diameter", "estimate_max_degree", "estimate_leaves", "estimate_typical")


class TreeRequest(BaseModel):
    """Instance description shared by every sub-command."""

    model_config = ConfigDict(extra="forbid")

    family: Family = Field(..., description="Tree family")
    n: int = Field(..., ge=1, description="Number of vertices")
    weights: str = Field(default="unit", description="'unit' or 'uniform:LO:HI' in quanta")
    tree_seed: int = Field(default=0, ge=0, description="Seed of the instance generator")

    @field_validator("weights")
    @classmethod
    def _weights_parse(cls, value: str) -> str:
        try:
            WeightScheme.parse(value)
        except InvalidTreeError as e:
            raise ValueError(str(e))
        return value

    def weight_scheme(self) -> WeightScheme:
        return WeightScheme.parse(self.weights)


class ExperimentConfig(TreeRequest):
    """One procedure run over `trials` independent trials on a fixed instance."""

    procedure: Procedure = Field(..., description="Test, estimator or recovery to run")
    threshold: Optional[float] = Field(default=None, ge=1, description="D, Δ, Λ or ℓ for tests")
    delta: float = Field(..., gt=0, lt=1)
    epsilon: float = Field(..., gt=0, lt=1)
    trials: int = Field(default=1, ge=1)
    base_seed: int = Field(default=0, ge=0)
    diam_hint: Optional[float] = Field(default=None, ge=1, description="Known diameter bound for typical tests")
    sample_size: Optional[int] = Field(default=None, ge=1, description="|X| for the recover procedure")
    debug_full_sample: bool = False
    record_timing: bool = True

    @model_validator(mode="after")
    def _procedure_fields(self) -> "ExperimentConfig":
        if self.procedure in TEST_PROCEDURES and self.threshold is None:
            raise ValueError(f"procedure '{self.procedure}' needs a threshold")
        if self.procedure == "recover":
            if self.sample_size is None:
                raise ValueError("procedure 'recover' needs sample_size")
            if self.sample_size > self.n:
                raise ValueError(f"sample_size {self.sample_size} exceeds n = {self.n}")
        if self.procedure == "leaves" and self.n < 2:
            raise ValueError("leaf test needs n >= 2")
        return self

    @property
    def is_test(self) -> bool:
        return self.procedure in TEST_PROCEDURES

    @property
    def is_estimate(self) -> bool:
        return self.procedure in ESTIMATE_PROCEDURES


def _line_of(text: str, field_name: str) -> Optional[int]:
    needle = f'"{field_name}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def validation_error(e: ValidationError, source_text: Optional[str] = None) -> ConfigValidationError:
    first = e.errors()[0]
    field_name = ".".join(str(part) for part in first.get("loc", ())) or None
    line = _line_of(source_text, field_name) if source_text and field_name else None
    return ConfigValidationError(first.get("msg", str(e)), field=field_name, line=line)


def config_from_mapping(data: Dict[str, Any], source_text: Optional[str] = None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise validation_error(e, source_text) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read an ExperimentConfig from a JSON file.

    Raises:
        ConfigValidationError: unreadable file, malformed JSON or invalid fields
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigValidationError(f"cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"malformed JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ConfigValidationError("config file must contain a JSON object", line=1)
    return config_from_mapping(data, text)


class TestRequest(BaseModel):
    """Flags of the `test` sub-command."""

    model_config = ConfigDict(extra="forbid")
    __test__ = False

    procedure: Literal["diameter", "max_degree", "leaves", "typical", "typical_ustat", "typical_pathcount"]
    threshold: float = Field(..., ge=1)
    delta: float = Field(..., gt=0, lt=1)
    epsilon: float = Field(..., gt=0, lt=1)
    seed: int = Field(default=0, ge=0)
    diam_hint: Optional[float] = Field(default=None, ge=1)
    debug_full_sample: bool = False


class EstimateRequest(BaseModel):
    """Flags of the `estimate` sub-command."""

    model_config = ConfigDict(extra="forbid")

    procedure: Literal["estimate_diameter", "estimate_max_degree", "estimate_leaves", "estimate_typical"]
    delta: float = Field(..., gt=0, lt=1)
    epsilon: float = Field(..., gt=0, lt=1)
    seed: int = Field(default=0, ge=0)
    diam_hint: Optional[float] = Field(default=None, ge=1)


class RecoverRequest(BaseModel):
    """Flags of the `recover` sub-command: an explicit sample or a random one of sample_size."""

    model_config = ConfigDict(extra="forbid")

    sample: Optional[List[int]] = Field(default=None, min_length=1)
    sample_size: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "RecoverRequest":
        if (self.sample is None) == (self.sample_size is None):
            raise ValueError("give exactly one of sample or sample_size")
        return self


def validate_request(model: type, data: Dict[str, Any]) -> Any:
    """Validate sub-command flags, mapping pydantic errors to ConfigValidationError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise validation_error(e) from e


def parse_sweep(spec: str) -> List[float]:
    """'threshold=50,100,200' -> [50.0, 100.0, 200.0]"""
    key, sep, values = spec.partition("=")
    if not sep or key.strip() != "threshold":
        raise ConfigValidationError("sweep must look like threshold=V1,V2,...", field="sweep")
    try:
        thresholds = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigValidationError(f"bad sweep value: {e}", field="sweep") from e
    if len(thresholds) < 2 or any(t < 1 for t in thresholds):
        raise ConfigValidationError("sweep needs at least two thresholds, each >= 1", field="sweep")
    return thresholds
