"""
Model file loading.

A model file is JSON holding the state labels, a generator (constant or piecewise
constant), running and terminal costs, and the transition risk mapping. The layout
is documented in docs/model_schema.md.
"""

from pathlib import Path
from typing import Callable, List, Literal, Optional, Tuple, TypeVar, Union
import json
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from riskctmc.errors import ModelParseError, StructuralError
from riskctmc.markov_core import CostSpec, GeneratorSchedule, MarkovModel, StateSpace, random_model
from riskctmc.risk_mappings import RiskMappingSpec

logger = logging.getLogger(__name__)

Matrix = List[List[float]]
PerState = Union[float, List[float]]


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _square(matrix: Matrix) -> Matrix:
    if not matrix or any(len(row) != len(matrix) for row in matrix):
        raise ValueError("matrix must be square and non-empty")
    return matrix


class GeneratorPiece(_Schema):
    until: float = Field(gt=0)
    matrix: Matrix

    @field_validator("matrix")
    @classmethod
    def _matrix_square(cls, matrix: Matrix) -> Matrix:
        return _square(matrix)


class RunningCost(_Schema):
    times: List[float] = Field(min_length=1)
    values: Matrix

    @model_validator(mode="after")
    def _rows_match_times(self) -> "RunningCost":
        if len(self.values) != len(self.times):
            raise ValueError(f"{len(self.times)} times but {len(self.values)} value rows")
        return self


class CostBlock(_Schema):
    running: Union[List[float], RunningCost]
    terminal: List[float] = Field(min_length=1)


class ExpectationRisk(_Schema):
    kind: Literal["expectation"]


class AvarRisk(_Schema):
    kind: Literal["avar"]
    alpha: PerState


class SemideviationRisk(_Schema):
    kind: Literal["semideviation"]
    kappa: PerState
    p: float = 1.0


class WorstCaseRisk(_Schema):
    kind: Literal["worst_case"]


RiskBlock = Union[ExpectationRisk, AvarRisk, SemideviationRisk, WorstCaseRisk]


class RandomBlock(_Schema):
    states: int = Field(ge=1)
    seed: int
    horizon: float = Field(default=1.0, gt=0)
    rate_scale: float = Field(default=1.0, gt=0)
    pieces: int = Field(default=1, ge=1)


class ModelFile(_Schema):
    name: str = "model"
    states: Optional[List[str]] = None
    horizon: Optional[float] = Field(default=None, gt=0)
    generator: Optional[Union[Matrix, List[GeneratorPiece]]] = None
    running_cost: Optional[Union[List[float], RunningCost]] = None
    terminal_cost: Optional[List[float]] = Field(default=None, min_length=1)
    cost: Optional[CostBlock] = None
    random: Optional[RandomBlock] = None
    risk: RiskBlock = Field(discriminator="kind")

    @field_validator("generator")
    @classmethod
    def _generator_shape(cls, generator: Optional[Union[Matrix, List[GeneratorPiece]]]):
        if generator is None:
            return None
        if not generator:
            raise ValueError("generator must not be empty")
        if isinstance(generator[0], GeneratorPiece):
            return generator
        return _square(generator)

    @property
    def is_piecewise(self) -> bool:
        return bool(self.generator) and isinstance(self.generator[0], GeneratorPiece)

    @model_validator(mode="after")
    def _one_source(self) -> "ModelFile":
        flat_cost = self.running_cost is not None or self.terminal_cost is not None
        if self.random is not None:
            if self.generator is not None or self.cost is not None or flat_cost:
                raise ValueError("'random' cannot be combined with generator or cost fields")
            return self
        if self.generator is None:
            raise ValueError("'generator' is required unless 'random' is given")
        if not self.is_piecewise and self.horizon is None:
            raise ValueError("'horizon' is required with a constant 'generator'")
        if self.cost is not None and flat_cost:
            raise ValueError("give exactly one of 'cost' or 'running_cost'/'terminal_cost'")
        if self.cost is None and self.terminal_cost is None:
            raise ValueError("'terminal_cost' is required")
        return self

    def cost_fields(self) -> Tuple[Union[List[float], RunningCost, None], List[float], str, str]:
        """Running cost, terminal cost and their field paths, whichever layout was used"""
        if self.cost is not None:
            return self.cost.running, self.cost.terminal, "cost.running", "cost.terminal"
        return self.running_cost, self.terminal_cost, "running_cost", "terminal_cost"


def _risk_spec(block: RiskBlock) -> RiskMappingSpec:
    if isinstance(block, AvarRisk):
        return RiskMappingSpec.avar(block.alpha)
    if isinstance(block, SemideviationRisk):
        return RiskMappingSpec.semideviation(block.kappa, block.p)
    if isinstance(block, WorstCaseRisk):
        return RiskMappingSpec.worst_case()
    return RiskMappingSpec.expectation()


T = TypeVar("T")


def _located(source: str, field: str, build: Callable[[], T]) -> T:
    """Run build, reporting a structural failure against the model file field"""
    try:
        return build()
    except StructuralError as e:
        raise ModelParseError(str(e), f"{source}: {field}") from e


def _build(parsed: ModelFile, source: str) -> MarkovModel:
    if parsed.random is not None:
        r = parsed.random
        model = random_model(r.states, seed=r.seed, horizon=r.horizon, rate_scale=r.rate_scale, pieces=r.pieces)
        if parsed.states is not None:
            model = _located(
                source, "states", lambda: MarkovModel(StateSpace(tuple(parsed.states)), model.schedule, model.cost)
            )
        return model

    if parsed.is_piecewise:
        schedule = _located(
            source, "generator", lambda: GeneratorSchedule.from_pieces([(p.until, p.matrix) for p in parsed.generator])
        )
        if parsed.horizon is not None and abs(parsed.horizon - schedule.horizon) > 1e-12:
            raise ModelParseError(
                f"horizon {parsed.horizon} differs from the last piece end {schedule.horizon}", f"{source}: horizon"
            )
    else:
        schedule = _located(source, "generator", lambda: GeneratorSchedule.constant(parsed.generator, parsed.horizon))

    running, terminal, running_field, terminal_field = parsed.cost_fields()
    if len(terminal) != schedule.n:
        raise ModelParseError(f"{len(terminal)} terminal costs for {schedule.n} states", f"{source}: {terminal_field}")
    if running is None:
        running = [0.0] * schedule.n
    if isinstance(running, RunningCost):
        cost = _located(source, running_field, lambda: CostSpec(running.times, running.values, terminal))
    else:
        cost = _located(source, running_field, lambda: CostSpec.constant(running, terminal))
    _located(source, f"{running_field}.times", lambda: cost.validate_horizon(schedule.horizon))

    labels = parsed.states or [f"s{i}" for i in range(schedule.n)]
    return _located(source, "states", lambda: MarkovModel(StateSpace(tuple(labels)), schedule, cost))


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"])


def parse_model(data: dict, source: str = "<model>") -> Tuple[MarkovModel, RiskMappingSpec]:
    """Validate a decoded model document and build the model and risk mapping"""
    try:
        parsed = ModelFile.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        details = "; ".join(f"{_field_path(err)}: {err['msg']}" for err in e.errors())
        raise ModelParseError(details, f"{source}: {_field_path(first)}") from e

    model = _build(parsed, source)
    spec = _risk_spec(parsed.risk)
    spec.validate_for(model.n)
    logger.debug(f"Parsed model {parsed.name!r}: {model.n} states, horizon {model.horizon}, {spec.describe()}")
    return model, spec


def load_model(path: Union[str, Path]) -> Tuple[MarkovModel, RiskMappingSpec]:
    """Read and validate a model file"""
    path = Path(path)
    if not path.exists():
        raise ModelParseError(f"model file not found: {path}")

    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(e.msg, f"{path}:{e.lineno}:{e.colno}") from e
    if not isinstance(data, dict):
        raise ModelParseError("top level must be a JSON object", str(path))

    return parse_model(data, str(path))
