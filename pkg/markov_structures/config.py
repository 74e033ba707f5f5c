"""Scenario files: TOML documents validated by marshmallow schemas.

Each parameter row of a study table is one entry of ``[parameters]``::

    [parameters]
    a = { breakpoints = [0, 3, 10, 30], values = [0.01, 0.01, 0.01, 0.01] }

A schedule given only ``values`` uses the default periods
``[0, 6, 10, 20, 26, 30]``.
"""
import logging
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Tuple

from marshmallow import (
    RAISE,
    Schema,
    ValidationError,
    fields,
    post_load,
    validate,
    validates_schema,
)

from .chain import PiecewiseConstantFn
from .compat import TOMLDecodeError, load_toml
from .exceptions import ConfigError, DomainError
from .measures import FixedHorizon, RollingWindow
from .structures import FAMILY_PARAMETERS, INTERTWINING, LAW_MATCHING

logger = logging.getLogger(__name__)

DEFAULT_BREAKPOINTS = (0.0, 6.0, 10.0, 20.0, 26.0, 30.0)
DEFAULT_ETAS = (0.0, 0.5, 0.8, 1.0)
DEFAULT_GRID_STEP = 0.2
DEFAULT_WINDOW = 3.0
DEFAULT_END = 30.0
EXPLICIT = "explicit"
FAMILIES = tuple(sorted(FAMILY_PARAMETERS)) + (EXPLICIT,)
MASKS = ("sparsity", "no_resurrection", "full")
SCENARIO_PACKAGE = "markov_structures.scenarios"
# error path entries that are not document keys
NON_KEYS = ("_schema", "value")

__all__ = (
    "Schedule",
    "QueryConfig",
    "ModeConfig",
    "ComparisonConfig",
    "MonteCarloConfig",
    "AlgorithmConfig",
    "ExplicitGenerator",
    "ScenarioConfig",
    "ScheduleSchema",
    "QuerySchema",
    "ModeSchema",
    "ComparisonSchema",
    "MonteCarloSchema",
    "AlgorithmSchema",
    "GeneratorSchema",
    "ScenarioSchema",
    "load_scenario",
    "parse_scenario",
    "bundled_scenarios",
    "resolve_scenario",
)


@dataclass(frozen=True)
class Schedule:
    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]

    def to_function(self):
        return PiecewiseConstantFn(self.breakpoints, self.values)


@dataclass(frozen=True)
class QueryConfig:
    z: Tuple[int, ...] = (1, 1)
    h: int = 2
    x: Tuple[int, ...] = (0, 0)


@dataclass(frozen=True)
class ModeConfig:
    kind: str = "fixed"
    horizon: float = DEFAULT_END
    window: float = DEFAULT_WINDOW
    end: float = DEFAULT_END

    def build(self):
        if self.kind == "fixed":
            return FixedHorizon(self.horizon)
        return RollingWindow(self.window, self.end)


@dataclass(frozen=True)
class ComparisonConfig:
    etas: Tuple[float, ...] = DEFAULT_ETAS
    extreme_contagion: bool = False


@dataclass(frozen=True)
class MonteCarloConfig:
    n_paths: int = 20000
    seed: int = 20240917


@dataclass(frozen=True)
class AlgorithmConfig:
    dt: float = 0.05
    steps: Optional[int] = None
    constraint: str = LAW_MATCHING
    mask: str = "sparsity"
    tolerance: Optional[float] = None


@dataclass(frozen=True)
class ExplicitGenerator:
    breakpoints: Tuple[float, ...]
    matrices: Tuple[Tuple[Tuple[float, ...], ...], ...]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    family: str
    parameters: Mapping[str, Schedule]
    description: str = ""
    m: int = 2
    query: QueryConfig = QueryConfig()
    mode: ModeConfig = ModeConfig()
    grid_step: float = DEFAULT_GRID_STEP
    comparison: ComparisonConfig = ComparisonConfig()
    montecarlo: Optional[MonteCarloConfig] = None
    algorithm: Optional[AlgorithmConfig] = None
    generator: Optional[ExplicitGenerator] = None

    def functions(self):
        return {key: s.to_function() for key, s in self.parameters.items()}

    def with_grid_step(self, step):
        return replace(self, grid_step=step)


def _check_breakpoints(breakpoints):
    if not breakpoints or breakpoints[0] != 0:
        raise ValidationError("breakpoints must start at 0.", "breakpoints")
    if any(b <= a for a, b in zip(breakpoints, breakpoints[1:])):
        raise ValidationError("breakpoints must be strictly increasing.", "breakpoints")


class ScheduleSchema(Schema):
    class Meta:
        unknown = RAISE

    breakpoints = fields.List(
        fields.Float(validate=validate.Range(min=0)),
        load_default=None,
        metadata={"description": "Period start times, beginning at 0."},
    )
    values = fields.List(
        fields.Float(allow_nan=False),
        required=True,
        validate=validate.Length(min=1),
        metadata={"description": "Parameter value on each period."},
    )

    @validates_schema
    def check_lengths(self, data, **kwargs):
        breakpoints = data.get("breakpoints")
        values = data.get("values") or []
        if breakpoints is None:
            if len(values) != len(DEFAULT_BREAKPOINTS):
                raise ValidationError(
                    "without breakpoints, %d values are required for the default "
                    "periods %s." % (len(DEFAULT_BREAKPOINTS), list(DEFAULT_BREAKPOINTS)),
                    "values",
                )
            return
        _check_breakpoints(breakpoints)
        if len(breakpoints) != len(values):
            raise ValidationError(
                "%d values for %d breakpoints." % (len(values), len(breakpoints)),
                "values",
            )

    @post_load
    def make_schedule(self, data, **kwargs):
        breakpoints = data.get("breakpoints") or DEFAULT_BREAKPOINTS
        return Schedule(tuple(float(b) for b in breakpoints), tuple(data["values"]))


class QuerySchema(Schema):
    class Meta:
        unknown = RAISE

    z = fields.List(
        fields.Integer(validate=validate.Range(min=0)),
        load_default=lambda: [1, 1],
        metadata={"description": "Target rating per institution."},
    )
    h = fields.Integer(
        load_default=2,
        validate=validate.Range(min=1),
        metadata={"description": "Minimum number of institutions in their target rating."},
    )
    x = fields.List(
        fields.Integer(validate=validate.Range(min=0)),
        load_default=lambda: [0, 0],
        metadata={"description": "Conditioning state at the evaluation time."},
    )

    @post_load
    def make_query(self, data, **kwargs):
        return QueryConfig(tuple(data["z"]), data["h"], tuple(data["x"]))


class ModeSchema(Schema):
    class Meta:
        unknown = RAISE

    kind = fields.String(load_default="fixed", validate=validate.OneOf(["fixed", "rolling"]))
    horizon = fields.Float(
        load_default=DEFAULT_END,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Fixed horizon T; the grid covers [0, T]."},
    )
    window = fields.Float(
        load_default=DEFAULT_WINDOW,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Rolling window: T = t + window."},
    )
    end = fields.Float(
        load_default=DEFAULT_END,
        validate=validate.Range(min=0, min_inclusive=False),
        metadata={"description": "Last evaluation time of a rolling window."},
    )

    @post_load
    def make_mode(self, data, **kwargs):
        return ModeConfig(**data)


class ComparisonSchema(Schema):
    class Meta:
        unknown = RAISE

    etas = fields.List(
        fields.Float(validate=validate.Range(min=0, max=1)),
        load_default=lambda: list(DEFAULT_ETAS),
        metadata={"description": "Common-jump shares of the strong structures."},
    )
    extreme_contagion = fields.Boolean(
        load_default=False,
        metadata={"description": "Also run the matched extreme-contagion structure."},
    )

    @post_load
    def make_comparison(self, data, **kwargs):
        return ComparisonConfig(tuple(data["etas"]), data["extreme_contagion"])


class MonteCarloSchema(Schema):
    class Meta:
        unknown = RAISE

    n_paths = fields.Integer(load_default=20000, validate=validate.Range(min=1))
    seed = fields.Integer(load_default=20240917, validate=validate.Range(min=0))

    @post_load
    def make_montecarlo(self, data, **kwargs):
        return MonteCarloConfig(**data)


class AlgorithmSchema(Schema):
    class Meta:
        unknown = RAISE

    dt = fields.Float(load_default=0.05, validate=validate.Range(min=0, min_inclusive=False))
    steps = fields.Integer(
        load_default=None,
        allow_none=True,
        validate=validate.Range(min=1),
        metadata={"description": "Number of steps; defaults to the last grid time over dt."},
    )
    constraint = fields.String(
        load_default=LAW_MATCHING, validate=validate.OneOf([INTERTWINING, LAW_MATCHING])
    )
    mask = fields.String(load_default="sparsity", validate=validate.OneOf(MASKS))
    tolerance = fields.Float(
        load_default=None, allow_none=True, validate=validate.Range(min=0)
    )

    @post_load
    def make_algorithm(self, data, **kwargs):
        return AlgorithmConfig(**data)


class GeneratorSchema(Schema):
    class Meta:
        unknown = RAISE

    breakpoints = fields.List(fields.Float(), required=True)
    matrices = fields.List(
        fields.List(fields.List(fields.Float(allow_nan=False))),
        required=True,
        metadata={"description": "Full generator matrix of each period."},
    )

    @validates_schema
    def check_shapes(self, data, **kwargs):
        _check_breakpoints(data["breakpoints"])
        if len(data["matrices"]) != len(data["breakpoints"]):
            raise ValidationError("one matrix per breakpoint is required.", "matrices")

    @post_load
    def make_generator(self, data, **kwargs):
        matrices = tuple(tuple(tuple(row) for row in m) for m in data["matrices"])
        return ExplicitGenerator(tuple(data["breakpoints"]), matrices)


class ScenarioSchema(Schema):
    class Meta:
        unknown = RAISE

    name = fields.String(required=True, validate=validate.Length(min=1))
    description = fields.String(load_default="")
    family = fields.String(required=True, validate=validate.OneOf(FAMILIES))
    m = fields.Integer(
        load_default=2,
        validate=validate.Range(min=2, max=2),
        metadata={"description": "Number of institutions."},
    )
    parameters = fields.Dict(
        keys=fields.String(),
        values=fields.Nested(ScheduleSchema),
        required=True,
        metadata={"description": "One schedule per family parameter."},
    )
    generator = fields.Nested(GeneratorSchema, load_default=None, allow_none=True)
    query = fields.Nested(QuerySchema, load_default=QueryConfig)
    mode = fields.Nested(ModeSchema, load_default=ModeConfig)
    grid_step = fields.Float(
        load_default=DEFAULT_GRID_STEP, validate=validate.Range(min=0, min_inclusive=False)
    )
    comparison = fields.Nested(ComparisonSchema, load_default=ComparisonConfig)
    montecarlo = fields.Nested(MonteCarloSchema, load_default=None, allow_none=True)
    algorithm = fields.Nested(AlgorithmSchema, load_default=None, allow_none=True)

    @validates_schema
    def check_family(self, data, **kwargs):
        family = data.get("family")
        if family is None:
            return
        expected = (
            ("lambda_1", "lambda_2") if family == EXPLICIT else FAMILY_PARAMETERS[family]
        )
        parameters = data.get("parameters") or {}
        errors = {}
        for key in expected:
            if key not in parameters:
                errors[key] = ["Missing parameter for family %s." % family]
        for key in parameters:
            if key not in expected:
                errors[key] = ["Unknown parameter for family %s." % family]
        if errors:
            raise ValidationError(errors, "parameters")
        if family == EXPLICIT and data.get("generator") is None:
            raise ValidationError("family explicit needs a [generator] table.", "generator")

    @validates_schema
    def check_query(self, data, **kwargs):
        query = data.get("query")
        m = data.get("m", 2)
        if query is None:
            return
        if len(query.z) != m or len(query.x) != m:
            raise ValidationError({"z": ["Need one entry per institution (%d)." % m]}, "query")
        if query.h > m:
            raise ValidationError({"h": ["Must not exceed m=%d." % m]}, "query")
        if any(v > 1 for v in query.z + query.x):
            raise ValidationError({"z": ["Ratings are 0 (alive) or 1 (default)."]}, "query")

    @post_load
    def make_scenario(self, data, **kwargs):
        return ScenarioConfig(**data)


def _flatten(messages, prefix=()):
    if isinstance(messages, dict):
        for key, value in messages.items():
            yield from _flatten(value, prefix + (str(key),))
    elif isinstance(messages, (list, tuple)) and all(isinstance(m, str) for m in messages):
        for message in messages:
            yield prefix, message
    else:
        for value in messages:
            yield from _flatten(value, prefix)


def _locate(lines, path):
    """1-based line of the deepest key of ``path`` found in the document."""
    found, start = 1, 0
    for key in (k for k in path if not k.isdigit() and k not in NON_KEYS):
        header = re.compile(r"^\s*\[+\s*%s\s*\]+" % re.escape(key))
        assignment = re.compile(r"(^|[{,]\s*)\s*%s\s*=" % re.escape(key))
        for number in range(start, len(lines)):
            if header.search(lines[number]) or assignment.search(lines[number]):
                found, start = number + 1, number
                break
    return found


def _error_messages(text, messages):
    lines = text.splitlines()
    result = []
    for path, message in _flatten(messages):
        location = ".".join(k for k in path if k not in NON_KEYS) or "<document>"
        result.append("%d: %s: %s" % (_locate(lines, path), location, message))
    return result


def parse_scenario(text, source="<string>"):
    """Parse and validate a scenario document.

    Raises:
        ConfigError: with one ``line: key: message`` entry per problem.
    """
    try:
        document = load_toml(text)
    except TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = match.group(1) if match else "1"
        raise ConfigError(source, ["%s: %s" % (line, exc)])
    try:
        config = ScenarioSchema().load(document)
    except ValidationError as exc:
        raise ConfigError(source, _error_messages(text, exc.messages))
    try:
        for key, schedule in config.parameters.items():
            schedule.to_function()
    except DomainError as exc:
        raise ConfigError(source, ["1: parameters: %s" % exc])
    logger.info("loaded scenario %s from %s", config.name, source)
    return config


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), ["1: %s" % exc.strerror])
    return parse_scenario(text, str(path))


def _scenario_files():
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(
        (entry for entry in root.iterdir() if entry.name.endswith(".toml")),
        key=lambda entry: entry.name,
    )


def bundled_scenarios():
    """Bundled scenario configs keyed by name, in name order."""
    result = {}
    for entry in _scenario_files():
        config = parse_scenario(entry.read_text(encoding="utf-8"), entry.name)
        result[config.name] = config
    return result


def resolve_scenario(name_or_path):
    """Load a scenario file, or a bundled scenario by name."""
    path = Path(name_or_path)
    if path.suffix == ".toml" or path.exists():
        return load_scenario(path)
    for entry in _scenario_files():
        if entry.name == "%s.toml" % name_or_path:
            return parse_scenario(entry.read_text(encoding="utf-8"), entry.name)
    raise ConfigError(
        str(name_or_path), ["1: no such file or bundled scenario %r" % str(name_or_path)]
    )
