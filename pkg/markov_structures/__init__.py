from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("markov-structures")
except PackageNotFoundError:
    __version__ = "0.0.0"
__license__ = "MIT"

from .chain import (
    DefaultIntensityGenerator,
    Distribution,
    KroneckerSumGenerator,
    PiecewiseConstantFn,
    PiecewiseConstantGenerator,
    RateFunctionGenerator,
    StateSpace,
    validate_generator,
)
from .consistency import classify
from .exceptions import (
    ConfigError,
    DomainError,
    GeneratorValidationError,
    InfeasibleStepError,
    MarkovStructureError,
    UndefinedThetaError,
    UnsupportedValueError,
)
from .measures import (
    FixedHorizon,
    RollingWindow,
    measure_series,
    systemic_dependence,
    systemic_instability,
    systemic_risk,
)
from .semigroup import propagate, transition_matrix
from .structures import (
    MarkovStructureSpec,
    example_family,
    independence_structure,
    strong_common_jump,
)

__all__ = (
    "StateSpace",
    "Distribution",
    "PiecewiseConstantFn",
    "PiecewiseConstantGenerator",
    "RateFunctionGenerator",
    "DefaultIntensityGenerator",
    "KroneckerSumGenerator",
    "validate_generator",
    "transition_matrix",
    "propagate",
    "classify",
    "MarkovStructureSpec",
    "example_family",
    "independence_structure",
    "strong_common_jump",
    "FixedHorizon",
    "RollingWindow",
    "systemic_risk",
    "systemic_dependence",
    "systemic_instability",
    "measure_series",
    "MarkovStructureError",
    "DomainError",
    "GeneratorValidationError",
    "UndefinedThetaError",
    "InfeasibleStepError",
    "ConfigError",
    "UnsupportedValueError",
)
