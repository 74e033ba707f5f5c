class MarkovStructureError(Exception):
    pass


class DomainError(MarkovStructureError, ValueError):
    pass


class GeneratorValidationError(DomainError):
    """Raised when a generator fails validation; carries the report."""

    def __init__(self, report):
        self.report = report
        super(GeneratorValidationError, self).__init__(
            "invalid generator: %s" % "; ".join(str(v) for v in report.violations)
        )


class UndefinedThetaError(DomainError):
    """Raised when a conditional law with zero-probability conditioning is used."""

    def __init__(self, component, state, t):
        self.component = component
        self.state = state
        self.t = t
        super(UndefinedThetaError, self).__init__(
            "marginal generator undefined at t=%g: component %d state %r has "
            "zero probability" % (t, component + 1, state)
        )


class InfeasibleStepError(MarkovStructureError):
    """Raised when a discrete-time construction step has no acceptable solution.

    Attributes:
        step (int): Index of the failing step.
        residual (float): Smallest residual found.
        partial: Result assembled from the steps that succeeded, if any.
    """

    def __init__(self, step, residual, reason, partial=None):
        self.step = step
        self.residual = residual
        self.reason = reason
        self.partial = partial
        super(InfeasibleStepError, self).__init__(
            "step %d infeasible (%s), residual %.3e" % (step, reason, residual)
        )


class ConfigError(MarkovStructureError):
    """Raised when a scenario file fails to parse or validate.

    ``messages`` holds one line-anchored message per problem.
    """

    def __init__(self, source, messages):
        self.source = source
        self.messages = list(messages)
        super(ConfigError, self).__init__(
            "\n".join("%s:%s" % (source, msg) for msg in self.messages)
        )


class UnsupportedValueError(MarkovStructureError):
    pass
