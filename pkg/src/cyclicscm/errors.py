"""Exception hierarchy shared by all cyclicscm modules."""


class ScmError(Exception):
    """Base class for every error raised by this package."""


class InvalidModel(ScmError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid model: " + "; ".join(self.violations))


class ModelParseError(ScmError):
    """Model file is not well-formed JSON."""

    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class ModelSchemaError(ScmError):
    """Model file parsed but a field has the wrong shape or value."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ExprError(ScmError):
    """Formula could not be parsed; ``position`` is a 0-based character offset."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class ExprSyntaxError(ExprError):
    pass


class UnknownSymbol(ExprError):
    pass


class UnknownFunction(ExprError):
    pass


class NonLinearModel(ScmError):
    pass


class Uncertifiable(ScmError):
    """Automated Lipschitz bounding does not apply to this model."""


class NumericalFailure(ScmError):
    pass


class SolverError(ScmError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class Diverged(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class SingularSystem(ScmError):
    pass


class DegenerateNoise(ScmError):
    """Noise cannot be recovered uniquely from an observation."""


class KappaNotContractive(ScmError):
    pass


class NotContractive(ScmError):
    """A contraction certificate with kappa < 1 was required but not available."""


class InvalidSpec(ScmError):
    pass
