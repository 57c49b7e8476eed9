"""Exception hierarchy shared by all modules."""


class EdaPlannerError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EdaPlannerError):
    """Malformed input file (AIGER, Verilog, graph dump)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedConstructError(ParseError):
    """Input uses a construct outside the supported structural subset."""


class ValidationError(EdaPlannerError):
    """Structurally well-formed input that violates a semantic rule."""


class ConfigurationError(EdaPlannerError):
    """Inconsistent or incomplete configuration (missing prices, mixed
    applications, absent models)."""


class ContractViolation(EdaPlannerError):
    """A caller broke a documented precondition (bad shapes, non-positive
    inputs, instance too large for enumeration)."""


class StateError(EdaPlannerError):
    """Operation requires state that is not present (untrained model,
    infeasible plan)."""


class ModelFormatError(EdaPlannerError):
    """Model file is corrupt, truncated, or has an unsupported version."""
