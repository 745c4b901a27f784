"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``"expr.SyntaxError"`` and so
on) so the command line can report failures uniformly.
"""


class EnsembleError(Exception):
    """Base class for all package errors."""

    module = "ensemblectl"

    @property
    def code(self):
        return f"{self.module}.{type(self).__name__}"


# expr ---------------------------------------------------------------------


class ExprError(EnsembleError):
    module = "expr"


class ExprSyntaxError(ExprError):
    """Malformed expression text."""

    def __init__(self, message, position, expected=None):
        self.position = position
        self.expected = expected
        detail = f"{message} at offset {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)

    @property
    def code(self):
        return "expr.SyntaxError"


class UnknownIdentifier(ExprError):
    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r}")


class ParamIndexOutOfRange(ExprError):
    def __init__(self, name, index, param_dim):
        self.index = index
        self.param_dim = param_dim
        super().__init__(
            f"{name!r} refers to parameter {index} but only {param_dim} declared")


class NonFiniteResult(ExprError):
    pass


# model / transition ---------------------------------------------------------


class ModelError(EnsembleError):
    module = "model"


class InvalidSystem(ModelError):
    pass


class InvalidBounds(ModelError):
    pass


class UnknownExample(ModelError):
    pass


class NonFiniteEntry(ModelError):
    def __init__(self, matrix, row, col, t, beta):
        self.matrix = matrix
        self.row = row
        self.col = col
        self.t = t
        self.beta = beta
        super().__init__(
            f"{matrix}[{row},{col}] is not finite at t={t!r}, beta={list(beta)!r}")


# synthesis ------------------------------------------------------------------


class SynthesisError(EnsembleError):
    module = "synthesis"


class OverdeterminedGrid(SynthesisError):
    pass


class DimensionMismatch(SynthesisError):
    pass


class ConvergenceFailure(SynthesisError):
    pass


class NoUsableRank(SynthesisError):
    pass


class RankNotSelected(SynthesisError):
    pass


# sde / stats ----------------------------------------------------------------


class SimulationError(EnsembleError):
    module = "sde"


class NonFiniteState(SimulationError):
    pass


class InvalidStep(SimulationError):
    pass


class StatsError(EnsembleError):
    module = "stats"


class InsufficientTrials(StatsError):
    pass


class ConfigError(EnsembleError):
    module = "cli"
