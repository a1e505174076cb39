"""Exception types shared across the package."""


class McpError(Exception):
    """Base class for all errors raised by mcp_mimo."""


class GaussianNotEnumerable(McpError):
    pass


class DimensionMismatch(McpError, ValueError):
    pass


class NonFiniteDeterminant(McpError, ArithmeticError):
    pass


class SingularMatrix(McpError, ArithmeticError):
    pass


class IntegratorBudgetTooSmall(McpError, ValueError):
    pass


class QuadratureInfeasible(McpError, ValueError):
    """Tensor quadrature requested over too many effective real dimensions."""


class ZeroPowerCase(McpError, ValueError):
    pass


class ZeroUpdate(McpError, ArithmeticError):
    pass


class ZeroDmin(McpError, ArithmeticError):
    pass


class NoConvergence(McpError):
    """Iteration budget exhausted. ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoImprovement(McpError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(McpError, ValueError):
    """Invalid experiment configuration; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
