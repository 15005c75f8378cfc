from typing import Optional


class CartanError(Exception):
    """Base error for the package"""

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.details = details or {}


class GeometryError(CartanError):
    """Invalid geometry input (exit code 2)"""


class AlgebraDefinitionError(GeometryError):
    """Structure constants violate the Lie algebra axioms"""


class MetricParseError(GeometryError):
    """Metric expression text does not follow the grammar"""

    def __init__(self, message: str, position: int, line: int = 1, column: int = 1):
        super().__init__(
            f"{message} (line {line}, column {column})",
            {"position": position, "line": line, "column": column},
        )
        self.position = position
        self.line = line
        self.column = column


class MetricDefinitionError(GeometryError):
    """Metric is asymmetric, mis-sized or not positive definite"""


class SingularFrameError(GeometryError):
    """Connection matrix is singular or too badly conditioned"""


class NumericalError(CartanError):
    """A computation could not be carried out (exit code 3)"""


class DomainExitError(NumericalError):
    """Trajectory left the chart domain"""

    def __init__(self, message: str, exit_time: float):
        super().__init__(message, {"exit_time": exit_time})
        self.exit_time = exit_time


class IntegrationError(NumericalError):
    """Step size underflow or step budget exhausted"""


class LogConvergenceError(NumericalError):
    """Shooting for the bundle logarithm did not converge"""


class JetStepError(NumericalError):
    """Nested differences could not be evaluated"""


class NotStabilizedError(NumericalError):
    """Killing generator spaces did not stabilize up to the requested order"""

    def __init__(self, m_max: int):
        super().__init__(f"Kill^m did not stabilize up to m = {m_max}", {"m_max": m_max})
        self.m_max = m_max


class IllConditionedFitError(NumericalError):
    """Vandermonde system of a Taylor fit is ill conditioned"""


class NotRelatedError(NumericalError):
    """Points are not related to the requested order"""


class InfeasibleGeneratorError(NumericalError):
    """Vector is not a Killing generator at the base point"""
