class KerrflowError(Exception):
    exit_code = 1


class ConfigurationError(KerrflowError, ValueError):
    """Invalid input: schema, ranges, or geometric preconditions."""
    exit_code = 2


class NumericalError(KerrflowError):
    exit_code = 1


class GeometryError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class SolverDivergence(NumericalError):
    pass


class IterationLimit(NumericalError):
    pass


class UnconvergedField(NumericalError):
    pass


class ExtractionError(NumericalError):
    pass


class FlowError(NumericalError):
    pass


class SpectralError(NumericalError):
    pass
