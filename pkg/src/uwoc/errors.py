"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """A parameter combination is outside the model's domain of validity."""


class InfeasibleError(RuntimeError):
    """A constructive search or allocation cannot satisfy its constraints."""


class GeometryError(ValueError):
    """Node/anchor geometry is degenerate for the requested solve."""


class AmbiguityError(RuntimeError):
    """A nonlinear solve admits several solutions of comparable quality.

    ``candidates`` holds the distinct near-optimal solutions found.
    """

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)
