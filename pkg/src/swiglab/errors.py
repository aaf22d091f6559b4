"""Exceptions shared by the simulation and estimation layers."""


class SwiglabError(ValueError):
    pass


class InvalidSpec(SwiglabError):
    pass


class PositivityViolation(SwiglabError):
    """An identification formula needs a cell that has (near) zero mass."""

    def __init__(self, message: str, cell: tuple | None = None):
        self.cell = cell
        super().__init__(message)


class InvalidEstimand(SwiglabError):
    pass


class EmptyDataset(SwiglabError):
    pass


class NoParticipants(SwiglabError):
    pass


class NoNonParticipants(SwiglabError):
    pass


class NonfiniteWeight(SwiglabError):
    pass


class MismatchedEstimands(SwiglabError):
    pass


class DesignError(SwiglabError):
    """Estimand not available under the sampling design of the data."""
