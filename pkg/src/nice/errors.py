"""Exception types shared across the package."""


class NiceError(Exception):
    """Base class for all package errors."""


class MissingColumn(NiceError):
    pass


class NonNumericCell(NiceError):
    def __init__(self, row: int, col: str):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell at data row {row}, column {col!r}")


class BinaryViolation(NiceError):
    pass


class FewerThanTwoEnvironments(NiceError):
    pass


class NotOrthogonal(NiceError):
    pass


class DimensionMismatch(NiceError):
    pass


class NotThreeEnvironments(NiceError):
    pass


class ScaleCountMismatch(NiceError):
    pass


class BinaryYRequired(NiceError):
    pass


class NoTreatedUnits(NiceError):
    pass


class NoGroundTruth(NiceError):
    pass


class IndexOutOfRange(NiceError):
    pass


class DivergenceDetected(NiceError):
    pass


class SingularDesign(NiceError):
    pass


class TooManySubsets(NiceError):
    pass


class ZeroMassCondition(NiceError):
    pass
