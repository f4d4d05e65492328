"""Exception hierarchy.

Everything raised on bad data or an unfittable model derives from
:class:`ModelFreeError`; the CLI maps those to exit status 2.
"""

from __future__ import annotations


class ModelFreeError(ValueError):
    """Base class for data and model errors."""


# -- tabular ---------------------------------------------------------------


class EmptyFile(ModelFreeError):
    pass


class MissingHeader(ModelFreeError):
    pass


class NonNumericCell(ModelFreeError):
    def __init__(self, row: int, col: int, value: str = ""):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"non-numeric cell {value!r} at row {row}, column {col}")


class RaggedRow(ModelFreeError):
    def __init__(self, row: int, found: int, expected: int):
        self.row = row
        super().__init__(f"row {row} has {found} fields, header has {expected}")


class UnknownColumn(ModelFreeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown column {name!r}")


class DegenerateColumn(ModelFreeError):
    pass


# -- formula ---------------------------------------------------------------


class FormulaSyntaxError(ModelFreeError):
    def __init__(self, position: int, message: str):
        self.position = position
        super().__init__(f"formula syntax error at position {position}: {message}")


class DuplicateTerm(ModelFreeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"term {name!r} appears more than once")


class ResponseInTerms(ModelFreeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"response {name!r} cannot also be a regressor")


# -- fitting ---------------------------------------------------------------


class TooFewRows(ModelFreeError):
    pass


class RankDeficient(ModelFreeError):
    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = f" ({name})" if name else ""
        super().__init__(f"design is rank deficient: column {column}{label} is linearly dependent")


class NegativeWeight(ModelFreeError):
    pass


class DegenerateFit(ModelFreeError):
    pass


class SingularJ(ModelFreeError):
    pass


# -- variance --------------------------------------------------------------


class RankDeficientReplicate(ModelFreeError):
    def __init__(self, replicate: int, attempts: int):
        self.replicate = replicate
        self.attempts = attempts
        super().__init__(
            f"replicate {replicate}: resampled design rank deficient in {attempts} consecutive draws"
        )


class MTooLarge(ModelFreeError):
    pass


class DuplicateMethod(ModelFreeError):
    pass


# -- inference -------------------------------------------------------------


class BadLevel(ModelFreeError):
    pass


class SingularConstraintCov(ModelFreeError):
    pass


class RankDeficientR(ModelFreeError):
    pass


# -- diagnostics / plotting --------------------------------------------------


class ConstantRegressor(ModelFreeError):
    pass


class NonpositiveGamma(ModelFreeError):
    pass


class NoReplicates(ModelFreeError):
    pass


class DegenerateReplicates(ModelFreeError):
    pass


class EmptyPanel(ModelFreeError):
    pass


class NonFiniteCoordinate(ModelFreeError):
    pass
