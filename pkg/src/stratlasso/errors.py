"""Exception types raised across the package."""


class StratLassoError(Exception):
    """Base class for all package errors."""


class DataError(StratLassoError, ValueError):
    """Invalid or degenerate input data."""


class ZeroVarianceColumn(DataError):
    def __init__(self, name):
        super().__init__(f"column {name!r} has zero variance")
        self.name = name


class UnknownGroup(DataError):
    def __init__(self, label):
        super().__init__(f"unknown group label {label!r}")
        self.label = label


class EmptyStratum(DataError):
    def __init__(self, group, outcome):
        super().__init__(
            f"stratum (group={group!r}, y={outcome}) is empty; "
            "every group needs both outcome classes")
        self.group = group
        self.outcome = outcome


class TooFewRows(DataError):
    pass


class DimensionMismatch(StratLassoError, ValueError):
    pass


class NonBinaryOutcome(DataError):
    pass


class DegenerateGroup(DataError):
    def __init__(self, label):
        super().__init__(f"group {label!r} lacks one of the outcome classes")
        self.label = label


class DegenerateFold(DataError):
    pass


class NoPenalizedFeatures(StratLassoError, ValueError):
    pass


class NoCandidates(StratLassoError, ValueError):
    pass


class Diverged(StratLassoError, RuntimeError):
    """Solver failed to reach the requested tolerance."""


class SingleClass(StratLassoError, ValueError):
    pass


class MissingBaseline(StratLassoError, KeyError):
    pass


class InvalidConfig(StratLassoError, ValueError):
    pass


class UnknownPreset(InvalidConfig):
    def __init__(self, name):
        super().__init__(f"unknown preset {name!r}")
        self.name = name
