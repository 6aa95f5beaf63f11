"""Exception hierarchy shared by all modules."""


class HeatstabError(Exception):
    """Base class for numerical and configuration failures."""


class NoRootInBracket(HeatstabError):
    pass


class DegenerateNormalization(HeatstabError):
    pass


class IndexOutOfRange(HeatstabError, IndexError):
    pass


class LiftingError(HeatstabError):
    pass


class SingularSystem(LiftingError):
    pass


class GridTooCoarse(LiftingError):
    pass


class ResonantGamma(LiftingError):
    pass


class AdmissibilityExhausted(HeatstabError):
    pass


class SingularSum(HeatstabError):
    pass


class FormMismatch(HeatstabError):
    pass


class LinearSolveFailure(HeatstabError):
    pass


class InsufficientData(HeatstabError):
    pass


class ConfigInvalid(HeatstabError):
    """Raised for bad configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
