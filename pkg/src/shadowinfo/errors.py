"""Exception hierarchy shared across the package."""


class ShadowInfoError(Exception):
    pass


class ValidationError(ShadowInfoError, ValueError):
    """Invalid model input (space, process, program or file contents)."""


class BadProbabilities(ValidationError):
    pass


class NonNestedPartition(ValidationError):
    pass


class OrphanScenario(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonpositiveScale(ValidationError):
    pass


class EmptyPieceList(ValidationError):
    pass


class EmptyAtom(ValidationError):
    pass


class ParseError(ShadowInfoError):
    """A problem file could not be decoded; ``location`` names the field."""

    def __init__(self, message, location=None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class ImproperFunction(ShadowInfoError):
    """A polyhedral function is -inf somewhere or has empty domain."""


class NotInDomain(ShadowInfoError):
    pass


class EmptySubdifferential(NotInDomain):
    pass


class ImproperRecursion(ImproperFunction):
    def __init__(self, stage, detail=""):
        super().__init__(f"recursion became improper at stage {stage}" + (f": {detail}" if detail else ""))
        self.stage = stage


class LpNumericalFailure(ShadowInfoError):
    pass


class SampleEvaluationFailure(ShadowInfoError):
    pass


class Unattained(ShadowInfoError):
    pass
