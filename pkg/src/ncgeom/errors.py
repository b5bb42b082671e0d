"""Exception and warning types shared across the package."""


class NCGeomError(Exception):
    """Base class for computation errors (CLI exit code 1)."""


class InputError(NCGeomError, ValueError):
    pass


class ParityError(InputError):
    pass


class MetricError(InputError):
    pass


class ConfigError(NCGeomError):
    pass


class EllipticityError(NCGeomError):
    pass


class SingularAMap(NCGeomError):
    pass


class NonPositiveEta(NCGeomError):
    pass


class QuadratureDivergence(NCGeomError):
    pass


class DimensionCapExceeded(NCGeomError):
    pass


class ThresholdAmbiguity(NCGeomError):
    pass


class DegenerateBranch(NCGeomError):
    pass


class LineSearchStall(NCGeomError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class SchemaError(Exception):
    """Configuration rejected by validation (CLI exit code 2).

    ``errors`` is a list of ``(json_pointer, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        text = "; ".join(f"{p or '/'}: {m}" for p, m in self.errors)
        super().__init__(text)


class BranchAnomalyWarning(UserWarning):
    pass


class WindowWarning(UserWarning):
    pass
