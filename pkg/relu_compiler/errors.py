# -*- coding: utf-8 -*-
"""Exception hierarchy. The CLI maps the two families to exit codes 2 and 3."""


class CompilerError(Exception):
    """Base class; ``name`` is what the CLI prints."""

    @property
    def name(self):
        return type(self).__name__


class InputError(CompilerError):
    """Malformed documents, flags or data (exit 2)."""


class ConstructionError(CompilerError):
    """A compiler could not honour its contract (exit 3)."""


class ParseError(InputError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class InvariantViolation(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class InconsistentDims(InputError):
    pass


class OverlappingCells(InputError):
    pass


class UnsupportedActivation(InputError):
    pass


class LabelMismatch(InputError):
    pass


class NotThreeLayer(InputError):
    pass


class OnHyperplane(ConstructionError):
    pass


class ZeroNormal(ConstructionError):
    pass


class DegenerateData(ConstructionError):
    pass


class SingularBundle(ConstructionError):
    pass


class BundleFailure(ConstructionError):
    pass


class CalibrationOnSplit(ConstructionError):
    pass


class AmbiguousForest(ConstructionError):
    pass


class ParamsTooLoose(ConstructionError):
    pass


class PlateauGainFailure(ConstructionError):
    pass


class EmptyDomain(ConstructionError):
    pass


class DomainMismatch(ConstructionError):
    pass
