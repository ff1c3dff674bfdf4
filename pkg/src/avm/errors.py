"""Exception hierarchy. ``category`` is the machine-readable tag the CLI prints."""


class AvmError(Exception):
    category = "pipeline"


class ParseError(AvmError, ValueError):
    category = "parse"


class DuplicateNameError(ParseError):
    category = "parse"


class UnknownCategoryError(AvmError, ValueError):
    category = "parse"


class InvariantViolationError(ParseError):
    category = "parse"


class TooFewRecordsError(AvmError, ValueError):
    pass


class CoverageError(AvmError):
    """A training record could not be placed in any OMI zone."""


class MissingFeatureError(AvmError):
    pass


class DegenerateInputError(AvmError, ValueError):
    pass


class SchemaMismatchError(AvmError, ValueError):
    pass


class UnsupportedKindError(AvmError, ValueError):
    pass


class EmptyTestSetError(AvmError, ValueError):
    pass


class GeometryError(AvmError):
    pass


class ConfigError(AvmError, ValueError):
    category = "configuration"
