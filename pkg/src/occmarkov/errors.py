"""Exception types shared across the package.

Every error carries a stable ``code`` so the command line front end can print a
machine-parseable first token.
"""


class OccupancyError(ValueError):
    code = "OccupancyError"


# metrics
class SupportMismatch(OccupancyError):
    code = "SupportMismatch"


class AbsoluteContinuityViolation(OccupancyError):
    code = "AbsoluteContinuityViolation"


class EmptySamples(OccupancyError):
    code = "EmptySamples"


class SampleOutOfRange(OccupancyError):
    code = "SampleOutOfRange"


# ingest
class IngestError(OccupancyError):
    code = "IngestError"

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MalformedRow(IngestError):
    code = "MalformedRow"


class UnparseableTimestamp(IngestError):
    code = "UnparseableTimestamp"


class NegativeValue(IngestError):
    code = "NegativeValue"


class EmptyInput(IngestError):
    code = "EmptyInput"


# chain
class TooFewCounts(OccupancyError):
    code = "TooFewCounts"


class EmptyTraces(OccupancyError):
    code = "EmptyTraces"


class NoSupportedStates(OccupancyError):
    code = "NoSupportedStates"


# simulate
class UnresolvedModel(OccupancyError):
    code = "UnresolvedModel"


# evaluate
class MixedZones(OccupancyError):
    code = "MixedZones"


class ShapeMismatch(OccupancyError):
    code = "ShapeMismatch"


class NoSojourns(OccupancyError):
    code = "NoSojourns"


# serialization / cli
class SchemaError(OccupancyError):
    code = "SchemaError"


class UnknownZone(OccupancyError):
    code = "UnknownZone"


class ConfigError(OccupancyError):
    code = "ConfigError"
