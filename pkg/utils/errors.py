class GiaugError(Exception):
    """Base class for every error raised by the toolkit"""


class CycleError(GiaugError):
    """Graph contains a directed cycle"""


class DimensionError(GiaugError):
    """Matrix, vector or ordering sizes disagree"""


class SizeError(GiaugError):
    """Graph is too large for a brute-force routine"""


class GraphValidationError(GiaugError):
    """Graph violates an ArchGraph invariant"""

    def __init__(self, message: str, violation: str = "", record_id: str = ""):
        super().__init__(message)
        self.violation = violation
        self.record_id = record_id


class VocabularyError(GiaugError):
    """Operation name is not part of the vocabulary"""


class CapacityError(GiaugError):
    """Graph has more vertices than the encoding scheme can hold"""


class ParseError(GiaugError):
    """Input file could not be parsed"""

    def __init__(self, message: str, line: int = 0):
        super().__init__(message)
        self.line = line


class EmptySplitError(GiaugError):
    """A train/test split would leave one side empty"""


class EmptyTrainError(GiaugError):
    """No training records were supplied"""


class WidthMismatchError(GiaugError):
    """Encoding width does not match the model's scheme"""


class VersionError(GiaugError):
    """Model file version or scheme fingerprint mismatch"""


class LengthError(GiaugError):
    """Metric inputs have unequal or too short lengths"""


class RangeError(GiaugError):
    """Argument outside its admissible range"""


class SamplingError(GiaugError):
    """Random sampling did not produce a valid graph within the retry budget"""


class RepairError(GiaugError):
    """Repair of an invalid offspring failed within the retry budget"""


class ConfigError(GiaugError):
    """Invalid configuration value or file"""
