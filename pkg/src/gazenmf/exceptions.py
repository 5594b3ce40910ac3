"""Exception hierarchy.

Every error raised by the pipeline derives from :class:`GazeNMFError`. The three
intermediate classes map onto CLI exit codes (config 2, data 3, numerical 4).
"""


class GazeNMFError(Exception):
    exit_code = 1


class ConfigError(GazeNMFError, ValueError):
    exit_code = 2


class DataError(GazeNMFError, ValueError):
    exit_code = 3


class NumericalError(GazeNMFError, ArithmeticError):
    exit_code = 4


# ingest
class MissingGazeFile(DataError):
    pass


class NoFrames(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MalformedCsv(DataError):
    def __init__(self, line, message="malformed row"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NonMonotonicTimestamps(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class TruncatedPayload(DataError):
    pass


# patchgrid / components
class EmptyRecording(DataError):
    def __init__(self, recording_id):
        self.recording_id = recording_id
        super().__init__(f"recording {recording_id!r} contributed zero fixations")


class LengthMismatch(DataError):
    pass


class MetaLengthMismatch(DataError):
    pass


class InactiveRecording(DataError):
    pass


class KMismatch(DataError):
    pass


# caches / io
class CacheMismatch(DataError):
    pass


class CacheFormatError(DataError):
    pass


class IoFailure(DataError):
    def __init__(self, path, message="i/o failure"):
        self.path = path
        super().__init__(f"{message}: {path}")


# nmf
class RankOutOfRange(NumericalError):
    pass


class DegenerateInput(NumericalError):
    pass


class AllZeroTemporal(NumericalError):
    pass
