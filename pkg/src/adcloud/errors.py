"""Exception hierarchy shared by all adcloud subsystems."""


class AdcloudError(Exception):
    """Base class for every error raised by this package."""


# --- binstream ---------------------------------------------------------------

class CodecError(AdcloudError):
    """Malformed field/record/frame encodings."""


class UnknownTag(CodecError):
    pass


class TruncatedField(CodecError):
    pass


class InvalidUtf8(CodecError):
    pass


class TruncatedRecord(CodecError):
    pass


class TruncatedFrame(CodecError):
    pass


class UnknownFrameKind(CodecError):
    pass


class RemoteError(AdcloudError):
    """An ERROR frame arrived; the message is the frame payload."""


class SinkIoError(AdcloudError):
    pass


class SpawnError(AdcloudError):
    pass


class ChildExited(AdcloudError):
    """Bridge child died before completing its output stream."""

    def __init__(self, code, message=""):
        self.code = code
        super().__init__(message or f"bridge child exited with code {code}")


class BridgeProtocolError(AdcloudError):
    pass


# --- storage -----------------------------------------------------------------

class StorageError(AdcloudError):
    pass


class NotFound(StorageError):
    pass


class BlockTooLarge(StorageError):
    pass


class StorageFull(StorageError):
    pass


class BackingIoError(StorageError):
    pass


# --- engine ------------------------------------------------------------------

class EngineError(AdcloudError):
    pass


class DuplicateName(EngineError):
    pass


class UnknownOp(EngineError):
    pass


class PortBindError(EngineError):
    pass


class ParseError(AdcloudError):
    pass


class EmptyInput(AdcloudError):
    pass


class MissingBlock(EngineError):
    pass


class TaskFailed(EngineError):
    def __init__(self, partition, cause):
        self.partition = partition
        self.cause = cause
        super().__init__(f"task for partition {partition} failed: {cause}")


class InvalidPlan(EngineError):
    pass


# --- simharness --------------------------------------------------------------

class TimestampRegression(ParseError):
    pass


class GoldenJoinError(AdcloudError):
    pass


# --- trainer -----------------------------------------------------------------

class TrainerError(AdcloudError):
    pass


class DimensionMismatch(TrainerError):
    pass


class NonFiniteGradient(TrainerError):
    pass


class StaleIteration(TrainerError):
    pass


class MissingUpdate(TrainerError):
    pass


# --- mapgen ------------------------------------------------------------------

class MapgenError(AdcloudError):
    pass


class NonPositiveDt(MapgenError):
    pass


class StaleGps(MapgenError):
    pass


class NoCorrespondences(MapgenError):
    pass


class DegenerateGeometry(MapgenError):
    pass


class TimeAlignmentError(MapgenError):
    pass


class MalformedLabelSpec(MapgenError):
    pass


# --- cli ---------------------------------------------------------------------

class ConfigError(AdcloudError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
