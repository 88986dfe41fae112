"""Exception types shared across the suite."""


class ReadBenchError(Exception):
    """Base class for all readbench errors."""


class EmptySampleSet(ReadBenchError):
    """Latency aggregation was asked to summarize zero samples."""


class InvalidInterval(ReadBenchError):
    """A time interval was zero or negative where a positive one is required."""


class ClockError(ReadBenchError):
    """A CPU-time or wall-clock reading went backwards."""


class PrepareError(ReadBenchError):
    """Test-file preparation failed (disk space, permissions, bad size)."""


class VerifyError(ReadBenchError):
    """Read data did not match the expected fill pattern."""

    def __init__(self, offset: int, message: str | None = None):
        self.offset = offset
        super().__init__(message or f"data mismatch at byte offset {offset}")


class IoError(ReadBenchError):
    """A read returned fewer bytes than requested or failed outright."""


class AlignmentError(ReadBenchError):
    """Offset, length, or buffer violates direct-I/O alignment rules."""


class Backpressure(ReadBenchError):
    """The simulated device's submission queue exceeded its bound."""


class EngineUnsupported(ReadBenchError):
    """The requested engine or engine feature is unavailable on this system."""

    def __init__(self, feature: str, detail: str = ""):
        self.feature = feature
        super().__init__(f"unsupported: {feature}" + (f" ({detail})" if detail else ""))


class AbortedRun(ReadBenchError):
    """A worker failed; the run was aborted with partial results."""


class NoSuchPreset(ReadBenchError):
    """Unknown preset table or device model name."""


class LabelParseError(ReadBenchError):
    """A configuration label string does not match the label grammar."""

    def __init__(self, text: str, position: int, message: str):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position} in {text!r}")
