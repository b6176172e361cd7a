"""Exception hierarchy shared across the package."""


class SleepNetError(Exception):
    pass


class WavFormatError(SleepNetError):
    """Malformed or truncated RIFF/WAVE container."""


class UnsupportedFormatError(SleepNetError):
    """Valid WAV, but a codec or bit depth we do not decode."""


class UnsupportedRateError(SleepNetError):
    pass


class ManifestError(SleepNetError):
    pass


class ClipTooShortError(SleepNetError):
    pass


class ShapeError(SleepNetError, ValueError):
    pass


class ConfigError(SleepNetError, ValueError):
    pass


class NumericError(SleepNetError, FloatingPointError):
    pass


class StateError(SleepNetError, RuntimeError):
    pass


class ModelFormatError(SleepNetError):
    pass


class CorruptModelError(ModelFormatError):
    pass


class SpecError(SleepNetError, ValueError):
    pass


class MetricUndefinedError(SleepNetError, ValueError):
    pass
