"""Exception hierarchy.

Three families, matching the CLI exit-code contract: configuration
problems (exit 2), data/shape problems (exit 3), and training
divergence (exit 4).
"""


class MicidentError(Exception):
    """Base class for all package errors."""


class ConfigError(MicidentError):
    """Invalid configuration or parameter combination. CLI exit code 2."""


class DataError(MicidentError):
    """Invalid input data, shapes, or files. CLI exit code 3."""


class TrainingError(MicidentError):
    """Training failed to produce a usable model. CLI exit code 4."""


# -- configuration ------------------------------------------------------

class BadConfig(ConfigError):
    pass


class StatsMismatch(ConfigError):
    """Normalization stats do not match the fingerprint variant/length."""


# -- data ----------------------------------------------------------------

class BadSampleRate(DataError):
    pass


class SignalTooShort(DataError):
    pass


class RecordingTooShort(DataError):
    """Spectrogram has fewer frames than one patch side."""


class ShapeMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class SilentInput(DataError):
    """Operation needs a signal with nonzero power."""


class TooFewFrames(DataError):
    pass


class FrameMismatch(DataError):
    """Frame-aligned inputs disagree on frame count."""


class WrongOrigin(DataError):
    """Spectrogram origin tag is not the one the operation expects."""


class MissingFile(DataError):
    pass


class BadWav(DataError):
    pass


class MissingMetadata(DataError):
    pass


class DeviceMissingFromSplit(DataError):
    """No speaker split keeps every device on both sides."""


class MissingDenoiser(DataError):
    """Denoised regime requested without a trained denoiser."""


class EmptyDataset(DataError):
    pass


class SingleClass(DataError):
    pass


class EmptyTestSet(DataError):
    pass


class VariantMismatch(DataError):
    pass


class EmptyComponent(DataError):
    """A mixture component received no effective training weight."""


# -- training ------------------------------------------------------------

class DivergedLoss(TrainingError):
    """Validation loss became NaN/inf during training."""


class DegenerateComponent(TrainingError):
    """A mixture component collapsed and could not be re-seeded."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, TrainingError):
        return EXIT_TRAINING
    if isinstance(exc, DataError):
        return EXIT_DATA
    return 1
