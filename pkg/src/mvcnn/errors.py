"""Exception types raised across the package.

Everything derives from MvcnnError so callers can catch the whole family;
the CLI maps MvcnnError to exit code 1.
"""


class MvcnnError(Exception):
    """Base class for all package errors."""


# --- audio ingestion / framing ---

class MalformedWav(MvcnnError):
    """WAV file has a broken or truncated RIFF structure."""


class UnsupportedFormat(MvcnnError):
    """WAV file is not 16-bit mono PCM."""


class EmptyInput(MvcnnError):
    """An operation that needs at least one sample got none."""


class InvalidOverlap(MvcnnError):
    """Segmentation overlap fraction outside [0, 1)."""


# --- spectral features ---

class NonPowerOfTwo(MvcnnError):
    """Frame length must be a power of two for the FFT."""


class InvalidLength(MvcnnError):
    """Requested feature length is not in [1, bin count]."""


class EmptyTrainingSet(MvcnnError):
    """Normalizer fit called with no feature vectors."""


class LengthMismatch(MvcnnError):
    """Two sequences that must agree in length do not."""


class InvalidCutoff(MvcnnError):
    """Filter cutoff outside (0, Nyquist)."""


class ZeroPowerSignal(MvcnnError):
    """Signal power is zero, so SNR is undefined."""


class InvalidCounts(MvcnnError):
    """MFCC coefficient count exceeds filter count."""


# --- tensor / network ---

class ShapeMismatch(MvcnnError):
    """Tensor shapes incompatible for the requested operation."""


class ChannelMismatch(MvcnnError):
    """Convolution input channels do not match the filter bank."""


class InputTooShort(MvcnnError):
    """Pooling input shorter than the pooling window."""


class InvalidProbability(MvcnnError):
    """Dropout keep probability outside (0, 1]."""


class NotOneHot(MvcnnError):
    """Label tensor is not a valid one-hot encoding."""


class InvalidConfig(MvcnnError):
    """Model configuration cannot produce a valid architecture."""


class EmptyDataset(MvcnnError):
    """Training or evaluation dataset is empty."""


class LabelOutOfRange(MvcnnError):
    """A label falls outside 0..n_classes-1."""


class BadMagic(MvcnnError):
    """Serialized blob does not start with the expected magic bytes."""


class VersionMismatch(MvcnnError):
    """Serialized blob carries an unsupported format version."""


# --- evaluation harness ---

class TooFewSamples(MvcnnError):
    """Dataset smaller than the number of cross-validation folds."""


class EmptyMatrix(MvcnnError):
    """Confusion matrix has no counts."""


class InvalidSpec(MvcnnError):
    """Synthetic dataset specification is inconsistent."""


# --- simulator / protocol ---

class CrcMismatch(MvcnnError):
    """Frame checksum does not match its contents."""


class Truncated(MvcnnError):
    """Byte frame is shorter than its declared layout."""


class InvalidScenario(MvcnnError):
    """Simulation scenario is inconsistent or unparseable."""
