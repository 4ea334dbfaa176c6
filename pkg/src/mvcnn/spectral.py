"""Frequency-domain feature extraction and noise tooling.

FFT magnitude spectra, bin-averaged feature vectors, log/z-score
normalization, a Butterworth high-pass for wind rejection, MFCCs for
the baseline classifiers, and SNR-controlled Gaussian noise injection.

The FFT is an iterative radix-2 transform evaluated over whole frame
batches at once; no external DSP library is used.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioClip, Frame, hamming_coefficients
from .errors import (
    BadMagic,
    EmptyTrainingSet,
    InvalidCounts,
    InvalidCutoff,
    InvalidLength,
    LengthMismatch,
    NonPowerOfTwo,
    ZeroPowerSignal,
)

NORM_MAGIC = b"NRM1"
STD_FLOOR = 1e-8
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Magnitudes of FFT bins 0..N/2 of a real frame of length N."""

    bins: np.ndarray
    source_len: int
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=np.float64))
        if len(self.bins) != self.source_len // 2 + 1:
            raise ValueError("bin count must be source_len/2 + 1")


# --- FFT ---

@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft(x: np.ndarray) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along the last axis (power-of-two only)."""
    n = x.shape[-1]
    a = np.ascontiguousarray(np.asarray(x, dtype=np.complex128)[..., _bit_reversal(n)])
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(a.shape[:-1] + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * twiddle
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return a


def _check_power_of_two(n: int):
    if n < 1 or n & (n - 1):
        raise NonPowerOfTwo(f"frame length {n} is not a power of two")


def fft_magnitude(frame: Frame, sample_rate: int = 24000) -> Spectrum:
    """Magnitude spectrum of a (windowed) frame, bins 0..N/2 inclusive.

    Raises:
        NonPowerOfTwo: frame length unsuitable for the radix-2 transform.
    """
    n = len(frame.values)
    _check_power_of_two(n)
    full = _fft(frame.values)
    return Spectrum(np.abs(full[: n // 2 + 1]), n, sample_rate)


def power_spectra(frames: np.ndarray) -> np.ndarray:
    """Half-spectrum |X[k]|^2 for a [n_frames, N] batch of frames."""
    n = frames.shape[-1]
    _check_power_of_two(n)
    full = _fft(frames)
    half = full[..., : n // 2 + 1]
    return (half * half.conj()).real


# --- feature vectors ---

def _group_starts(count: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    base, rem = divmod(count, L)
    sizes = np.full(L, base, dtype=np.intp)
    sizes[:rem] += 1
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return starts, sizes


def bin_average(spec: Spectrum, L: int) -> np.ndarray:
    """Compress a spectrum to L values by averaging contiguous bin groups.

    Bins are split into L groups as equal as possible (the first
    count mod L groups get one extra bin); the output is each group's mean.

    Raises:
        InvalidLength: L outside [1, bin count].
    """
    count = len(spec.bins)
    if not 1 <= L <= count:
        raise InvalidLength(f"L must be in [1, {count}], got {L}")
    starts, sizes = _group_starts(count, L)
    return np.add.reduceat(spec.bins, starts) / sizes


def spectrum_features(frames: list[Frame], feature_len: int = 512) -> np.ndarray:
    """Hamming-window, FFT and bin-average a list of frames in one batch.

    Returns a [n_frames, feature_len] array of non-negative magnitudes
    (pre-normalization). All frames must share one power-of-two length.
    """
    if not frames:
        return np.empty((0, feature_len))
    n = len(frames[0].values)
    mat = np.stack([f.values for f in frames]) * hamming_coefficients(n)
    mags = np.sqrt(power_spectra(mat))
    count = mags.shape[1]
    if not 1 <= feature_len <= count:
        raise InvalidLength(f"feature_len must be in [1, {count}], got {feature_len}")
    starts, sizes = _group_starts(count, feature_len)
    return np.add.reduceat(mags, starts, axis=1) / sizes


# --- normalization ---

@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean/std of log(1+x), fit on a training set."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != self.std.shape:
            raise LengthMismatch("mean and std must have equal length")

    def to_bytes(self) -> bytes:
        return (
            NORM_MAGIC
            + struct.pack("<I", len(self.mean))
            + self.mean.astype("<f8").tobytes()
            + self.std.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "NormStats":
        if blob[:4] != NORM_MAGIC:
            raise BadMagic("not a NRM1 block")
        (length,) = struct.unpack_from("<I", blob, 4)
        need = 8 + 16 * length
        if len(blob) < need:
            raise LengthMismatch("NRM1 block shorter than declared")
        mean = np.frombuffer(blob, dtype="<f8", count=length, offset=8)
        std = np.frombuffer(blob, dtype="<f8", count=length, offset=8 + 8 * length)
        return cls(mean.copy(), std.copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def identity(cls, length: int) -> "NormStats":
        return cls(np.zeros(length), np.ones(length))


def fit_normalizer(training_features: np.ndarray) -> NormStats:
    """Fit per-dimension mean/std of log(1+x) over a [n, L] feature matrix.

    Std is floored at 1e-8 so constant dimensions normalize to zero.

    Raises:
        EmptyTrainingSet: no rows to fit on.
    """
    feats = np.asarray(training_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise EmptyTrainingSet("need a nonempty [n, L] feature matrix")
    logged = np.log1p(feats)
    mean = logged.mean(axis=0)
    std = np.maximum(logged.std(axis=0), STD_FLOOR)
    return NormStats(mean, std)


def normalize(features: np.ndarray, stats: NormStats) -> np.ndarray:
    """Apply (log(1+x) - mean) / std per dimension. Accepts [L] or [n, L]."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[-1] != len(stats.mean):
        raise LengthMismatch(
            f"feature length {feats.shape[-1]} != stats length {len(stats.mean)}"
        )
    return (np.log1p(feats) - stats.mean) / stats.std


# --- Butterworth high-pass ---

def design_highpass(cutoff_hz: float, sample_rate: int, order: int = 4) -> np.ndarray:
    """Design an even-order Butterworth high-pass as cascaded biquads.

    Analog prototype poles are frequency-warped to the bilinear-transform
    cutoff and mapped pairwise to second-order sections. Returns an
    [order/2, 6] array of (b0, b1, b2, a0, a1, a2) rows with a0 = 1.

    Raises:
        InvalidCutoff: cutoff outside (0, Nyquist).
    """
    if not 0 < cutoff_hz < sample_rate / 2:
        raise InvalidCutoff(
            f"cutoff {cutoff_hz} Hz outside (0, {sample_rate / 2}) at fs={sample_rate}"
        )
    if order < 2 or order % 2:
        raise ValueError(f"order must be a positive even integer, got {order}")

    warped = np.tan(np.pi * cutoff_hz / sample_rate)
    sections = np.empty((order // 2, 6))
    for i in range(order // 2):
        # low-pass prototype pole in the upper-left quadrant, then s -> w/s
        angle = np.pi * (2 * (i + 1) + order - 1) / (2 * order)
        pole_hp = warped / np.exp(1j * angle)
        b1 = -2.0 * pole_hp.real
        b0 = abs(pole_hp) ** 2
        a0 = 1.0 + b1 + b0
        sections[i] = [
            1.0 / a0,
            -2.0 / a0,
            1.0 / a0,
            1.0,
            (2.0 * b0 - 2.0) / a0,
            (1.0 - b1 + b0) / a0,
        ]
    return sections


def sos_response(sections: np.ndarray, freq_hz: float, sample_rate: int) -> complex:
    """Frequency response of a biquad cascade at a single frequency."""
    z = np.exp(-2j * np.pi * freq_hz / sample_rate)
    resp = 1.0 + 0j
    for b0, b1, b2, _, a1, a2 in sections:
        resp *= (b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z)
    return resp


def _sosfilt(sections: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a biquad cascade (transposed direct form II, zero initial state)."""
    y = np.array(x, dtype=np.float64)
    for b0, b1, b2, _, a1, a2 in sections:
        z1 = 0.0
        z2 = 0.0
        for i in range(len(y)):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return y


def highpass_butterworth(
    clip: AudioClip, cutoff_hz: float = 200.0, order: int = 4
) -> AudioClip:
    """High-pass filter a clip through cascaded Butterworth biquads."""
    sections = design_highpass(cutoff_hz, clip.sample_rate, order)
    return AudioClip(_sosfilt(sections, clip.samples), clip.sample_rate)


# --- noise injection ---

def add_noise_snr(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add i.i.d. Gaussian noise scaled to a target SNR in dB.

    Noise variance is P_signal / 10^(snr_db/10) with P_signal the mean
    squared sample. Deterministic per seed. The output is not re-clipped
    to [-1, 1].

    Raises:
        ZeroPowerSignal: the clip has no signal power.
    """
    power = float(np.mean(clip.samples**2))
    if power == 0.0:
        raise ZeroPowerSignal("cannot set an SNR against a zero-power signal")
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.normal(0.0, sigma, len(clip.samples))
    return AudioClip(clip.samples + noise, clip.sample_rate)


def measure_snr(signal: AudioClip, noise: AudioClip) -> float:
    """10*log10 of signal power over noise power.

    Raises:
        LengthMismatch: clips differ in length.
        ZeroPowerSignal: either clip has zero power.
    """
    if len(signal.samples) != len(noise.samples):
        raise LengthMismatch("signal and noise must have equal length")
    p_sig = float(np.mean(signal.samples**2))
    p_noise = float(np.mean(noise.samples**2))
    if p_sig == 0.0 or p_noise == 0.0:
        raise ZeroPowerSignal("SNR undefined for zero-power input")
    return 10.0 * np.log10(p_sig / p_noise)


# --- MFCC ---

def mel_scale(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz) / 700.0)


def inverse_mel(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters over bins 0..n_fft/2, spanning 0 Hz..Nyquist.

    Returns an [n_filters, n_fft/2 + 1] weight matrix. Filter i rises
    from mel point i to i+1 and falls to i+2, evaluated at exact bin
    frequencies (no integer-bin snapping).
    """
    edges_hz = inverse_mel(np.linspace(0.0, mel_scale(sample_rate / 2), n_filters + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    upper = edges_hz[2:, None]
    rising = (bin_freqs - lower) / (center - lower)
    falling = (upper - bin_freqs) / (upper - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, rows indexed by coefficient."""
    i = np.arange(n)
    mat = np.cos(np.pi * np.outer(i, 2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


def mfcc(
    frame: Frame,
    sample_rate: int = 24000,
    n_filters: int = 26,
    n_coeffs: int = 13,
) -> np.ndarray:
    """Mel-frequency cepstral coefficients of a Hamming-windowed frame.

    Power spectrum -> triangular mel filterbank -> log (floored at
    1e-10) -> orthonormal DCT-II, first n_coeffs coefficients.

    Raises:
        NonPowerOfTwo: frame length unsuitable for the FFT.
        InvalidCounts: n_coeffs exceeds n_filters.
    """
    if n_coeffs > n_filters:
        raise InvalidCounts(f"n_coeffs {n_coeffs} > n_filters {n_filters}")
    return mfcc_features(
        frame.values[None, :], sample_rate, n_filters, n_coeffs
    )[0]


def mfcc_features(
    frames: np.ndarray,
    sample_rate: int = 24000,
    n_filters: int = 26,
    n_coeffs: int = 13,
) -> np.ndarray:
    """Batched MFCC over a [n_frames, N] matrix of windowed frames."""
    if n_coeffs > n_filters:
        raise InvalidCounts(f"n_coeffs {n_coeffs} > n_filters {n_filters}")
    frames = np.asarray(frames, dtype=np.float64)
    power = power_spectra(frames)
    fbank = mel_filterbank(n_filters, frames.shape[-1], sample_rate)
    energies = np.maximum(power @ fbank.T, LOG_FLOOR)
    return np.log(energies) @ dct_matrix(n_filters)[:n_coeffs].T
