"""Audio ingestion and node-side time-domain preprocessing.

Covers WAV loading, RMS-threshold silence removal, sliding-window
segmentation and Hamming windowing. All functions are pure: they return
new objects and never mutate their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInput,
    InvalidOverlap,
    MalformedWav,
    UnsupportedFormat,
)

DEFAULT_SAMPLE_RATE = 24000


@dataclass(frozen=True)
class AudioClip:
    """A mono audio signal with its sample rate.

    Samples are dimensionless normalized PCM, nominally in [-1, 1].
    Noise injection may push samples outside that range; downstream
    processing does not care.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(
            self, "samples", np.asarray(self.samples, dtype=np.float64)
        )

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Frame:
    """A fixed-length window of samples copied out of a source clip."""

    values: np.ndarray
    start_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SilenceConfig:
    """Threshold and analysis window for silence removal.

    threshold is an RMS level in [0, 0.5]; windows whose RMS falls
    strictly below it are dropped.
    """

    threshold: float = 0.03
    window_seconds: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 0.5:
            raise ValueError(f"threshold must be in [0, 0.5], got {self.threshold}")
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")


def load_wav(path) -> AudioClip:
    """Load a RIFF/WAVE file as an AudioClip.

    Only 16-bit little-endian mono PCM is accepted. Samples are scaled
    by 1/32768 into [-1, 1).

    Raises:
        MalformedWav: broken RIFF structure or truncated chunks.
        UnsupportedFormat: non-PCM, non-16-bit, or multi-channel audio.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise MalformedWav(f"{path}: file too short for a RIFF header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: missing RIFF/WAVE signature")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_len,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_len]
        if chunk_id == b"fmt ":
            if chunk_len < 16 or len(body) < 16:
                raise MalformedWav(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_len:
                raise MalformedWav(f"{path}: data chunk truncated")
            pcm = body
        # chunks are word-aligned
        pos += 8 + chunk_len + (chunk_len & 1)

    if fmt is None or pcm is None:
        raise MalformedWav(f"{path}: missing fmt or data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"{path}: not PCM (format tag {audio_format})")
    if n_channels != 1:
        raise UnsupportedFormat(f"{path}: expected mono, got {n_channels} channels")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: expected 16-bit samples, got {bits}")

    raw = np.frombuffer(pcm[: len(pcm) - len(pcm) % 2], dtype="<i2")
    return AudioClip(raw.astype(np.float64) / 32768.0, sample_rate)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit mono PCM, clipping samples to [-1, 1)."""
    scaled = np.clip(clip.samples, -1.0, 32767.0 / 32768.0)
    pcm = np.round(scaled * 32768.0).astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pcm)


def rms(values) -> float:
    """Root mean square of a nonempty sequence."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("rms of an empty sequence")
    return float(np.sqrt(np.mean(arr * arr)))


def remove_silence(clip: AudioClip, cfg: SilenceConfig = SilenceConfig()) -> AudioClip:
    """Drop consecutive fixed-duration windows whose RMS is below threshold.

    The clip is partitioned into non-overlapping windows of
    cfg.window_seconds; surviving windows are concatenated in order. A
    trailing partial window is judged by its own RMS. May return an
    empty clip.
    """
    win = int(round(cfg.window_seconds * clip.sample_rate))
    if win <= 0:
        raise ValueError("silence window shorter than one sample")
    kept = []
    for start in range(0, len(clip.samples), win):
        chunk = clip.samples[start : start + win]
        if chunk.size and rms(chunk) >= cfg.threshold:
            kept.append(chunk)
    if not kept:
        return AudioClip(np.empty(0), clip.sample_rate)
    return AudioClip(np.concatenate(kept), clip.sample_rate)


def segment(
    clip: AudioClip, window_len: int = 2**14, overlap_fraction: float = 0.5
) -> list[Frame]:
    """Cut a clip into sliding windows of raw (un-windowed) samples.

    Frames start at offsets 0, hop, 2*hop, ... with
    hop = window_len * (1 - overlap_fraction) rounded down. Returns an
    empty list when the clip is shorter than one window.

    Raises:
        InvalidOverlap: overlap_fraction outside [0, 1).
    """
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidOverlap(f"overlap must be in [0, 1), got {overlap_fraction}")
    if window_len < 1 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two, got {window_len}")
    n = len(clip.samples)
    if n < window_len:
        return []
    hop = max(1, int(window_len * (1.0 - overlap_fraction)))
    count = (n - window_len) // hop + 1
    return [
        Frame(clip.samples[i * hop : i * hop + window_len].copy(), start_offset=i * hop)
        for i in range(count)
    ]


def hamming_coefficients(n: int) -> np.ndarray:
    """Periodic Hamming window: w[k] = 0.54 - 0.46*cos(2*pi*k/n)."""
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)


def apply_hamming(frame: Frame) -> Frame:
    """Multiply a frame by the periodic Hamming window."""
    n = len(frame.values)
    if n == 0:
        raise EmptyInput("cannot window an empty frame")
    return Frame(frame.values * hamming_coefficients(n), frame.start_offset)
