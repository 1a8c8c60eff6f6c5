"""Core domain types shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BadConfig

PIPELINE_RATE_HZ = 16000
DEFAULT_FLOOR_DB = -120.0


@dataclass
class Waveform:
    """Mono PCM audio, amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = PIPELINE_RATE_HZ
    speaker_id: Optional[str] = None
    device_label: Optional[str] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise BadConfig(f"waveform must be 1-D, got shape {self.samples.shape}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def power(self) -> float:
        """Mean sample power."""
        if len(self.samples) == 0:
            return 0.0
        return float(np.mean(self.samples ** 2))


@dataclass(frozen=True)
class StftConfig:
    """Analysis settings for the log-power spectrogram front end."""

    window_len_samples: int = 512
    hop_samples: int = 256
    floor_db: float = DEFAULT_FLOOR_DB

    def __post_init__(self):
        n = self.window_len_samples
        if n < 64 or n % 2 != 0:
            raise BadConfig(f"window_len_samples must be even and >= 64, got {n}")
        if self.hop_samples != n // 2:
            raise BadConfig(
                f"hop_samples must be window_len_samples/2 (50% overlap), "
                f"got hop={self.hop_samples} for window={n}"
            )

    @property
    def n_bins(self) -> int:
        """Positive-half bin count (patch side)."""
        return self.window_len_samples // 2


# Provenance tag for spectrograms as they move through the pipeline.
ORIGIN_RAW = "raw"
ORIGIN_DENOISED = "denoised"
ORIGIN_RESIDUAL = "residual"
ORIGIN_SPEECH = "speech_estimate"
_ORIGINS = (ORIGIN_RAW, ORIGIN_DENOISED, ORIGIN_RESIDUAL, ORIGIN_SPEECH)


@dataclass
class Spectrogram:
    """Time-frequency matrix of dB power values, rows = frequency bins."""

    values_db: np.ndarray
    bin_hz: float
    origin: str = ORIGIN_RAW
    floor_db: float = DEFAULT_FLOOR_DB

    def __post_init__(self):
        self.values_db = np.asarray(self.values_db, dtype=np.float64)
        if self.values_db.ndim != 2:
            raise BadConfig(f"spectrogram must be 2-D, got {self.values_db.shape}")
        if self.origin not in _ORIGINS:
            raise BadConfig(f"unknown origin {self.origin!r}")

    @property
    def n_bins(self) -> int:
        return self.values_db.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values_db.shape[1]

    def with_values(self, values_db: np.ndarray, origin: Optional[str] = None) -> "Spectrogram":
        """Copy carrying the same bin spacing and floor."""
        return Spectrogram(
            values_db=values_db,
            bin_hz=self.bin_hz,
            origin=self.origin if origin is None else origin,
            floor_db=self.floor_db,
        )


@dataclass
class PatchGrid:
    """Non-overlapping square patches cut from a spectrogram along time."""

    patches: np.ndarray  # (K, M, M)
    source_frames: int
    patch_side: int

    @property
    def n_patches(self) -> int:
        return self.patches.shape[0]


@dataclass
class MfccSequence:
    """Per-frame cepstral coefficients; rows = frames."""

    coeffs: np.ndarray  # (T, n_mfcc)
    n_mels: int
    n_mfcc: int

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]


VARIANT_F1 = "f1"
VARIANT_F2 = "f2"
VARIANT_F3 = "f3"
VARIANTS = (VARIANT_F1, VARIANT_F2, VARIANT_F3)


def variant_length(variant: str, n_bins: int) -> int:
    """Fingerprint vector length for a spectrogram with ``n_bins`` rows."""
    if variant == VARIANT_F1:
        return n_bins
    if variant == VARIANT_F2:
        return 3 * n_bins
    if variant == VARIANT_F3:
        return n_bins - 1
    raise BadConfig(f"unknown fingerprint variant {variant!r}")


@dataclass
class Fingerprint:
    """Fixed-length device feature vector."""

    values: np.ndarray
    variant: str
    source_id: Optional[str] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.variant not in VARIANTS:
            raise BadConfig(f"unknown fingerprint variant {self.variant!r}")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class FeatureStats:
    """Per-variant training mean/std used for z-score normalization."""

    variant: str
    mean: np.ndarray
    std: np.ndarray
    std_floor: float = 1e-8

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
