"""Deterministic signal-processing kernels.

Everything here is a pure function: STFT analysis to a log-power
spectrogram, patch split/assembly for the denoiser, mel-filterbank MFCC,
and RASTA temporal filtering of coefficient trajectories.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
import scipy.signal

from .errors import (
    BadConfig,
    BadSampleRate,
    RecordingTooShort,
    ShapeMismatch,
    SignalTooShort,
    TooFewFrames,
)
from .types import (
    MfccSequence,
    ORIGIN_RAW,
    PIPELINE_RATE_HZ,
    PatchGrid,
    Spectrogram,
    StftConfig,
    Waveform,
)

# Classical RASTA band-pass applied along time to each coefficient:
# H(z) = 0.1 * (2 + z^-1 - z^-3 - 2 z^-4) / (1 - 0.98 z^-1)
RASTA_NUM = np.array([0.2, 0.1, 0.0, -0.1, -0.2])
RASTA_DEN = np.array([1.0, -0.98])

DEFAULT_N_MELS = 27
DEFAULT_N_MFCC = 13


def stft_logpower(wave: Waveform, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Log-distributed power spectrogram: 10*log10 |STFT|^2, floored.

    Frames are fully inside the signal (no padding), Hann-windowed, with
    50% overlap. Keeps the M = N/2 positive bins 0..M-1, so a pure tone
    at f Hz peaks at bin round(f*N/rate).
    """
    if wave.sample_rate_hz != PIPELINE_RATE_HZ:
        raise BadSampleRate(
            f"pipeline requires {PIPELINE_RATE_HZ} Hz input, got {wave.sample_rate_hz} Hz"
        )
    n = cfg.window_len_samples
    x = wave.samples
    if len(x) < n:
        raise SignalTooShort(f"need at least {n} samples, got {len(x)}")
    hop = cfg.hop_samples
    n_frames = (len(x) - n) // hop + 1
    window = scipy.signal.get_window("hann", n, fftbins=True)

    idx = np.arange(n)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window[None, :]
    spectrum = np.fft.rfft(frames, axis=1)[:, : n // 2]
    magsq = np.abs(spectrum) ** 2
    with np.errstate(divide="ignore"):
        values_db = 10.0 * np.log10(magsq)
    values_db = np.maximum(values_db, cfg.floor_db)
    return Spectrogram(
        values_db=values_db.T,
        bin_hz=wave.sample_rate_hz / n,
        origin=ORIGIN_RAW,
        floor_db=cfg.floor_db,
    )


def split_patches(spec: Spectrogram) -> Tuple[PatchGrid, np.ndarray]:
    """Cut a spectrogram into K non-overlapping M x M patches along time.

    Returns the grid and the trailing remainder frames (M x r array,
    possibly empty). The remainder bypasses denoising unchanged.
    """
    m = spec.n_bins
    t = spec.n_frames
    if t < m:
        raise RecordingTooShort(f"need at least {m} frames for one patch, got {t}")
    k = t // m
    body = spec.values_db[:, : k * m]
    patches = body.reshape(m, k, m).transpose(1, 0, 2).copy()
    remainder = spec.values_db[:, k * m :].copy()
    return PatchGrid(patches=patches, source_frames=t, patch_side=m), remainder


def assemble_patches(grid: PatchGrid, remainder: np.ndarray, like: Spectrogram) -> Spectrogram:
    """Concatenate patches along time and re-attach the remainder.

    Inverse of :func:`split_patches` when patches are unmodified.
    ``like`` supplies bin spacing, floor, and origin for the result.
    """
    m = grid.patch_side
    if grid.patches.ndim != 3 or grid.patches.shape[1:] != (m, m):
        raise ShapeMismatch(f"patches must be (K, {m}, {m}), got {grid.patches.shape}")
    remainder = np.asarray(remainder, dtype=np.float64)
    if remainder.ndim != 2 or remainder.shape[0] != m:
        raise ShapeMismatch(f"remainder must have {m} rows, got {remainder.shape}")
    body = grid.patches.transpose(1, 0, 2).reshape(m, grid.n_patches * m)
    values = np.concatenate([body, remainder], axis=1)
    return like.with_values(values)


def hz_to_mel(f_hz):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_bins: int, bin_hz: float) -> np.ndarray:
    """Triangular mel filters, each normalized to unit weight sum.

    Unit-sum normalization makes each mel energy a weighted average of
    bin powers, so a spectrally flat frame yields identical energies in
    every band (and therefore zero cepstral coefficients past c0).
    """
    f_max = n_bins * bin_hz
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(f_max), n_mels + 2))
    bin_freqs = np.arange(n_bins) * bin_hz
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    sums = fb.sum(axis=1)
    if np.any(sums <= 0.0):
        empty = int(np.argmin(sums))
        raise BadConfig(
            f"mel filter {empty} covers no frequency bin; "
            f"reduce n_mels={n_mels} for {n_bins} bins"
        )
    return fb / sums[:, None]


def mfcc(
    spec: Spectrogram,
    n_mels: int = DEFAULT_N_MELS,
    n_mfcc: int = DEFAULT_N_MFCC,
) -> MfccSequence:
    """Mel-cepstral coefficients of a dB spectrogram.

    Per frame: linear power -> unit-sum mel energies -> log -> DCT-II
    (ortho), keeping coefficients 1..n_mfcc. c0 is excluded so overall
    gain never enters the speech model.
    """
    if n_mfcc >= n_mels:
        raise BadConfig(f"n_mfcc={n_mfcc} must be < n_mels={n_mels}")
    fb = mel_filterbank(n_mels, spec.n_bins, spec.bin_hz)
    power = 10.0 ** (spec.values_db / 10.0)
    mel_energy = fb @ power  # (n_mels, T)
    log_mel = np.log(np.maximum(mel_energy, 1e-30))
    cep = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=0)
    coeffs = cep[1 : n_mfcc + 1].T  # drop c0; rows = frames
    return MfccSequence(coeffs=coeffs.copy(), n_mels=n_mels, n_mfcc=n_mfcc)


def rasta_filter(seq: MfccSequence) -> MfccSequence:
    """RASTA band-pass each coefficient trajectory along time.

    Removes DC and slow drift (channel effects) from the trajectories,
    keeping the syllable-rate modulation that characterizes speech.
    """
    order = len(RASTA_NUM) - 1
    if seq.n_frames < order + 1:
        raise TooFewFrames(f"RASTA needs at least {order + 1} frames, got {seq.n_frames}")
    filtered = scipy.signal.lfilter(RASTA_NUM, RASTA_DEN, seq.coeffs, axis=0)
    return MfccSequence(coeffs=filtered, n_mels=seq.n_mels, n_mfcc=seq.n_mfcc)


def rasta_mfcc(
    spec: Spectrogram,
    n_mels: int = DEFAULT_N_MELS,
    n_mfcc: int = DEFAULT_N_MFCC,
) -> MfccSequence:
    """MFCC followed by RASTA filtering; the speech model's frame features."""
    return rasta_filter(mfcc(spec, n_mels=n_mels, n_mfcc=n_mfcc))
