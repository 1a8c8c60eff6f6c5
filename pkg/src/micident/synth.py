"""Synthetic speech for desk-scale experiments.

Utterances are random sequences drawn from a shared "phoneme"
inventory. Voiced segments are built additively from harmonics of the
speaker's pitch, shaped by formant resonances and a natural spectral
tilt, which keeps per-frame spectra stable even for short analysis
windows. Unvoiced segments are band-passed noise. A low-level breath
component excites the whole band so channel coloration is observable
everywhere. Speakers differ in pitch, formant scaling, and tilt, so
cross-speaker evaluation is meaningful while the phoneme inventory
stays shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.signal

from .seeding import stable_seed
from .types import PIPELINE_RATE_HZ, Waveform

# Vowel-like formant triples (Hz): a rough cross-section of the vowel space.
VOICED_PHONEMES = [
    (730, 1090, 2440),
    (270, 2290, 3010),
    (300, 870, 2240),
    (530, 1840, 2480),
    (660, 1720, 2410),
    (440, 1020, 2240),
    (390, 1990, 2550),
    (490, 1350, 1690),
    (570, 840, 2410),
    (310, 2020, 2960),
]

# Fricative-like noise bands (low, high) in Hz.
UNVOICED_PHONEMES = [
    (1700, 4800),
    (2500, 6400),
    (3600, 7400),
]

_MAX_HARMONIC_HZ = 7800.0


@dataclass(frozen=True)
class SpeakerParams:
    """Voice characteristics of one synthetic speaker."""

    f0_hz: float
    formant_scale: float
    formant_width_hz: float
    tilt_db_per_octave: float
    breathiness: float


def make_speaker(seed: int) -> SpeakerParams:
    rng = np.random.default_rng(seed)
    return SpeakerParams(
        f0_hz=float(rng.uniform(170.0, 320.0)),
        formant_scale=float(rng.uniform(0.88, 1.18)),
        formant_width_hz=float(rng.uniform(90.0, 150.0)),
        tilt_db_per_octave=float(rng.uniform(-10.0, -7.0)),
        breathiness=float(rng.uniform(0.008, 0.02)),
    )


def _formant_envelope_db(freqs_hz: np.ndarray, speaker: SpeakerParams, formants) -> np.ndarray:
    """Smooth vocal-tract magnitude in dB: formant bumps plus tilt."""
    env = np.zeros_like(freqs_hz)
    width = speaker.formant_width_hz * 2.2
    for f in formants:
        center = f * speaker.formant_scale
        env += 18.0 * np.exp(-0.5 * ((freqs_hz - center) / width) ** 2)
    above = np.maximum(freqs_hz, 300.0)
    env += speaker.tilt_db_per_octave * np.log2(above / 300.0)
    return env


def _voiced_segment(
    n: int, speaker: SpeakerParams, formants, rng: np.random.Generator, rate: int
) -> np.ndarray:
    """Additive harmonic synthesis with a per-segment pitch offset."""
    f0 = speaker.f0_hz * rng.uniform(0.94, 1.06)
    k_max = max(2, int(_MAX_HARMONIC_HZ / f0))
    harmonics = f0 * np.arange(1, k_max + 1)
    amps_db = _formant_envelope_db(harmonics, speaker, formants)
    amps = 10.0 ** (amps_db / 20.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=k_max)
    # Slow vibrato keeps frames alive under RASTA's band-pass.
    t = np.arange(n) / rate
    vibrato = 1.0 + 0.01 * np.sin(2.0 * np.pi * rng.uniform(4.0, 7.0) * t)
    phase_base = 2.0 * np.pi * np.cumsum(vibrato) / rate
    seg = np.sin(phase_base[:, None] * harmonics[None, :] + phases[None, :]) @ amps
    return seg / (np.sqrt(np.sum(amps**2)) + 1e-12)


def _unvoiced_segment(
    n: int, speaker: SpeakerParams, band, rng: np.random.Generator, rate: int
) -> np.ndarray:
    lo, hi = band
    hi = min(hi * speaker.formant_scale, rate / 2 * 0.98)
    lo = lo * speaker.formant_scale
    sos = scipy.signal.butter(2, [lo, hi], btype="bandpass", fs=rate, output="sos")
    seg = scipy.signal.sosfilt(sos, rng.standard_normal(n))
    return seg / (np.std(seg) + 1e-12)


def _envelope(n: int, rate: int) -> np.ndarray:
    ramp = min(int(0.012 * rate), max(1, n // 4))
    env = np.ones(n)
    fade = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, ramp)))
    env[:ramp] = fade
    env[-ramp:] = fade[::-1]
    return env


def synth_utterance(
    speaker: SpeakerParams,
    duration_s: float,
    seed: int,
    rate: int = PIPELINE_RATE_HZ,
) -> Waveform:
    """One utterance: random phoneme sequence with pauses, RMS 0.05."""
    rng = np.random.default_rng(seed)
    total = int(duration_s * rate)
    pieces: List[np.ndarray] = []
    filled = 0
    while filled < total:
        n = int(rng.uniform(0.1, 0.25) * rate)
        n = min(n, total - filled)
        if n < 32:
            pieces.append(np.zeros(n))
            filled += n
            continue
        kind = rng.random()
        if kind < 0.08:
            seg = np.zeros(n)  # pause
        elif kind < 0.8:
            formants = VOICED_PHONEMES[rng.integers(len(VOICED_PHONEMES))]
            seg = _voiced_segment(n, speaker, formants, rng, rate)
            seg *= _envelope(n, rate) * rng.uniform(0.7, 1.0)
        else:
            band = UNVOICED_PHONEMES[rng.integers(len(UNVOICED_PHONEMES))]
            seg = _unvoiced_segment(n, speaker, band, rng, rate)
            seg *= _envelope(n, rate) * rng.uniform(0.12, 0.25)
        pieces.append(seg)
        filled += n
    samples = np.concatenate(pieces)
    # Breath floor: keeps every frequency bin excited through the channel.
    samples += speaker.breathiness * rng.standard_normal(total)
    rms = np.sqrt(np.mean(samples**2))
    if rms > 0:
        samples *= 0.05 / rms
    return Waveform(samples=samples, sample_rate_hz=rate)


def synth_speech_track(
    total_seconds: float, seed: int, rate: int = PIPELINE_RATE_HZ, n_speakers: int = 4
) -> Waveform:
    """Speech-only track for the phoneme-dictionary training material."""
    pieces = []
    per_speaker = total_seconds / n_speakers
    for k in range(n_speakers):
        speaker = make_speaker(stable_seed(seed, "dict-speaker", k))
        pieces.append(
            synth_utterance(
                speaker, per_speaker, stable_seed(seed, "dict-utterance", k), rate
            ).samples
        )
    return Waveform(samples=np.concatenate(pieces), sample_rate_hz=rate)
