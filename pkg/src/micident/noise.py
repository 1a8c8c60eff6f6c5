"""Calibrated AWGN injection and SNR measurement.

The injected noise is rescaled by its own empirical power so the
realized SNR hits the target exactly, not just in expectation. Seeds are
derived per entry from a stable hash so parallel processing order can
never change an output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import BadConfig, LengthMismatch, SilentInput
from .seeding import stable_seed
from .types import Waveform


@dataclass(frozen=True)
class SnrSpec:
    """Target SNR in dB (math.inf means no noise) and a 64-bit seed."""

    target_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isfinite(self.target_db) and not 0.0 <= self.target_db <= 60.0:
            raise BadConfig(f"finite target SNR must be in [0, 60] dB, got {self.target_db}")


def measure_snr(clean: Waveform, noisy: Waveform) -> float:
    """SNR of ``noisy`` against ``clean``: 10*log10(P_clean / P_residual)."""
    if len(clean.samples) != len(noisy.samples):
        raise LengthMismatch(
            f"length mismatch: clean {len(clean.samples)}, noisy {len(noisy.samples)}"
        )
    if clean.sample_rate_hz != noisy.sample_rate_hz:
        raise LengthMismatch("sample rates differ")
    residual = noisy.samples - clean.samples
    p_res = float(np.mean(residual ** 2))
    if p_res == 0.0:
        return math.inf
    return 10.0 * math.log10(clean.power() / p_res)


def inject_awgn(wave: Waveform, spec: SnrSpec) -> Waveform:
    """Add zero-mean Gaussian noise at exactly the target SNR.

    Deterministic given (samples, seed, target). The drawn noise is
    rescaled by its empirical power, so measure_snr on the result
    returns the target up to float rounding. Samples are not clipped.
    """
    if not math.isfinite(spec.target_db):
        return Waveform(
            samples=wave.samples.copy(),
            sample_rate_hz=wave.sample_rate_hz,
            speaker_id=wave.speaker_id,
            device_label=wave.device_label,
        )
    p_signal = wave.power()
    if p_signal == 0.0:
        raise SilentInput("cannot set an SNR on a silent signal")
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(len(wave.samples))
    p_target = p_signal / (10.0 ** (spec.target_db / 10.0))
    noise *= math.sqrt(p_target / float(np.mean(noise ** 2)))
    return Waveform(
        samples=wave.samples + noise,
        sample_rate_hz=wave.sample_rate_hz,
        speaker_id=wave.speaker_id,
        device_label=wave.device_label,
    )


def augment_manifest(manifest, levels: List[float], global_seed: int = 0):
    """Expand a manifest with one AWGN entry per (recording, level).

    Originals are kept; derived entries record parent id, SNR, and the
    per-entry seed. Duplicate levels are collapsed with a warning.
    """
    from .corpus import Entry, Manifest  # local import to avoid a cycle

    deduped: List[float] = []
    for level in levels:
        if level in deduped:
            warnings.warn(f"duplicate SNR level {level} dB requested; using it once")
            continue
        deduped.append(level)

    entries = []
    for entry in manifest.entries:
        entries.append(entry)
        for level in deduped:
            seed = stable_seed(global_seed, "train-noise", entry.id, level)
            entries.append(
                Entry(
                    id=f"{entry.id}+awgn{level:g}",
                    path=entry.path,
                    device=entry.device,
                    speaker=entry.speaker,
                    provenance="awgn",
                    parent_id=entry.id,
                    snr_db=float(level),
                    seed=seed,
                )
            )
    return Manifest(entries=entries, seed=manifest.seed, config_hash=manifest.config_hash)
