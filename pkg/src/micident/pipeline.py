"""Fingerprint extraction pipeline: waveform to fingerprints.

Bundles the trained components (denoiser, speech model, normalization
stats, classifier) and applies them in pipeline order: STFT, optional
denoising, speech-residual computation, per-variant extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional

import numpy as np

from .corpus import Entry, load_entry_waveform
from .denoiser import DenoiserModel, denoise_spectrogram
from .dsp import stft_logpower
from .errors import BadConfig
from .fingerprints import extract_f1, extract_f2, extract_f3
from .speech import GmmModel, SpeechDictionary, reconstruct_speech, spectral_subtract
from .svm import SvmModel
from .types import (
    FeatureStats,
    Fingerprint,
    Spectrogram,
    StftConfig,
    VARIANT_F1,
    VARIANT_F2,
    VARIANT_F3,
    Waveform,
)


@dataclass
class FrontEnd:
    """Everything needed to turn a waveform into fingerprints."""

    stft: StftConfig = field(default_factory=StftConfig)
    n_mels: int = 27
    n_mfcc: int = 13
    denoiser: Optional[DenoiserModel] = None
    gmm: Optional[GmmModel] = None
    dictionary: Optional[SpeechDictionary] = None

    def spectrogram(self, wave: Waveform, denoise: bool) -> Spectrogram:
        spec = stft_logpower(wave, self.stft)
        if denoise:
            if self.denoiser is None:
                raise BadConfig("denoising requested but no denoiser is loaded")
            spec = denoise_spectrogram(self.denoiser, spec)
        return spec

    def fingerprints(
        self, spec: Spectrogram, source_id: Optional[str] = None
    ) -> Dict[str, Fingerprint]:
        """All three variants from one (possibly denoised) spectrogram.

        f3 needs only the spectrogram; f1/f2 additionally need the
        speech model to form the channel residual.
        """
        out = {VARIANT_F3: extract_f3(spec, source_id=source_id)}
        if self.gmm is not None and self.dictionary is not None:
            speech = reconstruct_speech(
                self.dictionary, self.gmm, spec, n_mels=self.n_mels, n_mfcc=self.n_mfcc
            )
            residual = spectral_subtract(spec, speech)
            out[VARIANT_F1] = extract_f1(residual, source_id=source_id)
            out[VARIANT_F2] = extract_f2(spec, residual, source_id=source_id)
        return out

    def fingerprints_for_wave(
        self, wave: Waveform, denoise: bool, source_id: Optional[str] = None
    ) -> Dict[str, Fingerprint]:
        return self.fingerprints(self.spectrogram(wave, denoise), source_id=source_id)

    def fingerprints_for_entry(self, entry: Entry, denoise: bool) -> Dict[str, Fingerprint]:
        wave = load_entry_waveform(entry)
        return self.fingerprints_for_wave(wave, denoise, source_id=entry.id)


@dataclass
class TrainedPipeline:
    """One deployable classifier: variant + regime + trained components."""

    variant: str
    regime: str
    svm: SvmModel
    stats: FeatureStats
    front_end: FrontEnd
    train_speakers: FrozenSet[str] = frozenset()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.variant == self.stats.variant == self.svm.variant):
            raise BadConfig(
                f"variant mismatch: pipeline {self.variant!r}, "
                f"stats {self.stats.variant!r}, svm {self.svm.variant!r}"
            )
