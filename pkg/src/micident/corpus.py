"""Data management: WAV ingestion, manifests, virtual devices, splits,
and the Clean/Mixed/Denoised training regimes.
"""

from __future__ import annotations

import json
import math
import warnings
import wave as wave_module
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.interpolate
import scipy.signal

from .errors import (
    BadConfig,
    BadSampleRate,
    BadWav,
    DeviceMissingFromSplit,
    MissingDenoiser,
    MissingFile,
    MissingMetadata,
    SilentInput,
)
from .noise import SnrSpec, augment_manifest, inject_awgn
from .seeding import stable_seed
from .types import PIPELINE_RATE_HZ, Waveform

PROVENANCE_ORIGINAL = "original"
PROVENANCE_AWGN = "awgn"
PROVENANCE_SIMULATED = "simulated"

REGIME_CLEAN = "clean"
REGIME_MIXED = "mixed"
REGIME_DENOISED = "denoised"
REGIMES = (REGIME_CLEAN, REGIME_MIXED, REGIME_DENOISED)

_MANIFEST_FIELDS = ("id", "path", "device", "speaker", "provenance", "parent_id", "snr_db", "seed")


# -- WAV I/O ---------------------------------------------------------------

def read_wav(path) -> Waveform:
    """Read a 16-bit mono PCM WAV at the pipeline rate.

    Amplitudes are scaled by 1/32768. Any other layout is rejected with
    a diagnostic naming the offending property.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"no such file: {path}")
    try:
        with wave_module.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            raw = fh.readframes(n_frames)
    except (wave_module.Error, EOFError) as exc:
        raise BadWav(f"{path}: not a valid RIFF PCM WAV ({exc})") from exc
    if channels != 1:
        raise BadWav(f"{path}: channels={channels}, expected mono")
    if width != 2:
        raise BadWav(f"{path}: sample width={8 * width} bits, expected 16-bit PCM")
    if rate != PIPELINE_RATE_HZ:
        raise BadSampleRate(f"{path}: sample rate={rate} Hz, expected {PIPELINE_RATE_HZ}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate_hz=rate)


def write_wav(path, wave: Waveform) -> None:
    """Write 16-bit mono PCM; samples are clipped to the int16 range."""
    scaled = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave_module.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wave.sample_rate_hz)
        fh.writeframes(scaled.tobytes())


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class Entry:
    """One recording (or a derived noisy version of one)."""

    id: str
    path: str
    device: str
    speaker: str
    provenance: str = PROVENANCE_ORIGINAL
    parent_id: Optional[str] = None
    snr_db: Optional[float] = None
    seed: Optional[int] = None


@dataclass
class Manifest:
    entries: List[Entry] = field(default_factory=list)
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise BadConfig(f"duplicate recording ids in manifest: {dupes}")

    def speakers(self) -> List[str]:
        return sorted({e.speaker for e in self.entries})

    def devices(self) -> List[str]:
        return sorted({e.device for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)


def write_manifest(manifest: Manifest, path) -> None:
    """Line-delimited JSON with a stable field order, for diffability."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"_meta": {"seed": manifest.seed, "config_hash": manifest.config_hash}})
            + "\n"
        )
        for e in manifest.entries:
            record = {k: getattr(e, k) for k in _MANIFEST_FIELDS}
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"no such manifest: {path}")
    entries = []
    seed = 0
    config_hash = ""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "_meta" in record:
                seed = record["_meta"].get("seed", 0)
                config_hash = record["_meta"].get("config_hash", "")
                continue
            entries.append(Entry(**{k: record.get(k) for k in _MANIFEST_FIELDS}))
    return Manifest(entries=entries, seed=seed, config_hash=config_hash)


def ingest(paths: Sequence, metadata_path) -> Manifest:
    """Build a manifest from WAV files plus a sidecar metadata file.

    The sidecar is line-delimited JSON with id/path/device/speaker per
    record; labels are never guessed from filenames. Every WAV must
    parse; a corrupt file fails the whole ingest, naming the file.
    """
    if not paths:
        warnings.warn("ingest called with no paths; manifest is empty")
        return Manifest(entries=[])
    metadata_path = Path(metadata_path)
    if not metadata_path.exists():
        raise MissingMetadata(f"sidecar metadata not found: {metadata_path}")
    by_path: Dict[str, dict] = {}
    with open(metadata_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            by_path[record["path"]] = record
    entries = []
    for p in paths:
        p = str(p)
        record = by_path.get(p) or by_path.get(str(Path(p).name))
        if record is None:
            raise MissingMetadata(f"no metadata record for {p}")
        read_wav(p)  # validates format; raises BadWav naming the file
        entries.append(
            Entry(
                id=record.get("id", str(Path(p).stem)),
                path=p,
                device=record["device"],
                speaker=record["speaker"],
                provenance=PROVENANCE_ORIGINAL,
            )
        )
    return Manifest(entries=entries)


# -- virtual devices ---------------------------------------------------------

N_FIR_TAPS = 64
FIR_DB_MIN = -40.0
FIR_DB_MAX = 10.0


@dataclass(frozen=True)
class VirtualDevice:
    """Simulated acquisition chain: FIR coloration, gain, self-noise."""

    label: str
    fir_taps: np.ndarray
    noise_floor_db: float = -math.inf
    gain_db: float = 0.0


def identity_device(label: str = "identity") -> VirtualDevice:
    taps = np.zeros(N_FIR_TAPS)
    taps[(N_FIR_TAPS - 1) // 2] = 1.0
    return VirtualDevice(label=label, fir_taps=taps)


def device_response_db(dev: VirtualDevice, n_bins: int, rate: int = PIPELINE_RATE_HZ) -> np.ndarray:
    """|H|^2 in dB on the spectrogram's bin grid (bins 0..n_bins-1)."""
    freqs = np.arange(n_bins) * (rate / 2) / n_bins
    _, h = scipy.signal.freqz(dev.fir_taps, worN=freqs, fs=rate)
    return 20.0 * np.log10(np.maximum(np.abs(h), 1e-12)) + dev.gain_db


def _design_fir(control_db: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Linear-phase FIR through a smooth dB envelope (spline through the
    control points, clipped to the allowed coloration range)."""
    n_control = len(control_db)
    freqs = np.linspace(0.0, 1.0, n_control)
    spline = scipy.interpolate.CubicSpline(freqs, control_db)
    grid = np.linspace(0.0, 1.0, 129)
    env_db = np.clip(spline(grid), FIR_DB_MIN + 5.0, FIR_DB_MAX - 1.0)
    gains = 10.0 ** (env_db / 20.0)
    taps = scipy.signal.firwin2(N_FIR_TAPS - 1, grid, gains)
    return np.append(taps, 0.0)  # keep declared tap count with a type-I design


def make_virtual_devices(
    n_devices: int,
    seed: int,
    spread_db: float = 9.0,
    noise_floor_range=(-70.0, -50.0),
    n_control: int = 8,
) -> List[VirtualDevice]:
    """Seeded bank of devices with smooth random spectral colorations."""
    devices = []
    for i in range(n_devices):
        rng = np.random.default_rng(stable_seed(seed, "device", i))
        for attempt in range(20):
            control = rng.uniform(-spread_db, spread_db, size=n_control)
            taps = _design_fir(control, rng)
            response = device_response_db(
                VirtualDevice(label="probe", fir_taps=taps), n_bins=256
            )
            if FIR_DB_MIN <= response.min() and response.max() <= FIR_DB_MAX:
                break
        else:
            raise BadConfig(f"could not design a bounded FIR for device {i}")
        devices.append(
            VirtualDevice(
                label=f"device{i:02d}",
                fir_taps=taps,
                noise_floor_db=float(rng.uniform(*noise_floor_range)),
                gain_db=float(rng.uniform(-3.0, 3.0)),
            )
        )
    return devices


def simulate_device(clean: Waveform, dev: VirtualDevice, seed: int = 0) -> Waveform:
    """Pass clean speech through the device chain, deterministically.

    Convolution with the FIR, gain, then additive self-noise at
    noise_floor_db relative to the filtered signal's power.
    """
    if clean.power() == 0.0:
        raise SilentInput("cannot simulate a device on silence")
    out = np.convolve(clean.samples, dev.fir_taps, mode="same")
    if dev.gain_db != 0.0:
        out = out * 10.0 ** (dev.gain_db / 20.0)
    if math.isfinite(dev.noise_floor_db):
        rng = np.random.default_rng(seed)
        p_noise = float(np.mean(out**2)) * 10.0 ** (dev.noise_floor_db / 10.0)
        out = out + rng.standard_normal(len(out)) * math.sqrt(p_noise)
    return Waveform(
        samples=out,
        sample_rate_hz=clean.sample_rate_hz,
        speaker_id=clean.speaker_id,
        device_label=dev.label,
    )


# -- loading entries ---------------------------------------------------------

def load_entry_waveform(entry: Entry) -> Waveform:
    """Materialize an entry: read the source WAV, then apply provenance."""
    wave = read_wav(entry.path)
    if entry.provenance == PROVENANCE_AWGN:
        wave = inject_awgn(wave, SnrSpec(target_db=entry.snr_db, seed=entry.seed))
    return replace(wave, speaker_id=entry.speaker, device_label=entry.device)


# -- splitting and regimes ----------------------------------------------------

def cross_speaker_split(
    manifest: Manifest, n_train: int, seed: int = 0
) -> Tuple[Manifest, Manifest]:
    """Speaker-disjoint train/test split keeping every device on both sides.

    Deterministic per seed; re-draws up to 10 sub-seeds before giving up.
    """
    speakers = manifest.speakers()
    if not 0 < n_train < len(speakers):
        raise BadConfig(
            f"n_train must be in (0, {len(speakers)}), got {n_train}"
        )
    devices = set(manifest.devices())
    for attempt in range(10):
        rng = np.random.default_rng(stable_seed(seed, "split", attempt))
        order = list(speakers)
        rng.shuffle(order)
        train_speakers = set(order[:n_train])
        train = [e for e in manifest.entries if e.speaker in train_speakers]
        test = [e for e in manifest.entries if e.speaker not in train_speakers]
        if {e.device for e in train} == devices and {e.device for e in test} == devices:
            return (
                Manifest(entries=train, seed=manifest.seed, config_hash=manifest.config_hash),
                Manifest(entries=test, seed=manifest.seed, config_hash=manifest.config_hash),
            )
    raise DeviceMissingFromSplit(
        "no speaker split keeps every device on both sides after 10 draws"
    )


@dataclass(frozen=True)
class ExtractionTask:
    """One feature-extraction work item."""

    entry: Entry
    denoise: bool


def build_regime(
    train: Manifest,
    regime: str,
    denoiser=None,
    levels: Sequence[float] = (),
    global_seed: int = 0,
) -> List[ExtractionTask]:
    """Work list for one training regime.

    Clean: originals only. Mixed: originals plus AWGN versions at the
    given levels. Denoised: the Mixed set, all denoised before
    extraction (the noiseless originals included, so train and test see
    the same preprocessing).
    """
    if regime not in REGIMES:
        raise BadConfig(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if regime == REGIME_CLEAN:
        return [ExtractionTask(entry=e, denoise=False) for e in train.entries]
    augmented = augment_manifest(train, list(levels), global_seed=global_seed)
    if regime == REGIME_MIXED:
        return [ExtractionTask(entry=e, denoise=False) for e in augmented.entries]
    if denoiser is None:
        raise MissingDenoiser("the denoised regime requires a trained denoiser")
    return [ExtractionTask(entry=e, denoise=True) for e in augmented.entries]
