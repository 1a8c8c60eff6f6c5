"""Device fingerprint extraction and normalization.

Three variants:

* f1 — channel response: time-averaged channel residual per bin.
* f2 — composite: channel estimate, its per-bin correlation with the
  denoised spectrogram, and the denoised spectrogram's time average.
* f3 — band energy difference: time-averaged forward difference between
  adjacent frequency bins.
"""

from __future__ import annotations

import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeMismatch, StatsMismatch, WrongOrigin
from .types import (
    FeatureStats,
    Fingerprint,
    ORIGIN_RESIDUAL,
    Spectrogram,
    VARIANT_F1,
    VARIANT_F2,
    VARIANT_F3,
)


def extract_f1(residual: Spectrogram, source_id: Optional[str] = None) -> Fingerprint:
    """Channel-response estimate: mean of each residual row over time."""
    if residual.origin != ORIGIN_RESIDUAL:
        raise WrongOrigin(
            f"f1 consumes a channel residual, got origin {residual.origin!r}"
        )
    return Fingerprint(
        values=residual.values_db.mean(axis=1), variant=VARIANT_F1, source_id=source_id
    )


def _rowwise_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pearson correlation of each row of a with the same row of b.

    Rows with zero variance on either side get correlation 0.
    """
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    num = np.sum(ac * bc, axis=1)
    denom = np.sqrt(np.sum(ac * ac, axis=1) * np.sum(bc * bc, axis=1))
    out = np.zeros(a.shape[0])
    ok = denom > 0.0
    out[ok] = num[ok] / denom[ok]
    return out


def extract_f2(
    denoised: Spectrogram, residual: Spectrogram, source_id: Optional[str] = None
) -> Fingerprint:
    """Composite fingerprint: three length-M blocks concatenated.

    (a) the channel estimate, (b) per-bin correlation over time between
    residual and denoised rows, (c) per-bin time mean of the denoised
    spectrogram.
    """
    if denoised.values_db.shape != residual.values_db.shape:
        raise ShapeMismatch(
            f"denoised {denoised.values_db.shape} vs residual {residual.values_db.shape}"
        )
    if denoised.n_frames < 2:
        raise ShapeMismatch("per-bin correlation needs at least 2 frames")
    channel = residual.values_db.mean(axis=1)
    corr = _rowwise_correlation(residual.values_db, denoised.values_db)
    spectrum = denoised.values_db.mean(axis=1)
    return Fingerprint(
        values=np.concatenate([channel, corr, spectrum]),
        variant=VARIANT_F2,
        source_id=source_id,
    )


def extract_f3(spec: Spectrogram, source_id: Optional[str] = None) -> Fingerprint:
    """Band energy difference: time-averaged adjacent-bin derivative."""
    if spec.n_bins < 2:
        raise ShapeMismatch("band energy difference needs at least 2 bins")
    diffs = spec.values_db[1:, :] - spec.values_db[:-1, :]
    return Fingerprint(values=diffs.mean(axis=1), variant=VARIANT_F3, source_id=source_id)


def compute_stats(fingerprints: Sequence[Fingerprint]) -> FeatureStats:
    """Training mean/std per dimension for one variant."""
    if not fingerprints:
        raise StatsMismatch("no fingerprints to compute stats from")
    variant = fingerprints[0].variant
    for f in fingerprints:
        if f.variant != variant:
            raise StatsMismatch(f"mixed variants {variant!r} and {f.variant!r}")
    x = np.stack([f.values for f in fingerprints])
    return FeatureStats(variant=variant, mean=x.mean(axis=0), std=x.std(axis=0))


def normalize(f: Fingerprint, stats: FeatureStats) -> Fingerprint:
    """Z-score with the training stats; stds are floored at 1e-8."""
    if stats.variant != f.variant:
        raise StatsMismatch(f"stats are for {stats.variant!r}, fingerprint is {f.variant!r}")
    if len(stats.mean) != len(f.values):
        raise StatsMismatch(
            f"stats expect length {len(stats.mean)}, fingerprint has {len(f.values)}"
        )
    std = np.maximum(stats.std, stats.std_floor)
    return Fingerprint(
        values=(f.values - stats.mean) / std, variant=f.variant, source_id=f.source_id
    )


# -- feature dump format --------------------------------------------------
#
# JSON header (length-prefixed) with variant, pipeline config hash, and a
# normalization-stats reference, then one record per recording:
# id/device/speaker strings (uint16 length + UTF-8), uint32 L, and L
# little-endian float32 values.

_DUMP_MAGIC = b"MICFEAT1"


def write_features(
    path,
    variant: str,
    config_hash: str,
    stats_ref: str,
    records: Sequence[Tuple[str, str, str, np.ndarray]],
) -> None:
    """Write (recording id, device, speaker, values) records."""
    import json

    header = json.dumps(
        {
            "variant": variant,
            "config_hash": config_hash,
            "stats_ref": stats_ref,
            "count": len(records),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for rec_id, device, speaker, values in records:
            values = np.ascontiguousarray(values, dtype="<f4")
            for text in (rec_id, device, speaker):
                raw = text.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
            fh.write(struct.pack("<I", values.size))
            fh.write(values.tobytes())


def read_features(path):
    """Read a feature dump; returns (header dict, list of records)."""
    import json

    with open(path, "rb") as fh:
        magic = fh.read(len(_DUMP_MAGIC))
        if magic != _DUMP_MAGIC:
            raise ShapeMismatch(f"{path}: not a feature dump")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        records: List[Tuple[str, str, str, np.ndarray]] = []
        for _ in range(header["count"]):
            fields = []
            for _ in range(3):
                (n,) = struct.unpack("<H", fh.read(2))
                fields.append(fh.read(n).decode("utf-8"))
            (length,) = struct.unpack("<I", fh.read(4))
            values = np.frombuffer(fh.read(4 * length), dtype="<f4").astype(np.float64)
            records.append((fields[0], fields[1], fields[2], values))
    return header, records
