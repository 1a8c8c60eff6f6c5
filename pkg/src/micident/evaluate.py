"""Evaluation: accuracy, confusion matrices, and report files.

Reports mirror the shape of the identification-accuracy tables and the
confusion-matrix figures: an accuracy CSV over the evaluation grid, a
CSV per confusion matrix, and a grayscale PGM render (darker = higher).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .corpus import Entry, Manifest, load_entry_waveform
from .errors import DataError, EmptyTestSet, VariantMismatch
from .fingerprints import normalize
from .noise import SnrSpec, inject_awgn
from .pipeline import TrainedPipeline
from .seeding import stable_seed
from .svm import decision_matrix
from .types import Fingerprint


@dataclass
class EvalReport:
    """One cell of the evaluation grid."""

    variant: str
    regime: str
    test_snr_db: Optional[float]  # None means the noiseless original
    denoise_at_test: bool
    classes: List[str]
    accuracy_percent: float
    confusion_percent: np.ndarray  # (J, J), rows sum to 100 for non-empty rows
    per_class_recall: List[float]
    true_counts: List[int]
    meta: dict = field(default_factory=dict)

    @property
    def condition(self) -> str:
        snr = "original" if self.test_snr_db is None else f"{self.test_snr_db:g}dB"
        dn = "dn" if self.denoise_at_test else "raw"
        return f"{self.variant}_{self.regime}_{snr}_{dn}"


def _confusion_from_counts(counts: np.ndarray):
    totals = counts.sum(axis=1)
    confusion = np.zeros_like(counts, dtype=np.float64)
    nonzero = totals > 0
    confusion[nonzero] = 100.0 * counts[nonzero] / totals[nonzero, None]
    accuracy = 100.0 * np.trace(counts) / counts.sum()
    recall = [float(confusion[j, j]) for j in range(len(counts))]
    return confusion, float(accuracy), recall


def score_predictions(
    pipeline: TrainedPipeline,
    fingerprints: Sequence[Fingerprint],
    true_labels: Sequence[str],
    *,
    test_snr_db: Optional[float],
    denoise_at_test: bool,
    meta: Optional[dict] = None,
) -> EvalReport:
    """Normalize, predict, and aggregate a confusion matrix."""
    if not fingerprints:
        raise EmptyTestSet("no test fingerprints")
    classes = pipeline.svm.classes
    index = {c: j for j, c in enumerate(classes)}
    x = np.stack([normalize(f, pipeline.stats).values for f in fingerprints])
    decisions = decision_matrix(pipeline.svm, x)
    predicted = np.argmax(decisions, axis=1)
    counts = np.zeros((len(classes), len(classes)))
    for true_label, pred_j in zip(true_labels, predicted):
        counts[index[true_label], pred_j] += 1
    confusion, accuracy, recall = _confusion_from_counts(counts)
    return EvalReport(
        variant=pipeline.variant,
        regime=pipeline.regime,
        test_snr_db=test_snr_db,
        denoise_at_test=denoise_at_test,
        classes=list(classes),
        accuracy_percent=accuracy,
        confusion_percent=confusion,
        per_class_recall=recall,
        true_counts=[int(c) for c in counts.sum(axis=1)],
        meta=meta or {},
    )


def collect_test_fingerprints(
    pipeline: TrainedPipeline,
    test: Manifest,
    test_snr: SnrSpec,
    denoise_at_test: bool,
):
    """Per-entry fingerprints for one test condition (all variants).

    Noise seeds live in a namespace disjoint from training augmentation
    so a test realization can never leak from training.
    """
    if not test.entries:
        raise EmptyTestSet("test manifest is empty")
    overlap = set(s for s in test.speakers()) & set(pipeline.train_speakers)
    if overlap:
        raise DataError(
            f"test speakers overlap training speakers: {sorted(overlap)}"
        )
    fingerprints: Dict[str, Dict[str, Fingerprint]] = {}
    labels: Dict[str, str] = {}
    for entry in test.entries:
        wave = load_entry_waveform(entry)
        if math.isfinite(test_snr.target_db):
            seed = stable_seed(test_snr.seed, "test-noise", entry.id, test_snr.target_db)
            wave = inject_awgn(wave, SnrSpec(test_snr.target_db, seed=seed))
        fingerprints[entry.id] = pipeline.front_end.fingerprints_for_wave(
            wave, denoise_at_test, source_id=entry.id
        )
        labels[entry.id] = entry.device
    return fingerprints, labels


def evaluate(
    pipeline: TrainedPipeline,
    test: Manifest,
    test_snr: SnrSpec,
    denoise_at_test: bool,
) -> EvalReport:
    """Inject noise, optionally denoise, extract, classify, aggregate."""
    per_entry, labels = collect_test_fingerprints(pipeline, test, test_snr, denoise_at_test)
    ids = sorted(per_entry)
    feats = []
    for entry_id in ids:
        variants = per_entry[entry_id]
        if pipeline.variant not in variants:
            raise VariantMismatch(
                f"front end produced {sorted(variants)}, pipeline needs {pipeline.variant!r}"
            )
        feats.append(variants[pipeline.variant])
    snr_db = test_snr.target_db if math.isfinite(test_snr.target_db) else None
    return score_predictions(
        pipeline,
        feats,
        [labels[i] for i in ids],
        test_snr_db=snr_db,
        denoise_at_test=denoise_at_test,
        meta={"n_recordings": len(ids), "noise_seed": test_snr.seed},
    )


# -- report files ---------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.6f}"


def confusion_to_pgm(confusion: np.ndarray) -> str:
    """ASCII PGM, darker = higher percentage."""
    j = confusion.shape[0]
    lines = ["P2", f"{j} {j}", "255"]
    gray = 255 - np.rint(confusion * 2.55).astype(int)
    for row in np.clip(gray, 0, 255):
        lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def emit_report(report: EvalReport, out_dir) -> List[Path]:
    """Write one report's confusion CSV and PGM; bit-stable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    base = report.condition
    csv_path = out_dir / f"confusion_{base}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("true\\predicted," + ",".join(report.classes) + "\n")
        for j, cls in enumerate(report.classes):
            row = ",".join(_fmt(v) for v in report.confusion_percent[j])
            fh.write(f"{cls},{row}\n")
    written.append(csv_path)
    pgm_path = out_dir / f"confusion_{base}.pgm"
    with open(pgm_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(confusion_to_pgm(report.confusion_percent))
    written.append(pgm_path)
    return written


def write_accuracy_grid(reports: Sequence[EvalReport], path) -> Path:
    """Accuracy CSV over the whole variant x regime x condition grid."""
    path = Path(path)
    rows = []
    for r in reports:
        snr = "original" if r.test_snr_db is None else f"{r.test_snr_db:g}"
        rows.append(
            (
                r.variant,
                r.regime,
                snr,
                "yes" if r.denoise_at_test else "no",
                _fmt(r.accuracy_percent),
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,regime,test_snr_db,denoised_at_test,accuracy_percent\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path
