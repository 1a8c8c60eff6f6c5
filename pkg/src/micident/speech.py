"""Speech-component estimation.

A diagonal-covariance GMM trained by EM on RASTA-MFCC frames acts as a
soft phoneme model. Each component gets a dictionary atom: the
responsibility-weighted mean log-power spectrum of its frames. A speech
spectrogram is then reconstructed frame by frame as the convex
combination of atoms weighted by the frame's posteriors, and subtracted
from the observation to leave the channel residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .dsp import DEFAULT_N_MELS, DEFAULT_N_MFCC, rasta_mfcc
from .errors import (
    DegenerateComponent,
    EmptyComponent,
    FrameMismatch,
    ShapeMismatch,
    TooFewFrames,
)
from .types import MfccSequence, ORIGIN_RESIDUAL, ORIGIN_SPEECH, Spectrogram

VARIANCE_FLOOR = 1e-4
WEIGHT_FLOOR = 1e-8
MIN_FRAMES_PER_COMPONENT = 50
MAX_EM_ITERATIONS = 200
LL_RELATIVE_TOL = 1e-5


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture over MFCC frames."""

    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, d)
    variances: np.ndarray  # (G, d)
    meta: dict = field(default_factory=dict)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """log(w_g * N(x; mu_g, diag var_g)) for each frame/component."""
        x = np.asarray(x, dtype=np.float64)
        t = x.shape[0]
        out = np.empty((t, self.n_components))
        const = -0.5 * self.dim * np.log(2.0 * np.pi)
        for g in range(self.n_components):
            var = self.variances[g]
            diff = x - self.means[g]
            out[:, g] = (
                const
                - 0.5 * np.sum(np.log(var))
                - 0.5 * np.sum(diff * diff / var, axis=1)
                + np.log(self.weights[g])
            )
        return out

    def posteriors(self, x: np.ndarray) -> Tuple[np.ndarray, float]:
        """Responsibilities (T, G) and total log-likelihood of frames."""
        lj = self.log_joint(x)
        peak = lj.max(axis=1, keepdims=True)
        expd = np.exp(lj - peak)
        norm = expd.sum(axis=1, keepdims=True)
        ll = float(np.sum(peak[:, 0] + np.log(norm[:, 0])))
        return expd / norm, ll

    def save(self, path) -> None:
        from .modelio import save_container

        save_container(
            path,
            "gmm",
            dict(self.meta),
            [("weights", self.weights), ("means", self.means), ("variances", self.variances)],
        )

    @classmethod
    def load(cls, path) -> "GmmModel":
        from .modelio import load_container

        kind, meta, arrays = load_container(path)
        if kind != "gmm":
            raise ShapeMismatch(f"expected a gmm container, got {kind!r}")
        return cls(
            weights=arrays["weights"],
            means=arrays["means"],
            variances=arrays["variances"],
            meta=meta,
        )


def _kmeanspp_centers(x: np.ndarray, g: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial means by squared distance."""
    n = x.shape[0]
    centers = np.empty((g, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for k in range(1, g):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[k] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[k]) ** 2, axis=1))
    return centers


def train_gmm(frames, n_components: int, seed: int = 0) -> GmmModel:
    """Fit the mixture by EM with k-means++ initialization.

    Stops when the log-likelihood gain drops below 1e-5 of its magnitude
    or after 200 iterations. A component whose weight collapses is
    re-seeded once; a second collapse raises DegenerateComponent.
    """
    if isinstance(frames, MfccSequence):
        x = frames.coeffs
    else:
        x = np.asarray(frames, dtype=np.float64)
    t = x.shape[0]
    if t < MIN_FRAMES_PER_COMPONENT * n_components:
        raise TooFewFrames(
            f"need at least {MIN_FRAMES_PER_COMPONENT * n_components} frames "
            f"for {n_components} components, got {t}"
        )
    rng = np.random.default_rng(seed)
    global_var = np.maximum(np.var(x, axis=0), VARIANCE_FLOOR)
    model = GmmModel(
        weights=np.full(n_components, 1.0 / n_components),
        means=_kmeanspp_centers(x, n_components, rng),
        variances=np.tile(global_var, (n_components, 1)),
    )

    reseeded = False
    ll_prev = -np.inf
    iterations = 0
    history = []
    for iterations in range(1, MAX_EM_ITERATIONS + 1):
        gamma, ll = model.posteriors(x)
        nk = gamma.sum(axis=0)
        if np.any(nk / t < WEIGHT_FLOOR):
            dead = np.where(nk / t < WEIGHT_FLOOR)[0]
            if reseeded:
                raise DegenerateComponent(
                    f"components {dead.tolist()} collapsed twice during EM"
                )
            for g in dead:
                model.means[g] = x[rng.integers(t)]
                model.variances[g] = global_var
            reseeded = True
            continue
        history.append(ll)
        model.weights = nk / t
        model.means = (gamma.T @ x) / nk[:, None]
        second = (gamma.T @ (x * x)) / nk[:, None]
        model.variances = np.maximum(second - model.means ** 2, VARIANCE_FLOOR)
        if np.isfinite(ll_prev) and ll - ll_prev < LL_RELATIVE_TOL * abs(ll):
            break
        ll_prev = ll
    _, ll_final = model.posteriors(x)
    history.append(ll_final)
    model.meta = {
        "seed": seed,
        "iterations": iterations,
        "final_log_likelihood": ll_final,
        "log_likelihood_history": history,
    }
    return model


@dataclass
class SpeechDictionary:
    """Per-component mean log-power spectra (dB), the phoneme atoms."""

    atoms: np.ndarray  # (G, M)
    frame_counts: np.ndarray  # (G,) effective weight per atom

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_bins(self) -> int:
        return self.atoms.shape[1]

    def save(self, path) -> None:
        from .modelio import save_container

        save_container(
            path,
            "dictionary",
            {},
            [("atoms", self.atoms), ("frame_counts", self.frame_counts)],
        )

    @classmethod
    def load(cls, path) -> "SpeechDictionary":
        from .modelio import load_container

        kind, _, arrays = load_container(path)
        if kind != "dictionary":
            raise ShapeMismatch(f"expected a dictionary container, got {kind!r}")
        return cls(atoms=arrays["atoms"], frame_counts=arrays["frame_counts"])


def build_dictionary(
    gmm: GmmModel, frames: MfccSequence, spectra: Spectrogram
) -> SpeechDictionary:
    """Responsibility-weighted mean spectrum per mixture component.

    ``frames`` and ``spectra`` must be frame-aligned views of the same
    material (the RASTA-MFCCs and the log-power spectrogram).
    """
    if frames.n_frames != spectra.n_frames:
        raise FrameMismatch(
            f"{frames.n_frames} feature frames vs {spectra.n_frames} spectrum frames"
        )
    gamma, _ = gmm.posteriors(frames.coeffs)
    counts = gamma.sum(axis=0)
    if np.any(counts <= 0.0):
        raise EmptyComponent(f"components {np.where(counts <= 0)[0].tolist()} got no frames")
    atoms = (spectra.values_db @ gamma) / counts  # (M, G)
    return SpeechDictionary(atoms=atoms.T.copy(), frame_counts=counts)


def reconstruct_speech(
    dictionary: SpeechDictionary,
    gmm: GmmModel,
    spec: Spectrogram,
    n_mels: int = DEFAULT_N_MELS,
    n_mfcc: int = DEFAULT_N_MFCC,
) -> Spectrogram:
    """Speech-only spectrogram: per-frame convex combination of atoms.

    Posteriors come from the frame's RASTA-MFCC under the mixture, so
    the output lives inside the convex hull of the dictionary.
    """
    if dictionary.n_bins != spec.n_bins:
        raise ShapeMismatch(
            f"dictionary atoms have {dictionary.n_bins} bins, spectrogram {spec.n_bins}"
        )
    if dictionary.n_atoms != gmm.n_components:
        raise ShapeMismatch("dictionary and mixture disagree on component count")
    feats = rasta_mfcc(spec, n_mels=n_mels, n_mfcc=n_mfcc)
    if feats.n_mfcc != gmm.dim:
        raise ShapeMismatch(
            f"mixture was trained on {gmm.dim}-dim features, got {feats.n_mfcc}"
        )
    gamma, _ = gmm.posteriors(feats.coeffs)
    values = dictionary.atoms.T @ gamma.T  # (M, T)
    return spec.with_values(values, origin=ORIGIN_SPEECH)


def spectral_subtract(observed: Spectrogram, speech_est: Spectrogram) -> Spectrogram:
    """Channel residual: mean-normalize both sides, subtract cell-wise.

    Subtracting each spectrogram's global mean dB removes overall gain,
    so the residual captures spectral shape only.
    """
    if observed.values_db.shape != speech_est.values_db.shape:
        raise ShapeMismatch(
            f"observed {observed.values_db.shape} vs estimate {speech_est.values_db.shape}"
        )
    obs = observed.values_db - observed.values_db.mean()
    est = speech_est.values_db - speech_est.values_db.mean()
    return observed.with_values(obs - est, origin=ORIGIN_RESIDUAL)
