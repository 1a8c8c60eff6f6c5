"""One-vs-rest soft-margin SVM with RBF kernel, trained by SMO.

The dual problems are solved with maximal-violating-pair working-set
selection. The kernel width follows the rule gamma = 1/(L * var), where
var is the mean per-dimension variance of the normalized training
features (about 1 after z-scoring).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyDataset, LengthMismatch, ShapeMismatch, SingleClass
from .types import FeatureStats, Fingerprint

VARIANCE_FLOOR = 1e-8


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a_i - b_j||^2) for all pairs."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(d2, 0.0))


def compute_gamma(length: int, variance: float) -> float:
    """Kernel width 1/(L * var), with the variance floored at 1e-8."""
    if length < 1:
        raise ShapeMismatch(f"feature length must be >= 1, got {length}")
    return 1.0 / (length * max(variance, VARIANCE_FLOOR))


def smo_solve(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = 1e-3,
    max_steps: Optional[int] = None,
) -> Tuple[np.ndarray, float, bool]:
    """Solve the binary SVM dual by maximal-violating-pair SMO.

    Minimizes 0.5 a'Qa - sum(a) with Q = yy' * K subject to y'a = 0 and
    0 <= a <= C. Returns (alpha, bias, converged); bias is chosen so the
    decision value is sum_i alpha_i y_i K(x_i, x) + bias.
    """
    n = len(y)
    if max_steps is None:
        max_steps = max(10_000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    pos = y > 0
    converged = False
    for _ in range(max_steps):
        vals = -y * grad
        up = (pos & (alpha < c)) | (~pos & (alpha > 0))
        low = (~pos & (alpha < c)) | (pos & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        up_vals = np.where(up, vals, -np.inf)
        low_vals = np.where(low, vals, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        if up_vals[i] - low_vals[j] <= tol:
            converged = True
            break
        quad = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        delta = (up_vals[i] - low_vals[j]) / max(quad, 1e-12)
        cap_i = (c - alpha[i]) if y[i] > 0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0 else (c - alpha[j])
        delta = min(delta, cap_i, cap_j)
        alpha[i] += y[i] * delta
        alpha[j] -= y[j] * delta
        grad += delta * y * (kernel[:, i] - kernel[:, j])

    vals = -y * grad
    up = (pos & (alpha < c)) | (~pos & (alpha > 0))
    low = (~pos & (alpha < c)) | (pos & (alpha > 0))
    m_up = np.max(np.where(up, vals, -np.inf)) if up.any() else -np.inf
    m_low = np.min(np.where(low, vals, np.inf)) if low.any() else np.inf
    if np.isfinite(m_up) and np.isfinite(m_low):
        bias = (m_up + m_low) / 2.0
    elif np.isfinite(m_up):
        bias = m_up
    elif np.isfinite(m_low):
        bias = m_low
    else:
        bias = 0.0
    return alpha, float(bias), converged


@dataclass
class BinaryMachine:
    """One one-vs-rest machine: support vectors and dual coefficients."""

    support_vectors: np.ndarray  # (n_sv, L)
    dual_coef: np.ndarray  # (n_sv,) alpha_i * y_i
    bias: float
    converged: bool = True

    def decision_values(self, x: np.ndarray, gamma: float) -> np.ndarray:
        k = rbf_kernel(np.atleast_2d(x), self.support_vectors, gamma)
        return k @ self.dual_coef + self.bias


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    tol: float = 1e-3
    gamma: Optional[float] = None  # None: 1/(L * mean feature variance)
    seed: int = 0


@dataclass
class SvmModel:
    """Multi-class one-vs-rest classifier over normalized fingerprints."""

    classes: List[str]
    machines: List[BinaryMachine]
    gamma: float
    c: float
    variant: str
    stats_ref: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.machines[0].support_vectors.shape[1]

    def save(self, path) -> None:
        from .modelio import save_container

        arrays = []
        for i, machine in enumerate(self.machines):
            arrays.append((f"machine{i}.support_vectors", machine.support_vectors))
            arrays.append((f"machine{i}.dual_coef", machine.dual_coef))
        meta = {
            "classes": self.classes,
            "gamma": self.gamma,
            "c": self.c,
            "variant": self.variant,
            "stats_ref": self.stats_ref,
            "biases": [m.bias for m in self.machines],
            "converged": [bool(m.converged) for m in self.machines],
        }
        meta.update(self.meta)
        save_container(path, "svm", meta, arrays)

    @classmethod
    def load(cls, path) -> "SvmModel":
        from .modelio import load_container

        kind, meta, arrays = load_container(path)
        if kind != "svm":
            raise ShapeMismatch(f"expected an svm container, got {kind!r}")
        machines = []
        for i in range(len(meta["classes"])):
            machines.append(
                BinaryMachine(
                    support_vectors=arrays[f"machine{i}.support_vectors"],
                    dual_coef=arrays[f"machine{i}.dual_coef"],
                    bias=meta["biases"][i],
                    converged=meta["converged"][i],
                )
            )
        return cls(
            classes=list(meta["classes"]),
            machines=machines,
            gamma=meta["gamma"],
            c=meta["c"],
            variant=meta["variant"],
            stats_ref=meta.get("stats_ref", ""),
        )


def train_svm(
    features: Sequence[Fingerprint],
    labels: Sequence[str],
    cfg: SvmConfig = SvmConfig(),
) -> SvmModel:
    """Train J one-vs-rest binary machines on normalized fingerprints.

    Deterministic: example order is taken as given and maximal-violating-
    pair selection involves no randomness.
    """
    if len(features) != len(labels):
        raise LengthMismatch(f"{len(features)} features vs {len(labels)} labels")
    if not features:
        raise EmptyDataset("no training features")
    variant = features[0].variant
    x = np.stack([f.values for f in features])
    labels = list(labels)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes}")
    for cls_name in classes:
        if labels.count(cls_name) < 2:
            raise EmptyDataset(f"class {cls_name!r} has fewer than 2 examples")

    if cfg.gamma is not None:
        gamma = cfg.gamma
    else:
        gamma = compute_gamma(x.shape[1], float(np.mean(np.var(x, axis=0))))

    kernel = rbf_kernel(x, x, gamma)
    machines = []
    for cls_name in classes:
        y = np.where(np.asarray(labels) == cls_name, 1.0, -1.0)
        alpha, bias, converged = smo_solve(kernel, y, cfg.c, tol=cfg.tol)
        if not converged:
            warnings.warn(f"SMO budget exhausted for class {cls_name!r}; using best iterate")
        keep = alpha > 1e-12
        machines.append(
            BinaryMachine(
                support_vectors=x[keep].copy(),
                dual_coef=(alpha * y)[keep],
                bias=bias,
                converged=converged,
            )
        )
    return SvmModel(
        classes=classes,
        machines=machines,
        gamma=gamma,
        c=cfg.c,
        variant=variant,
        meta={"seed": cfg.seed},
    )


def decision_matrix(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Per-class decision values for a batch of normalized features."""
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_features:
        raise LengthMismatch(
            f"model expects {model.n_features} features, got {x.shape[1]}"
        )
    return np.stack(
        [m.decision_values(x, model.gamma) for m in model.machines], axis=1
    )


def predict(model: SvmModel, f: Fingerprint) -> Tuple[str, np.ndarray]:
    """Predicted label and per-class decision values.

    Ties break toward the lowest class index, deterministically.
    """
    if f.variant != model.variant:
        raise LengthMismatch(f"model is for {model.variant!r}, fingerprint is {f.variant!r}")
    values = decision_matrix(model, f.values[None, :])[0]
    return model.classes[int(np.argmax(values))], values


def kkt_violation(
    kernel: np.ndarray, y: np.ndarray, alpha: np.ndarray, bias: float, c: float
) -> float:
    """Worst KKT violation of a trained binary machine, for verification.

    At an exact optimum: alpha=0 implies y*f >= 1, 0<alpha<C implies
    y*f ~= 1, alpha=C implies y*f <= 1. Returns the largest margin-rule
    breach, which should be at solver tolerance.
    """
    f_vals = kernel @ (alpha * y) + bias
    margin = y * f_vals
    worst = 0.0
    edge = 1e-9 * max(1.0, c)
    for i in range(len(y)):
        if alpha[i] <= edge:
            worst = max(worst, 1.0 - margin[i])
        elif alpha[i] >= c - edge:
            worst = max(worst, margin[i] - 1.0)
        else:
            worst = max(worst, abs(margin[i] - 1.0))
    return worst
