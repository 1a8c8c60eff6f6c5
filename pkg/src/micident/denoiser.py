"""Residual convolutional denoiser for spectrogram patches.

A small DnCNN-style stack of 3x3 convolutions (stride 1, zero padding 1,
ReLU between layers, none on the last) estimates the noise component of
a dB patch; subtracting it yields the denoised patch. Forward, backward,
and the Adam loop are implemented directly in numpy so gradients are
exactly checkable against finite differences and training is bit-for-bit
reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DivergedLoss, EmptyDataset, RecordingTooShort, ShapeMismatch
from .types import ORIGIN_DENOISED, Spectrogram
from .dsp import assemble_patches, split_patches

KERNEL = 3
PAD = KERNEL // 2

# Maps the working dB range [-120, 0] onto [-1, 1]. The residual output
# is scaled only (not shifted), so an all-zero network emits a 0 dB
# residual and denoising degenerates to the identity.
SHIFT_DB = -60.0
SCALE_DB = 60.0


@dataclass
class ConvLayer:
    weights: np.ndarray  # (c_out, c_in, 3, 3)
    bias: np.ndarray  # (c_out,)


class DenoiserModel:
    """Stack of conv layers mapping 1 -> C -> ... -> C -> 1 channels."""

    def __init__(
        self,
        layers: List[ConvLayer],
        patch_side: int,
        shift_db: float = SHIFT_DB,
        scale_db: float = SCALE_DB,
        meta: Optional[dict] = None,
    ):
        if layers[0].weights.shape[1] != 1 or layers[-1].weights.shape[0] != 1:
            raise ShapeMismatch("first layer must map 1->C channels, last C->1")
        self.layers = layers
        self.patch_side = patch_side
        self.shift_db = shift_db
        self.scale_db = scale_db
        self.meta = meta or {}

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def channels(self) -> int:
        return self.layers[0].weights.shape[0]

    @classmethod
    def initialize(
        cls,
        depth: int = 8,
        channels: int = 32,
        patch_side: int = 256,
        seed: int = 0,
        dtype=np.float32,
    ) -> "DenoiserModel":
        """He-uniform fan-in initialization, zero biases, seeded."""
        if depth < 2:
            raise ShapeMismatch("need at least an input and an output layer")
        rng = np.random.default_rng(seed)
        sizes = [1] + [channels] * (depth - 1) + [1]
        layers = []
        for c_in, c_out in zip(sizes[:-1], sizes[1:]):
            fan_in = c_in * KERNEL * KERNEL
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(c_out, c_in, KERNEL, KERNEL))
            layers.append(
                ConvLayer(weights=w.astype(dtype), bias=np.zeros(c_out, dtype=dtype))
            )
        return cls(layers, patch_side=patch_side, meta={"seed": seed})

    def parameters(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def save(self, path) -> None:
        from .modelio import save_container

        arrays = []
        for i, layer in enumerate(self.layers):
            arrays.append((f"layer{i}.weights", layer.weights))
            arrays.append((f"layer{i}.bias", layer.bias))
        meta = {
            "depth": self.depth,
            "channels": self.channels,
            "patch_side": self.patch_side,
            "shift_db": self.shift_db,
            "scale_db": self.scale_db,
        }
        meta.update(self.meta)
        save_container(path, "denoiser", meta, arrays)

    @classmethod
    def load(cls, path) -> "DenoiserModel":
        from .modelio import load_container

        kind, meta, arrays = load_container(path)
        if kind != "denoiser":
            raise ShapeMismatch(f"expected a denoiser container, got {kind!r}")
        layers = []
        for i in range(meta["depth"]):
            layers.append(
                ConvLayer(
                    weights=arrays[f"layer{i}.weights"].astype(np.float32),
                    bias=arrays[f"layer{i}.bias"].astype(np.float32),
                )
            )
        extra = {
            k: v
            for k, v in meta.items()
            if k not in ("depth", "channels", "patch_side", "shift_db", "scale_db")
        }
        return cls(
            layers,
            patch_side=meta["patch_side"],
            shift_db=meta["shift_db"],
            scale_db=meta["scale_db"],
            meta=extra,
        )


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution; x (B, Cin, H, W) -> (B, Cout, H, W)."""
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    windows = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
    y = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2)) + b[None, :, None, None]


def _forward_batch(model: DenoiserModel, patches: np.ndarray, keep_cache: bool = False):
    """Run normalized patches (B, M, M) through the stack.

    Returns (residual_db, cache); cache holds per-layer inputs and
    pre-activations when requested by the backward pass.
    """
    dtype = model.layers[0].weights.dtype
    z = ((patches - model.shift_db) / model.scale_db).astype(dtype)[:, None, :, :]
    inputs = []
    preacts = []
    n_layers = len(model.layers)
    for i, layer in enumerate(model.layers):
        if keep_cache:
            inputs.append(z)
        a = _conv2d(z, layer.weights, layer.bias)
        if i < n_layers - 1:
            if keep_cache:
                preacts.append(a)
            z = np.maximum(a, 0.0)
        else:
            z = a
    residual_db = z[:, 0, :, :].astype(np.float64) * model.scale_db
    return residual_db, (inputs, preacts)


def forward(model: DenoiserModel, patch: np.ndarray) -> np.ndarray:
    """Noise estimate (dB) for one M x M patch."""
    patch = np.asarray(patch, dtype=np.float64)
    m = model.patch_side
    if patch.shape != (m, m):
        raise ShapeMismatch(f"expected a {m}x{m} patch, got {patch.shape}")
    residual, _ = _forward_batch(model, patch[None, :, :])
    return residual[0]


def denoise_patch(model: DenoiserModel, patch: np.ndarray, floor_db: float = -120.0) -> np.ndarray:
    """Subtract the estimated noise and re-clamp to the dB floor."""
    return np.maximum(np.asarray(patch, dtype=np.float64) - forward(model, patch), floor_db)


def denoise_spectrogram(model: DenoiserModel, spec: Spectrogram) -> Spectrogram:
    """Denoise patch by patch; remainder frames pass through unchanged."""
    if spec.n_bins != model.patch_side:
        raise ShapeMismatch(
            f"model expects {model.patch_side} bins, spectrogram has {spec.n_bins}"
        )
    if spec.n_frames < spec.n_bins:
        raise RecordingTooShort(
            f"need at least {spec.n_bins} frames, got {spec.n_frames}"
        )
    grid, remainder = split_patches(spec)
    residual, _ = _forward_batch(model, grid.patches)
    grid.patches = np.maximum(grid.patches - residual, spec.floor_db)
    out = assemble_patches(grid, remainder, like=spec)
    out.origin = ORIGIN_DENOISED
    return out


@dataclass
class PatchPair:
    """One training example: a noisy patch and its clean original."""

    noisy: np.ndarray
    clean: np.ndarray
    snr_db: float
    source_id: str = ""

    def __post_init__(self):
        self.noisy = np.asarray(self.noisy, dtype=np.float64)
        self.clean = np.asarray(self.clean, dtype=np.float64)
        if self.noisy.shape != self.clean.shape:
            raise ShapeMismatch(
                f"noisy {self.noisy.shape} and clean {self.clean.shape} differ"
            )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 64
    batch_size: int = 8
    seed: int = 0
    val_fraction: float = 0.1


@dataclass
class TrainingLog:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)


def _loss_and_grad_arrays(
    model: DenoiserModel, noisy: np.ndarray, target: np.ndarray
) -> Tuple[float, List[Tuple[np.ndarray, np.ndarray]]]:
    """Mean-squared error of the dB residual estimate plus its gradient."""
    residual, (inputs, preacts) = _forward_batch(model, noisy, keep_cache=True)
    diff = residual - target
    loss = float(np.mean(diff ** 2))
    dtype = model.layers[0].weights.dtype
    # d loss / d network-output, folding in the dB rescaling of the output.
    d_out = (2.0 * model.scale_db / diff.size) * diff
    d_z = d_out.astype(dtype)[:, None, :, :]
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if i < len(model.layers) - 1:
            d_z = d_z * (preacts[i] > 0)
        x = inputs[i]
        xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
        windows = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))
        d_w = np.tensordot(d_z, windows, axes=([0, 2, 3], [0, 2, 3]))
        d_b = d_z.sum(axis=(0, 2, 3))
        grads[i] = (d_w, d_b)
        if i > 0:
            w_rot = layer.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gp = np.pad(d_z, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
            gwin = sliding_window_view(gp, (KERNEL, KERNEL), axis=(2, 3))
            d_z = np.ascontiguousarray(
                np.tensordot(gwin, w_rot, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
            )
    return loss, grads


def gradients(model: DenoiserModel, batch: Sequence[PatchPair]):
    """Exact gradients of the batch MSE w.r.t. every weight and bias.

    Returns (grads, loss) where grads[i] is (d_weights, d_bias) for
    layer i. The loss target for each pair is noisy - clean.
    """
    if len(batch) == 0:
        raise EmptyDataset("gradient of an empty batch")
    m = model.patch_side
    for pair in batch:
        if pair.noisy.shape != (m, m):
            raise ShapeMismatch(f"expected {m}x{m} patches, got {pair.noisy.shape}")
    noisy = np.stack([p.noisy for p in batch])
    target = noisy - np.stack([p.clean for p in batch])
    loss, grads = _loss_and_grad_arrays(model, noisy, target)
    return grads, loss


def batch_loss(model: DenoiserModel, pairs: Sequence[PatchPair], chunk: int = 16) -> float:
    """Residual-MSE of a pair set under the current model (no gradients)."""
    total = 0.0
    count = 0
    for start in range(0, len(pairs), chunk):
        part = pairs[start : start + chunk]
        noisy = np.stack([p.noisy for p in part])
        target = noisy - np.stack([p.clean for p in part])
        residual, _ = _forward_batch(model, noisy)
        total += float(np.sum((residual - target) ** 2))
        count += residual.size
    return total / count


class AdamState:
    """Adam moment buffers for one parameter list."""

    def __init__(self, params: List[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray], cfg: TrainConfig) -> None:
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= cfg.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + cfg.epsilon
            )


def _split_by_recording(
    pairs: Sequence[PatchPair], val_fraction: float, rng: np.random.Generator
) -> Tuple[List[int], List[int]]:
    """Train/validation indices, splitting whole recordings only."""
    ids = sorted({p.source_id for p in pairs})
    if len(ids) < 2:
        idx = list(range(len(pairs)))
        return idx, idx
    shuffled = list(ids)
    rng.shuffle(shuffled)
    n_val = max(1, int(round(val_fraction * len(ids))))
    val_ids = set(shuffled[:n_val])
    train_idx = [i for i, p in enumerate(pairs) if p.source_id not in val_ids]
    val_idx = [i for i, p in enumerate(pairs) if p.source_id in val_ids]
    if not train_idx:
        return val_idx, val_idx
    return train_idx, val_idx


def train_denoiser(
    pairs: Sequence[PatchPair],
    cfg: TrainConfig = TrainConfig(),
    depth: int = 8,
    channels: int = 32,
    model: Optional[DenoiserModel] = None,
) -> Tuple[DenoiserModel, TrainingLog]:
    """Adam-train the residual estimator on noisy/clean patch pairs.

    Deterministic for a given seed: weight init, the train/validation
    split, and per-epoch batch order all derive from cfg.seed.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyDataset("no patch pairs to train on")
    side = pairs[0].noisy.shape[0]
    for p in pairs:
        if p.noisy.shape != (side, side):
            raise ShapeMismatch("all patches must share one square size")
    if model is None:
        model = DenoiserModel.initialize(
            depth=depth, channels=channels, patch_side=side, seed=cfg.seed
        )
    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _split_by_recording(pairs, cfg.val_fraction, rng)
    train_pairs = [pairs[i] for i in train_idx]
    val_pairs = [pairs[i] for i in val_idx]

    params = model.parameters()
    adam = AdamState(params)
    log = TrainingLog()
    order = np.arange(len(train_pairs))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        epoch_total = 0.0
        epoch_count = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_pairs[i] for i in order[start : start + cfg.batch_size]]
            noisy = np.stack([p.noisy for p in batch])
            target = noisy - np.stack([p.clean for p in batch])
            loss, grads = _loss_and_grad_arrays(model, noisy, target)
            flat = [g for pair in grads for g in pair]
            adam.step(params, flat, cfg)
            epoch_total += loss * len(batch)
            epoch_count += len(batch)
        log.train_loss.append(epoch_total / epoch_count)
        val = batch_loss(model, val_pairs)
        log.val_loss.append(val)
        if not np.isfinite(val):
            raise DivergedLoss(
                f"validation loss became {val} at epoch {len(log.val_loss)}"
            )
    model.meta.update({"seed": cfg.seed, "epochs": cfg.epochs})
    return model, log
