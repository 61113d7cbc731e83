"""No-reference image quality network and its supervised training.

A small convolutional scorer maps an image patch to one scalar.  It is
trained to regress reward_target (gradient SSIM plus an MSE term against a
standard-dose reconstruction), after which score differences serve as the
reinforcement reward: r = score(after) - score(before).  Inputs are
window-normalized to [0, 1]; targets are computed on window-clipped HU.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .nn.layers import Conv2D, Dense, ELU, GlobalAvgPool, Sequential
from .nn.adam import Adam
from .nn.checkpoint import save_checkpoint, load_checkpoint, restore_parameters
from .metrics import EvalWindow, SOFT_TISSUE_WINDOW, reward_target

log = logging.getLogger(__name__)

# receptive field of the four stacked 3x3 convolutions
MIN_PATCH = 9


def build_reward_net(seed: int = 0, dtype=np.float32) -> Sequential:
    """Four 3x3 conv layers (16, 16, 32, 32) with eLU, global average
    pooling, a 32-unit dense layer and a scalar output."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return Sequential([
        Conv2D(1, 16, padding="same", rng=rng, dtype=dtype, name="conv1"),
        ELU(),
        Conv2D(16, 16, padding="same", rng=rng, dtype=dtype, name="conv2"),
        ELU(),
        Conv2D(16, 32, padding="same", rng=rng, dtype=dtype, name="conv3"),
        ELU(),
        Conv2D(32, 32, padding="same", rng=rng, dtype=dtype, name="conv4"),
        ELU(),
        GlobalAvgPool(),
        Dense(32, 32, rng=rng, dtype=dtype, name="dense1"),
        ELU(),
        Dense(32, 1, rng=rng, dtype=dtype, name="dense2"),
    ], name="reward")


def save_reward_net(path, net: Sequential, extra_meta: dict | None = None) -> None:
    meta = {"window": [SOFT_TISSUE_WINDOW.lo, SOFT_TISSUE_WINDOW.hi]}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, "reward", meta, net.parameters())


def load_reward_net(path, dtype=np.float32) -> Sequential:
    kind, _meta, tensors = load_checkpoint(path)
    if kind != "reward":
        raise ValueError(f"{path}: checkpoint kind {kind!r} is not a reward net")
    net = build_reward_net(0, dtype)
    restore_parameters(net.parameters(), tensors, dtype)
    return net


def _check_patch(patch: np.ndarray) -> np.ndarray:
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2:
        raise ValueError(f"expected a 2D patch, got shape {patch.shape}")
    if min(patch.shape) < MIN_PATCH:
        raise ValueError(f"patch {patch.shape} smaller than the network's "
                         f"{MIN_PATCH}x{MIN_PATCH} receptive field")
    return patch


def irqm(net: Sequential, patch: np.ndarray) -> float:
    """Scalar quality score of one network-ready 2D patch."""
    patch = _check_patch(patch)
    x = patch[None, None].astype(np.float32)
    return float(net.forward(x)[0, 0])


def q_reward(net: Sequential, before: np.ndarray, after: np.ndarray) -> float:
    """Reward of a filtering step: score(after) - score(before).

    Exactly antisymmetric: swapping the arguments flips the sign.
    """
    return irqm(net, after) - irqm(net, before)


class RewardScorer:
    """Applies the quality network to HU images, handling normalization.

    Volumes are scored as the mean over axial slices.
    """

    def __init__(self, net: Sequential, window: EvalWindow = SOFT_TISSUE_WINDOW,
                 chunk: int = 512):
        self.net = net
        self.window = window
        self.chunk = chunk

    def normalize(self, values_hu: np.ndarray) -> np.ndarray:
        v = np.asarray(values_hu, dtype=np.float64)
        return (self.window.clip(v) - self.window.lo) / self.window.width

    def _score_batch(self, batch: np.ndarray) -> np.ndarray:
        """batch (n, h, w) of normalized patches -> (n,) scores."""
        out = np.empty(batch.shape[0])
        x = batch[:, None].astype(np.float32)
        for lo in range(0, x.shape[0], self.chunk):
            sl = slice(lo, min(lo + self.chunk, x.shape[0]))
            out[sl] = self.net.forward(x[sl])[:, 0]
        return out

    def score_image(self, image_hu: np.ndarray) -> float:
        return float(self._score_batch(self.normalize(_check_patch(image_hu))[None])[0])

    def score_volume(self, values_hu: np.ndarray) -> float:
        values_hu = np.asarray(values_hu, dtype=np.float64)
        if values_hu.ndim != 3:
            raise ValueError(f"expected a 3D volume, got shape {values_hu.shape}")
        slices = np.moveaxis(self.normalize(values_hu), 2, 0)
        return float(self._score_batch(slices).mean())

    def score_blocks(self, blocks_hu: np.ndarray) -> np.ndarray:
        """blocks (n, bx, by, bz) -> (n,) mean score over each block's
        axial slices."""
        blocks_hu = np.asarray(blocks_hu, dtype=np.float64)
        if blocks_hu.ndim != 4:
            raise ValueError(f"expected (n, bx, by, bz), got shape {blocks_hu.shape}")
        n, bx, by, bz = blocks_hu.shape
        slices = np.moveaxis(self.normalize(blocks_hu), 3, 1).reshape(n * bz, bx, by)
        return self._score_batch(slices).reshape(n, bz).mean(axis=1)


@dataclass
class RewardTrainConfig:
    """Knobs for supervised reward training."""

    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-4
    # per-epoch multiplicative step-size decay; 1.0 keeps it constant.
    # Annealing tames Adam's fixed-magnitude steps once the loss is small.
    lr_decay: float = 1.0
    seed: int = 0
    # augmentation: shared flips/rotations, plus a probability of blurring
    # the degraded side (and the Gaussian widths drawn from when it fires)
    augment: bool = True
    blur_prob: float = 0.3
    blur_sigmas: tuple = (0.5, 1.0)
    window: EvalWindow = field(default_factory=lambda: SOFT_TISSUE_WINDOW)


def augment_pair(noisy: np.ndarray, clean: np.ndarray, rng: np.random.Generator,
                 cfg: RewardTrainConfig):
    """Shared flips/rotations; optional blur on the degraded side only.

    Returns (noisy, clean, blurred).  The geometric transforms leave
    reward_target unchanged; a blur does not, so the caller must recompute
    the target when blurred is True.
    """
    k = int(rng.integers(0, 4))
    noisy = np.rot90(noisy, k)
    clean = np.rot90(clean, k)
    if rng.random() < 0.5:
        noisy = noisy[::-1]
        clean = clean[::-1]
    if rng.random() < 0.5:
        noisy = noisy[:, ::-1]
        clean = clean[:, ::-1]
    blurred = rng.random() < cfg.blur_prob
    if blurred:
        sigma = cfg.blur_sigmas[int(rng.integers(0, len(cfg.blur_sigmas)))]
        noisy = gaussian_filter(np.ascontiguousarray(noisy), sigma)
    return np.ascontiguousarray(noisy), np.ascontiguousarray(clean), blurred


def train_reward_net(pairs, cfg: RewardTrainConfig, net: Sequential | None = None):
    """Train the scorer on (degraded, reference) HU patch pairs.

    Targets are reward_target on each pair.  Patches of different sizes are
    batched by size.  Shared flips/rotations leave the target unchanged;
    when the blur augmentation fires the target is recomputed for the
    blurred pair.  Returns (net, history) where history has one dict per
    epoch with the mean training loss.
    """
    if not pairs:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(cfg.seed)
    if net is None:
        net = build_reward_net(int(rng.integers(2 ** 31)))
    window = cfg.window
    raw = [(np.asarray(n, dtype=np.float64), np.asarray(c, dtype=np.float64))
           for n, c in pairs]
    targets = np.array([reward_target(n, c, window) for n, c in raw])

    def normalize(img):
        return (window.clip(img) - window.lo) / window.width

    opt = Adam(net.parameters(), lr=cfg.lr)
    history = []
    by_size: dict[tuple, list[int]] = {}
    for i, (n, _c) in enumerate(raw):
        by_size.setdefault(n.shape, []).append(i)
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr * cfg.lr_decay ** epoch
        batches = []
        for shape in sorted(by_size):
            idx = np.array(by_size[shape])
            rng.shuffle(idx)
            for lo in range(0, idx.size, cfg.batch_size):
                batches.append(idx[lo:lo + cfg.batch_size])
        order = rng.permutation(len(batches))
        losses = []
        for b in order:
            idx = batches[b]
            xs = []
            t = targets[idx].copy()
            for j, i in enumerate(idx):
                noisy, clean = raw[i]
                if cfg.augment:
                    noisy, clean, blurred = augment_pair(noisy, clean, rng, cfg)
                    if blurred:
                        t[j] = reward_target(noisy, clean, window)
                xs.append(normalize(noisy))
            x = np.stack(xs)[:, None].astype(np.float32)
            opt.zero_grad()
            pred = net.forward(x)[:, 0]
            err = pred - t
            loss = float(np.mean(err ** 2))
            grad = (2.0 * err / err.size)[:, None].astype(np.float32)
            net.backward(grad)
            opt.step()
            losses.append(loss)
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
        log.info("reward epoch %d: loss %.5f", epoch, history[-1]["loss"])
    return net, history
