"""Patch extraction, augmentation and the training loop.

Training pairs are (reconstructed, reference) images; the network
learns the residual between them.  Images are carved into square
patches on a regular grid, optionally augmented with the eight
dihedral transforms, shuffled, and fed through Adam in mini-batches
with a stepwise-decaying learning rate.

All randomness flows from one seeded generator (initialization first,
then the per-epoch shuffles), so a given seed reproduces the final
weights bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError
from .nn import (
    DEFAULT_DEPTH,
    DEFAULT_WIDTH,
    VARIANT_MASKED,
    VARIANT_PLAIN,
    AdamState,
    Network,
    adam_init,
    adam_step,
    clip_gradients,
    compute_gradients,
    init_network,
)

PATCH_SIZE = 41

# The masked loss averages 25% smaller than the plain one (a quarter of
# the pixels are zeroed), so the masked variant trains at 4/3 the rate.
MASKED_LR_FACTOR = 4.0 / 3.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 10
    grad_clip: float = 0.1
    patch_size: int = PATCH_SIZE
    patch_stride: int | None = None
    augment: bool = True
    shift_count: int = 1
    qs_lr_factor: float = MASKED_LR_FACTOR
    depth: int = DEFAULT_DEPTH
    width: int = DEFAULT_WIDTH
    variant: str = VARIANT_PLAIN
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.learning_rate <= 0.0 or self.lr_decay <= 0.0:
            raise ValueError("learning_rate and lr_decay must be positive")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")
        if self.grad_clip <= 0.0:
            raise ValueError("grad_clip must be positive")
        if self.patch_stride is not None and self.patch_stride < 1:
            raise ValueError("patch_stride must be >= 1")
        if self.shift_count not in (1, 2, 4, 8):
            raise ValueError(f"shift_count must be 1, 2, 4 or 8, got {self.shift_count}")
        if self.variant not in (VARIANT_PLAIN, VARIANT_MASKED):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def stride(self) -> int:
        return self.patch_stride if self.patch_stride is not None else self.patch_size


def lr_for_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate for a 1-indexed epoch, including the variant factor.

    The base rate drops by `lr_decay` after every `lr_decay_every`
    epochs; the masked variant runs `qs_lr_factor` (4/3) higher
    throughout.
    """
    if epoch < 1:
        raise ValueError("epochs are numbered from 1")
    steps = (epoch - 1) // config.lr_decay_every
    lr = config.learning_rate * config.lr_decay**steps
    if config.variant == VARIANT_MASKED:
        lr *= config.qs_lr_factor
    return lr


def extract_patches(
    image: np.ndarray,
    target: np.ndarray,
    size: int = PATCH_SIZE,
    stride: int | None = None,
    mask_bits: np.ndarray | None = None,
):
    """Carve aligned square patches from an image/target pair.

    Windows start at multiples of `stride` (default: non-overlapping)
    and only full windows are kept.  Returns (inputs, targets, keep)
    stacked as (n, size, size) arrays; `keep` is None unless
    `mask_bits` is given, in which case it is 1 at unmeasured pixels.
    """
    if image.shape != target.shape:
        raise DataError(
            f"image/target shapes differ: {image.shape} vs {target.shape}"
        )
    if mask_bits is not None and mask_bits.shape != image.shape:
        raise DataError("mask shape does not match the image")
    stride = stride or size
    h, w = image.shape
    ys = range(0, h - size + 1, stride)
    xs = range(0, w - size + 1, stride)
    inputs, targets, keeps = [], [], []
    for y in ys:
        for x in xs:
            win = np.s_[y : y + size, x : x + size]
            inputs.append(image[win])
            targets.append(target[win])
            if mask_bits is not None:
                keeps.append(1.0 - mask_bits[win])
    if not inputs:
        empty = np.empty((0, size, size))
        return empty, empty.copy(), (empty.copy() if mask_bits is not None else None)
    inputs = np.stack(inputs).astype(np.float64)
    targets = np.stack(targets).astype(np.float64)
    keep = np.stack(keeps).astype(np.float64) if mask_bits is not None else None
    return inputs, targets, keep


def augment_dihedral(patches: np.ndarray) -> np.ndarray:
    """All eight rotations/reflections of each patch, stacked per transform.

    Input (n, s, s) becomes (8n, s, s): the four rotations of the
    originals, then the four rotations of the horizontal flips.
    """
    if patches.shape[1] != patches.shape[2]:
        raise DataError(f"dihedral augmentation needs square patches, got {patches.shape}")
    rotations = [np.rot90(patches, k, axes=(1, 2)) for k in range(4)]
    flipped = patches[:, :, ::-1]
    rotations += [np.rot90(flipped, k, axes=(1, 2)) for k in range(4)]
    return np.concatenate(rotations, axis=0)


@dataclass
class PatchSet:
    """Training patches, already scaled to [0, 1] residual form."""

    inputs: np.ndarray  # (n, s, s) reconstructed intensities / 255
    targets: np.ndarray  # (n, s, s) residual (reference - input) / 255
    keep: np.ndarray | None  # (n, s, s) 1 where the loss counts, or None

    def __len__(self) -> int:
        return self.inputs.shape[0]


def build_patch_set(triples, config: TrainConfig) -> PatchSet:
    """Assemble the patch set from (input, reference, mask_bits) triples.

    Images arrive in [0, 255]; `mask_bits` may be None per triple (it
    is required when the config variant masks the loss).  Augmentation
    applies the dihedral transforms consistently across input, target
    and keep mask.
    """
    masked = config.variant == VARIANT_MASKED
    all_inputs, all_targets, all_keeps = [], [], []
    for recon, reference, mask_bits in triples:
        if masked and mask_bits is None:
            raise DataError("masked training needs the sampling mask per image")
        inputs, targets, keep = extract_patches(
            np.asarray(recon, dtype=np.float64) / 255.0,
            (np.asarray(reference, dtype=np.float64) - recon) / 255.0,
            size=config.patch_size,
            stride=config.stride,
            mask_bits=mask_bits if masked else None,
        )
        all_inputs.append(inputs)
        all_targets.append(targets)
        if masked:
            all_keeps.append(keep)
    inputs = np.concatenate(all_inputs, axis=0)
    targets = np.concatenate(all_targets, axis=0)
    keep = np.concatenate(all_keeps, axis=0) if masked else None
    if len(inputs) == 0:
        raise DataError("no training patches (images smaller than the patch size?)")
    if config.augment:
        inputs = augment_dihedral(inputs)
        targets = augment_dihedral(targets)
        if keep is not None:
            keep = augment_dihedral(keep)
    return PatchSet(inputs=inputs, targets=targets, keep=keep)


@dataclass
class TrainStep:
    epoch: int
    step: int
    learning_rate: float
    loss: float


def train(
    dataset,
    config: TrainConfig,
    log_path=None,
) -> tuple[Network, list[TrainStep]]:
    """Train a fresh network on (input, reference, mask_bits) triples.

    Returns the network together with the per-step history; `log_path`
    additionally writes the history as CSV.
    """
    return train_on_patches(build_patch_set(dataset, config), config, log_path)


def train_on_patches(
    patches: PatchSet,
    config: TrainConfig,
    log_path=None,
) -> tuple[Network, list[TrainStep]]:
    """Train a fresh network on an already-built patch set.

    Batches are drawn without replacement from a seeded shuffle per
    epoch; the last short batch is kept.  Raises NumericError if the
    loss goes non-finite.
    """
    if len(patches) == 0:
        raise DataError("empty patch set")
    rng = np.random.default_rng(config.seed)
    net = init_network(
        depth=config.depth, width=config.width, variant=config.variant, rng=rng
    )
    state = adam_init(net)
    history: list[TrainStep] = []
    n = len(patches)
    inputs = patches.inputs[..., None]
    targets = patches.targets[..., None]
    keep = patches.keep[..., None] if patches.keep is not None else None

    for epoch in range(1, config.epochs + 1):
        lr = lr_for_epoch(config, epoch)
        order = rng.permutation(n)
        for step, start in enumerate(range(0, n, config.batch_size), start=1):
            idx = order[start : start + config.batch_size]
            batch_keep = keep[idx] if keep is not None else None
            loss, grads = compute_gradients(
                net, inputs[idx], targets[idx], batch_keep
            )
            if not math.isfinite(loss):
                raise NumericError(
                    f"loss became non-finite at epoch {epoch} step {step}"
                )
            grads = clip_gradients(grads, config.grad_clip)
            adam_step(net, grads, state, lr)
            history.append(TrainStep(epoch=epoch, step=step, learning_rate=lr, loss=loss))

    if log_path is not None:
        write_history(history, log_path)
    return net, history


def write_history(history: list[TrainStep], path) -> None:
    """Training log as CSV: epoch, step, learning rate, loss."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,step,lr,loss\n")
        for row in history:
            fh.write(f"{row.epoch},{row.step},{row.learning_rate:.10g},{row.loss:.10g}\n")
