"""Residual convolutional network for refining reconstructed images.

A plain stack of 3x3 convolutions with zero padding: ReLU after every
layer except the last, single input and output channel, 64 feature
channels in between.  The network predicts a residual image that is
added to its input; the masked variant applies that residual only at
unmeasured pixels, since measured ones are already exact.

Everything here runs on float64 numpy arrays.  Convolutions are
evaluated as nine shifted matrix products (one per kernel tap), which
keeps memory flat compared to im2col and is plenty fast at these sizes.
The core works on batches (n, h, w, c); single images are wrapped and
unwrapped at the public boundary.  Intensities are scaled to [0, 1]
inside this module; callers pass images in [0, 255].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

KERNEL = 3
DEFAULT_DEPTH = 20
DEFAULT_WIDTH = 64

VARIANT_PLAIN = "vdsr"
VARIANT_MASKED = "vdsr-qs"

GRAD_CLIP = 0.1

_MAGIC = b"VDSRQS1"
_VARIANT_TAGS = {VARIANT_PLAIN: 0, VARIANT_MASKED: 1}
_TAG_VARIANTS = {v: k for k, v in _VARIANT_TAGS.items()}


@dataclass
class ConvLayer:
    weights: np.ndarray = field(repr=False)  # (3, 3, cin, cout)
    bias: np.ndarray = field(repr=False)  # (cout,)


@dataclass
class Network:
    layers: list[ConvLayer]
    variant: str = VARIANT_PLAIN

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return self.layers[0].weights.shape[3]

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


def init_network(
    depth: int = DEFAULT_DEPTH,
    width: int = DEFAULT_WIDTH,
    variant: str = VARIANT_PLAIN,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> Network:
    """Gaussian-initialized network: std sqrt(2 / (9 * fan_in)), zero biases."""
    if depth < 2:
        raise ValueError("depth must be at least 2")
    if variant not in _VARIANT_TAGS:
        raise ValueError(f"unknown variant {variant!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    channels = [1] + [width] * (depth - 1) + [1]
    layers = []
    for cin, cout in zip(channels[:-1], channels[1:]):
        std = np.sqrt(2.0 / (KERNEL * KERNEL * cin))
        weights = rng.normal(0.0, std, size=(KERNEL, KERNEL, cin, cout))
        layers.append(ConvLayer(weights=weights, bias=np.zeros(cout)))
    return Network(layers=layers, variant=variant)


def _conv_forward(x: np.ndarray, layer: ConvLayer):
    """3x3 same-size convolution via nine shifted matmuls.

    `x` is (n, h, w, cin).  Returns the output and the zero-padded
    input (kept for backward).
    """
    n, h, w, cin = x.shape
    cout = layer.bias.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(layer.bias, (n * h * w, cout)).copy()
    for ky in range(KERNEL):
        for kx in range(KERNEL):
            taps = xp[:, ky : ky + h, kx : kx + w].reshape(-1, cin)
            out += taps @ layer.weights[ky, kx]
    return out.reshape(n, h, w, cout), xp


def _conv_backward(xp: np.ndarray, grad_out: np.ndarray, layer: ConvLayer):
    """Gradients of a 3x3 same-size convolution.

    `xp` is the padded input saved by the forward pass; `grad_out` is
    the loss gradient at the layer output.  Returns (dW, db, dx).
    """
    n, h, w, cout = grad_out.shape
    cin = layer.weights.shape[2]
    gflat = grad_out.reshape(-1, cout)
    dweights = np.empty_like(layer.weights)
    dxp = np.zeros_like(xp)
    for ky in range(KERNEL):
        for kx in range(KERNEL):
            taps = xp[:, ky : ky + h, kx : kx + w].reshape(-1, cin)
            dweights[ky, kx] = taps.T @ gflat
            dxp[:, ky : ky + h, kx : kx + w] += (
                gflat @ layer.weights[ky, kx].T
            ).reshape(n, h, w, cin)
    dbias = gflat.sum(axis=0)
    return dweights, dbias, dxp[:, 1:-1, 1:-1]


def _as_batch(x: np.ndarray):
    """Lift (h, w) or (h, w, c) or (n, h, w, c) to 4-D; remember how."""
    if x.ndim == 2:
        return x[None, :, :, None], "image"
    if x.ndim == 3:
        return x[None], "single"
    if x.ndim == 4:
        return x, "batch"
    raise ValueError(f"expected 2-D, 3-D or 4-D input, got shape {x.shape}")


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Predicted residual for `x` in [0, 1] scale.

    Accepts (h, w), (h, w, c) or (n, h, w, c); the output matches the
    input layout.
    """
    x, kind = _as_batch(np.asarray(x, dtype=np.float64))
    for i, layer in enumerate(net.layers):
        x, _ = _conv_forward(x, layer)
        if i < net.depth - 1:
            np.maximum(x, 0.0, out=x)
    if kind == "image":
        return x[0, :, :, 0]
    if kind == "single":
        return x[0]
    return x


def _forward_cached(net: Network, x: np.ndarray):
    """Forward pass keeping per-layer padded inputs and ReLU masks."""
    padded = []
    relu_masks = []
    for i, layer in enumerate(net.layers):
        x, xp = _conv_forward(x, layer)
        padded.append(xp)
        if i < net.depth - 1:
            mask = x > 0.0
            relu_masks.append(mask)
            x = x * mask
    return x, padded, relu_masks


def residual_loss(
    pred: np.ndarray, target: np.ndarray, keep: np.ndarray | None = None
):
    """Half mean squared error between residuals, and its gradient in `pred`.

    L = (1/2N) * sum((pred - target)^2).  `keep` (same shape, values in
    {0, 1}) zeroes masked-out pixels before squaring; the mean stays
    over all N elements either way.
    """
    diff = pred - target
    if keep is not None:
        diff = diff * keep
    n = diff.size
    loss = 0.5 * float(np.mean(diff * diff))
    grad = diff / n
    if keep is not None:
        grad = grad * keep
    return loss, grad


def loss(
    prediction: np.ndarray,
    target: np.ndarray,
    mask_bits: np.ndarray | None = None,
) -> float:
    """Training loss value; with mask bits, measured pixels are zeroed."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError(
            f"prediction/target shapes differ: {prediction.shape} vs {target.shape}"
        )
    keep = None
    if mask_bits is not None:
        if mask_bits.shape != prediction.shape:
            raise ValueError("mask shape does not match the prediction")
        keep = 1.0 - np.asarray(mask_bits, dtype=np.float64)
    return residual_loss(prediction, target, keep)[0]


def compute_gradients(
    net: Network,
    x: np.ndarray,
    target: np.ndarray,
    keep: np.ndarray | None = None,
):
    """Loss and parameter gradients for a batch of residual pairs.

    `x`, `target` and `keep` are (n, h, w, 1) in [0, 1] scale (a single
    (h, w, 1) sample is accepted too).  Returns (loss, [(dW, db), ...])
    ordered like net.layers.
    """
    x, kind = _as_batch(np.asarray(x, dtype=np.float64))
    target = target[None] if kind == "single" else target
    if keep is not None and kind == "single":
        keep = keep[None]
    pred, padded, relu_masks = _forward_cached(net, x)
    loss, grad = residual_loss(pred, target, keep)
    grads: list = [None] * net.depth
    for i in range(net.depth - 1, -1, -1):
        if i < net.depth - 1:
            grad = grad * relu_masks[i]
        dweights, dbias, grad = _conv_backward(padded[i], grad, net.layers[i])
        grads[i] = (dweights, dbias)
    return loss, grads


def clip_gradients(grads, limit: float = GRAD_CLIP):
    """Clamp every gradient entry to [-limit, limit], elementwise."""
    return [
        (np.clip(dw, -limit, limit), np.clip(db, -limit, limit)) for dw, db in grads
    ]


@dataclass
class AdamState:
    step: int
    m: list
    v: list


def adam_init(net: Network) -> AdamState:
    m = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
    v = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
    return AdamState(step=0, m=m, v=v)


def adam_step(
    net: Network,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    correct1 = 1.0 - beta1**t
    correct2 = 1.0 - beta2**t
    for layer, (dw, db), ms, vs in zip(net.layers, grads, state.m, state.v):
        for param, grad, m, v in (
            (layer.weights, dw, ms[0], vs[0]),
            (layer.bias, db, ms[1], vs[1]),
        ):
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            param -= lr * (m / correct1) / (np.sqrt(v / correct2) + eps)


def apply_vdsr(net: Network, image: np.ndarray) -> np.ndarray:
    """Add the predicted residual everywhere.  Image in [0, 255]."""
    x = np.asarray(image, dtype=np.float64) / 255.0
    refined = x + forward(net, x)
    return np.clip(refined * 255.0, 0.0, 255.0)


def apply_vdsr_qs(net: Network, image: np.ndarray, mask_bits: np.ndarray) -> np.ndarray:
    """Add the predicted residual at unmeasured pixels only.

    Measured pixels (mask bit 1) pass through bit-exactly.
    """
    image = np.asarray(image, dtype=np.float64)
    x = image / 255.0
    residual = forward(net, x) * (1.0 - mask_bits)
    refined = np.clip((x + residual) * 255.0, 0.0, 255.0)
    return np.where(mask_bits == 1, image, refined)


def save_model(net: Network, path) -> None:
    """Binary model file: magic, geometry header, float32 LE parameters."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<4I", net.depth, net.width, KERNEL, _VARIANT_TAGS[net.variant]
            )
        )
        for layer in net.layers:
            fh.write(layer.weights.astype("<f4").tobytes())
            fh.write(layer.bias.astype("<f4").tobytes())


def load_model(path) -> Network:
    """Read a model file written by save_model; float64 parameters in memory."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if not data.startswith(_MAGIC):
        raise DataError(f"{path} is not a model file (bad magic)")
    offset = len(_MAGIC)
    if len(data) < offset + 16:
        raise DataError(f"{path} is truncated")
    depth, width, kernel, tag = struct.unpack_from("<4I", data, offset)
    offset += 16
    if kernel != KERNEL:
        raise DataError(f"unsupported kernel size {kernel}")
    if tag not in _TAG_VARIANTS:
        raise DataError(f"unknown variant tag {tag}")
    if depth < 2 or width < 1:
        raise DataError(f"implausible geometry depth={depth} width={width}")
    channels = [1] + [width] * (depth - 1) + [1]
    layers = []
    for cin, cout in zip(channels[:-1], channels[1:]):
        wsize = KERNEL * KERNEL * cin * cout
        need = (wsize + cout) * 4
        if len(data) < offset + need:
            raise DataError(f"{path} is truncated")
        weights = np.frombuffer(data, dtype="<f4", count=wsize, offset=offset)
        offset += wsize * 4
        bias = np.frombuffer(data, dtype="<f4", count=cout, offset=offset)
        offset += cout * 4
        layers.append(
            ConvLayer(
                weights=weights.astype(np.float64).reshape(KERNEL, KERNEL, cin, cout),
                bias=bias.astype(np.float64),
            )
        )
    if offset != len(data):
        raise DataError(f"{path} has {len(data) - offset} trailing bytes")
    return Network(layers=layers, variant=_TAG_VARIANTS[tag])
