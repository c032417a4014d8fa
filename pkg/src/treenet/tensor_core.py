"""Dense NCHW tensors and the handful of differentiable ops the networks use.

Every op is a pure function: inputs are never mutated and the result is a
fresh array. All arithmetic is float64. Convolutions are bias-free and use
same-size zero padding of ``dilation * (k - 1) // 2`` on each side.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, SpecError

__all__ = [
    "Tensor",
    "ConvWeights",
    "conv2d",
    "conv2d_backward",
    "relu",
    "relu_backward",
    "concat_channels",
    "concat_channels_backward",
    "add",
    "add_backward",
    "mse_loss",
    "mse_loss_backward",
    "he_init",
]


class Tensor:
    """A 4-D (batch, channels, height, width) float64 array with optional grad."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 4:
            raise ShapeError(f"Tensor needs 4 dims (batch, channels, height, width), got shape {data.shape}")
        self.data = data
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != data.shape:
                raise ShapeError(f"grad shape {grad.shape} != data shape {data.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def channels(self):
        return self.data.shape[1]

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class ConvWeights:
    """Bias-free conv filter bank of shape (out_channels, in_channels, k, k)."""

    __slots__ = ("data", "grad", "dilation")

    def __init__(self, data, dilation=1, grad=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 4 or data.shape[2] != data.shape[3]:
            raise ShapeError(f"conv weights need shape (out, in, k, k), got {data.shape}")
        if data.shape[2] % 2 == 0:
            raise SpecError(f"kernel size must be odd for symmetric padding, got {data.shape[2]}")
        if int(dilation) < 1:
            raise SpecError(f"dilation must be >= 1, got {dilation}")
        self.data = data
        self.dilation = int(dilation)
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != data.shape:
                raise ShapeError(f"weight grad shape {grad.shape} != weight shape {data.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def out_channels(self):
        return self.data.shape[0]

    @property
    def in_channels(self):
        return self.data.shape[1]

    @property
    def kernel(self):
        return self.data.shape[2]

    def __repr__(self):
        o, i, k, _ = self.shape
        return f"ConvWeights({o}x{i}x{k}x{k}, dilation={self.dilation})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _pad_width(weights):
    return weights.dilation * (weights.kernel - 1) // 2


def conv2d(input, weights):
    """Same-size, stride-1 cross-correlation ``out[b,o] = sum_c x[b,c] (*) w[o,c]``."""
    x = _as_tensor(input).data
    b, c, h, w = x.shape
    if c != weights.in_channels:
        raise ShapeError(
            f"conv2d: input has {c} channels but weights expect in_channels={weights.in_channels}"
        )
    k, d, p = weights.kernel, weights.dilation, _pad_width(weights)
    # channel-major so each kernel tap is one (out, in) @ (in, b*h*w) product
    xp = np.pad(x.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((weights.out_channels, b, h, w))
    for ky in range(k):
        for kx in range(k):
            window = xp[:, :, ky * d:ky * d + h, kx * d:kx * d + w]
            out += np.tensordot(weights.data[:, :, ky, kx], window, axes=([1], [0]))
    return Tensor(np.ascontiguousarray(out.transpose(1, 0, 2, 3)))


def conv2d_backward(input, weights, upstream_grad, need_input_grad=True):
    """Gradients of ``sum(upstream_grad * conv2d(input, weights))``.

    Returns ``(input_grad, weight_grad)``; ``input_grad`` is a Tensor (or None
    when ``need_input_grad`` is false), ``weight_grad`` a ConvWeights with the
    same shape and dilation as ``weights``.
    """
    x = _as_tensor(input).data
    g = _as_tensor(upstream_grad).data
    b, c, h, w = x.shape
    if c != weights.in_channels:
        raise ShapeError(
            f"conv2d_backward: input has {c} channels but weights expect in_channels={weights.in_channels}"
        )
    expected = (b, weights.out_channels, h, w)
    if g.shape != expected:
        raise ShapeError(f"conv2d_backward: upstream_grad shape {g.shape} != conv output shape {expected}")
    k, d, p = weights.kernel, weights.dilation, _pad_width(weights)
    xp = np.pad(x.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (p, p), (p, p)))
    gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(weights.out_channels, -1)
    wgrad = np.empty_like(weights.data)
    xgrad = np.zeros_like(xp) if need_input_grad else None
    for ky in range(k):
        for kx in range(k):
            ys, xs = slice(ky * d, ky * d + h), slice(kx * d, kx * d + w)
            window = xp[:, :, ys, xs].reshape(c, -1)
            wgrad[:, :, ky, kx] = gt @ window.T
            if need_input_grad:
                xgrad[:, :, ys, xs] += (weights.data[:, :, ky, kx].T @ gt).reshape(c, b, h, w)
    input_grad = None
    if need_input_grad:
        xgrad = xgrad[:, :, p:p + h, p:p + w].transpose(1, 0, 2, 3)
        input_grad = Tensor(np.ascontiguousarray(xgrad))
    return input_grad, ConvWeights(wgrad, dilation=weights.dilation)


def relu(input):
    return Tensor(np.maximum(_as_tensor(input).data, 0.0))


def relu_backward(input, upstream_grad):
    """Pass the gradient where ``input > 0``; the subgradient at 0 is 0."""
    x = _as_tensor(input).data
    g = _as_tensor(upstream_grad).data
    if x.shape != g.shape:
        raise ShapeError(f"relu_backward: input shape {x.shape} != upstream_grad shape {g.shape}")
    return Tensor(np.where(x > 0.0, g, 0.0))


def concat_channels(inputs):
    """Stack tensors along the channel axis, left to right."""
    tensors = [_as_tensor(t) for t in inputs]
    if not tensors:
        raise ShapeError("concat_channels needs at least one input")
    b, _, h, w = tensors[0].shape
    for i, t in enumerate(tensors[1:], start=1):
        tb, _, th, tw = t.shape
        if (tb, th, tw) != (b, h, w):
            raise ShapeError(
                f"concat_channels: input {i} has (batch, height, width)=({tb}, {th}, {tw}), "
                f"expected ({b}, {h}, {w})"
            )
    return Tensor(np.concatenate([t.data for t in tensors], axis=1))


def concat_channels_backward(channel_counts, upstream_grad):
    """Split the upstream gradient back into per-source slices."""
    g = _as_tensor(upstream_grad).data
    if sum(channel_counts) != g.shape[1]:
        raise ShapeError(
            f"concat backward: channel counts sum to {sum(channel_counts)} but upstream has {g.shape[1]}"
        )
    bounds = np.cumsum(channel_counts)[:-1]
    return [Tensor(part.copy()) for part in np.split(g, bounds, axis=1)]


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: operand shapes differ, {a.shape} vs {b.shape}")
    return Tensor(a.data + b.data)


def add_backward(upstream_grad):
    g = _as_tensor(upstream_grad).data
    return Tensor(g.copy()), Tensor(g.copy())


def mse_loss(pred, target):
    """Mean of squared differences over every entry."""
    p, t = _as_tensor(pred).data, _as_tensor(target).data
    if p.shape != t.shape:
        raise ShapeError(f"mse_loss: pred shape {p.shape} != target shape {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff))


def mse_loss_backward(pred, target):
    p, t = _as_tensor(pred).data, _as_tensor(target).data
    if p.shape != t.shape:
        raise ShapeError(f"mse_loss: pred shape {p.shape} != target shape {t.shape}")
    return Tensor(2.0 * (p - t) / p.size)


def he_init(shape, rng_seed, dilation=1):
    """He-normal weights: N(0, 2 / fan_in) with fan_in = in_channels * k * k."""
    out_c, in_c, k, k2 = shape
    if k != k2:
        raise ShapeError(f"he_init: kernel must be square, got {k}x{k2}")
    std = np.sqrt(2.0 / (in_c * k * k))
    rng = np.random.default_rng(rng_seed)
    return ConvWeights(rng.normal(0.0, std, size=shape), dilation=dilation)
