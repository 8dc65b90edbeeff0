"""Layers with explicit forward/backward passes over float64 numpy arrays.

All layers are batch-first; image tensors are (N, C, H, W).  ``forward``
caches whatever ``backward`` needs; calling ``backward`` without a cached
forward pass raises :class:`StateError`.  Parameter gradients are written to
``layer.grads`` (overwritten, not accumulated).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, ShapeError, StateError


class Layer:
    variant_id = 0

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def config(self) -> tuple:
        """Integers that rebuild this layer (stored in checkpoints)."""
        return ()

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def __repr__(self):
        return f"{type(self).__name__}{self.config()}"


def _uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _rng(rng):
    return rng if rng is not None else np.random.default_rng()


class Dense(Layer):
    variant_id = 1

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        self.in_features, self.out_features = int(in_features), int(out_features)
        self.params["weight"] = _uniform_init(_rng(rng), in_features, (out_features, in_features))
        self.params["bias"] = np.zeros(out_features)

    def config(self):
        return (self.in_features, self.out_features)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"Dense({self.in_features}->{self.out_features}) got input {x.shape}")
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        x = self._take_cache()
        self.grads["weight"] = grad.T @ x
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["weight"]


def _check_image(x, channels, name):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeError(f"{name} expects (N, {channels}, H, W), got {x.shape}")


class Conv2d(Layer):
    """Cross-correlation with weight (out_ch, in_ch, k, k), zero padding, square stride."""

    variant_id = 2

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, rng=None):
        super().__init__()
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size, self.stride, self.padding = int(kernel_size), int(stride), int(padding)
        k = self.kernel_size
        self.params["weight"] = _uniform_init(_rng(rng), in_channels * k * k, (out_channels, in_channels, k, k))
        self.params["bias"] = np.zeros(out_channels)

    def config(self):
        return (self.in_channels, self.out_channels, self.kernel_size, self.stride, self.padding)

    def output_size(self, h, w):
        k, s, p = self.kernel_size, self.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_image(x, self.in_channels, "Conv2d")
        k, s, p = self.kernel_size, self.stride, self.padding
        if x.shape[2] + 2 * p < k or x.shape[3] + 2 * p < k:
            raise ShapeError(f"Conv2d kernel {k} larger than padded input {x.shape[2:]}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        oh, ow = self.output_size(*x.shape[2:])
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :oh, :ow]
        self._cache = (x.shape, xp.shape, windows)
        y = np.tensordot(windows, self.params["weight"], axes=([1, 4, 5], [1, 2, 3]))
        return y.transpose(0, 3, 1, 2) + self.params["bias"][None, :, None, None]

    def backward(self, grad):
        x_shape, xp_shape, windows = self._take_cache()
        k, s, p = self.kernel_size, self.stride, self.padding
        oh, ow = grad.shape[2:]
        self.grads["weight"] = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        dcols = np.tensordot(grad, self.params["weight"], axes=([1], [0]))  # (N, oh, ow, C, k, k)
        dxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        h, w = x_shape[2:]
        return dxp[:, :, p:p + h, p:p + w]


class ConvTranspose2d(Layer):
    """Transposed convolution with weight (in_ch, out_ch, k, k).

    Output size per axis: ``(H - 1) * stride - 2 * padding + k + output_padding``.
    """

    variant_id = 3

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, output_padding=0, rng=None):
        super().__init__()
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size, self.stride = int(kernel_size), int(stride)
        self.padding, self.output_padding = int(padding), int(output_padding)
        if self.output_padding >= max(self.stride, 1) and self.output_padding > 0:
            raise ConfigurationError("output_padding must be smaller than stride")
        k = self.kernel_size
        self.params["weight"] = _uniform_init(_rng(rng), in_channels * k * k, (in_channels, out_channels, k, k))
        self.params["bias"] = np.zeros(out_channels)

    def config(self):
        return (self.in_channels, self.out_channels, self.kernel_size, self.stride, self.padding, self.output_padding)

    def output_size(self, h, w):
        k, s, p, op = self.kernel_size, self.stride, self.padding, self.output_padding
        return (h - 1) * s - 2 * p + k + op, (w - 1) * s - 2 * p + k + op

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_image(x, self.in_channels, "ConvTranspose2d")
        k, s, p = self.kernel_size, self.stride, self.padding
        n, _, h, w = x.shape
        oh, ow = self.output_size(h, w)
        if oh < 1 or ow < 1:
            raise ShapeError("ConvTranspose2d output would be empty")
        full_h, full_w = (h - 1) * s + k + self.output_padding, (w - 1) * s + k + self.output_padding
        cols = np.tensordot(x, self.params["weight"], axes=([1], [0]))  # (N, h, w, O, k, k)
        full = np.zeros((n, self.out_channels, full_h, full_w))
        for i in range(k):
            for j in range(k):
                full[:, :, i:i + s * h:s, j:j + s * w:s] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        self._cache = (x, full.shape)
        return full[:, :, p:p + oh, p:p + ow] + self.params["bias"][None, :, None, None]

    def backward(self, grad):
        x, full_shape = self._take_cache()
        k, s, p = self.kernel_size, self.stride, self.padding
        h, w = x.shape[2:]
        oh, ow = grad.shape[2:]
        dfull = np.zeros(full_shape)
        dfull[:, :, p:p + oh, p:p + ow] = grad
        g = sliding_window_view(dfull, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :h, :w]
        self.grads["weight"] = np.tensordot(x, g, axes=([0, 2, 3], [0, 2, 3]))
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        dx = np.tensordot(g, self.params["weight"], axes=([1, 4, 5], [1, 2, 3]))  # (N, h, w, C)
        return dx.transpose(0, 3, 1, 2)


class MaxPool2d(Layer):
    """Non-overlapping k x k max pooling; trailing rows/cols that do not fill a window are dropped."""

    variant_id = 4

    def __init__(self, kernel_size):
        super().__init__()
        self.kernel_size = int(kernel_size)

    def config(self):
        return (self.kernel_size,)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"MaxPool2d expects (N, C, H, W), got {x.shape}")
        k = self.kernel_size
        n, c, h, w = x.shape
        oh, ow = h // k, w // k
        if oh == 0 or ow == 0:
            raise ShapeError(f"MaxPool2d({k}) on {h}x{w} input")
        win = x[:, :, :oh * k, :ow * k].reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(n, c, oh, ow, k * k)
        idx = win.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        shape, idx = self._take_cache()
        k = self.kernel_size
        n, c, h, w = shape
        oh, ow = idx.shape[2:]
        win = np.zeros((n, c, oh, ow, k * k))
        np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
        dx = np.zeros(shape)
        dx[:, :, :oh * k, :ow * k] = (
            win.reshape(n, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * k, ow * k)
        )
        return dx


class ReLU(Layer):
    variant_id = 5

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad):
        return np.where(self._take_cache(), grad, 0.0)


class Sigmoid(Layer):
    variant_id = 6

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        self._cache = y
        return y

    def backward(self, grad):
        y = self._take_cache()
        return grad * y * (1.0 - y)


class Flatten(Layer):
    variant_id = 7

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


class Reshape(Layer):
    variant_id = 8

    def __init__(self, *shape):
        super().__init__()
        self.shape = tuple(int(d) for d in shape)

    def config(self):
        return self.shape

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {x.shape[1:]} to {self.shape}")
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


LAYER_TYPES = {cls.variant_id: cls for cls in (Dense, Conv2d, ConvTranspose2d, MaxPool2d, ReLU, Sigmoid, Flatten, Reshape)}


def layer_from_config(variant_id: int, config) -> Layer:
    try:
        cls = LAYER_TYPES[variant_id]
    except KeyError:
        raise ConfigurationError(f"unknown layer variant id {variant_id}") from None
    return cls(*config)


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def __call__(self, x):
        return self.forward(x)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [layer.params[name] for layer in self.layers for name in layer.params]

    def gradients(self):
        return [layer.grads[name] for layer in self.layers for name in layer.params]


def forward(net, x):
    return net.forward(x)


def backward(net, upstream):
    """Reverse pass; returns (parameter gradients, input gradient)."""
    dx = net.backward(upstream)
    return net.gradients(), dx
