"""Quanvolution: a quantum circuit slid over an image as a convolution filter.

Each k x k patch is flattened row-major and scaled from [0, 1] to
[0, angle_range] (2pi by default);
pixel ``t`` feeds data slot ``t`` of a 4:1 angle encoder (qubit ``t // 4``,
rotation ``t % 4``).  The per-qubit <Z> readouts become the output channels
of that grid cell.  Windows never pad: ``floor((H - k) / s) + 1`` per axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import TWO_PI, EncoderKind, QnnSpec, build_qnn, init_params, scale_features
from .errors import ConfigurationError, ShapeError
from .qgrad import count_params_by_rule, forward_and_jacobian, shift_eval_count
from .qsim import batch_z_expectations, simulate


@dataclass
class QuantumFilter:
    kernel_size: int = 4
    stride: int = 4
    num_layers: int = 3
    trainable: bool = True
    theta: np.ndarray = None
    angle_range: float = TWO_PI

    def __post_init__(self):
        k2 = self.kernel_size * self.kernel_size
        if self.kernel_size < 1 or self.stride < 1:
            raise ConfigurationError("kernel_size and stride must be positive")
        if not self.angle_range > 0:
            raise ConfigurationError("angle_range must be positive")
        if k2 % 4:
            raise ConfigurationError(f"4:1 encoding needs k*k divisible by 4, got k={self.kernel_size}")
        self.qnn = QnnSpec(k2 // 4, EncoderKind.ANGLE_FOUR_TO_ONE, self.num_layers)
        self.circuit = build_qnn(self.qnn)
        if self.theta is None:
            self.theta = np.zeros(self.qnn.num_params)
        self.theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.size != self.qnn.num_params:
            raise ConfigurationError(f"filter expects {self.qnn.num_params} parameters, got {self.theta.size}")

    @classmethod
    def random(cls, rng: np.random.Generator, **kwargs) -> "QuantumFilter":
        f = cls(**kwargs)
        f.theta = init_params(f.qnn.num_params, rng)
        return f

    @property
    def num_qubits(self) -> int:
        return self.qnn.num_qubits

    def grid_shape(self, height: int, width: int) -> tuple:
        k, s = self.kernel_size, self.stride
        if height < k or width < k:
            raise ShapeError(f"{height}x{width} image is smaller than the {k}x{k} kernel")
        return (height - k) // s + 1, (width - k) // s + 1


@dataclass
class FeatureMap:
    """Quanvolution output, ``values[i, j, c]`` = channel ``c`` of grid cell ``(i, j)``."""

    values: np.ndarray

    @property
    def height_out(self) -> int:
        return self.values.shape[0]

    @property
    def width_out(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def extract_patches(image, k: int, s: int) -> np.ndarray:
    """All k x k windows at stride ``s`` in row-major order: (num_patches, k, k)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got shape {image.shape}")
    h, w = image.shape
    if h < k or w < k:
        raise ShapeError(f"{h}x{w} image is smaller than the {k}x{k} kernel")
    windows = np.lib.stride_tricks.sliding_window_view(image, (k, k))[::s, ::s]
    return windows.reshape(-1, k, k).copy()


def _patch_rows(filt: QuantumFilter, images: np.ndarray):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if images.ndim != 3:
        raise ShapeError(f"expected (N, H, W) images, got shape {images.shape}")
    gh, gw = filt.grid_shape(*images.shape[1:])
    k, s = filt.kernel_size, filt.stride
    windows = np.lib.stride_tricks.sliding_window_view(images, (k, k), axis=(1, 2))[:, ::s, ::s]
    rows = _scale_pixels(filt, windows.reshape(-1, k * k))
    return rows, (images.shape[0], gh, gw)


def _scale_pixels(filt, pixels):
    rows = scale_features(pixels, 0.0, 1.0)
    return rows if filt.angle_range == TWO_PI else rows * (filt.angle_range / TWO_PI)


def filter_forward(filt: QuantumFilter, patch) -> np.ndarray:
    """Readout of one k x k patch (pixel values in [0, 1])."""
    patch = np.asarray(patch, dtype=np.float64)
    k = filt.kernel_size
    if patch.shape != (k, k):
        raise ShapeError(f"patch must be {k}x{k}, got {patch.shape}")
    data = _scale_pixels(filt, patch.reshape(1, -1))
    return batch_z_expectations(simulate(filt.circuit, data, filt.theta), filt.num_qubits)[0]


def quanv_forward_batch(filt: QuantumFilter, images) -> np.ndarray:
    """(N, H, W) images -> (N, h_out, w_out, channels) feature maps."""
    rows, (n, gh, gw) = _patch_rows(filt, images)
    z = batch_z_expectations(simulate(filt.circuit, rows, filt.theta), filt.num_qubits)
    return z.reshape(n, gh, gw, filt.num_qubits)


def quanv_forward(filt: QuantumFilter, image) -> FeatureMap:
    return FeatureMap(quanv_forward_batch(filt, np.asarray(image)[None])[0])


def quanv_forward_multi(filters, images) -> np.ndarray:
    """Several independent filters on the same images; channels concatenate in list order."""
    return np.concatenate([quanv_forward_batch(f, images) for f in filters], axis=-1)


def quanv_forward_jacobian(filt: QuantumFilter, images, threads: int = 1):
    """Feature maps plus d(feature)/d(theta) for every patch.

    Returns ``(maps, jac)`` with shapes (N, h, w, c) and (N, h, w, c, num_params).
    """
    rows, (n, gh, gw) = _patch_rows(filt, images)
    values, jac = forward_and_jacobian(filt.circuit, rows, filt.theta, threads=threads)
    c = filt.num_qubits
    return values.reshape(n, gh, gw, c), jac.reshape(n, gh, gw, c, -1)


def quanv_backward(filt: QuantumFilter, image, upstream_grad, threads: int = 1) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the filter parameters.

    ``upstream_grad`` is d(loss)/d(feature map), shaped like the map of
    ``image`` (a single image or an (N, H, W) batch).  The filter is shared by
    every patch, so per-patch contributions are summed.  Frozen filters
    return zeros without executing any circuit.
    """
    if not filt.trainable:
        return np.zeros_like(filt.theta)
    _, jac = quanv_forward_jacobian(filt, image, threads=threads)
    upstream = np.asarray(upstream_grad, dtype=np.float64).reshape(jac.shape[:-1])
    return contract_upstream(jac, upstream)


def contract_upstream(jac: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    p = jac.shape[-1]
    return upstream.reshape(-1) @ jac.reshape(-1, p)


def execution_count(height, width, k, s, p_single, p_crz=0, trainable=True, batch=1, four_term_crz=True):
    """Quantum circuit executions for one training pass over ``batch`` images.

    Per image: one run per patch, plus the shift-rule runs of every trainable
    parameter (2 per single-qubit rotation, 4 per CRZ).  With
    ``four_term_crz=False`` CRZ parameters are counted at 2 like any other,
    which reproduces the plain ``2 * p * patches`` bookkeeping.
    """
    if height < k or width < k:
        raise ShapeError(f"{height}x{width} image is smaller than the {k}x{k} kernel")
    patches = ((height - k) // s + 1) * ((width - k) // s + 1)
    if not trainable:
        extra = 0
    elif four_term_crz:
        extra = shift_eval_count(p_single, p_crz)
    else:
        extra = shift_eval_count(p_single + p_crz, 0)
    return batch * patches * (1 + extra)


def filter_execution_count(filt: QuantumFilter, height: int, width: int, batch: int = 1) -> int:
    single, crz = count_params_by_rule(filt.circuit)
    return execution_count(height, width, filt.kernel_size, filt.stride, single, crz, filt.trainable, batch)
