"""Primitive differentiable tensor operations.

Tensors are plain C-contiguous ``float64`` numpy arrays. Activations use
(batch, channel, height, width) layout, conv weights (out, in, kh, kw).
None of these functions mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError

Tensor = np.ndarray


@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise DimensionError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise DimensionError(f"padding must be non-negative, got {self.padding}")
        if len(self.kernel) != 2 or min(self.kernel) < 1:
            raise DimensionError(f"kernel must be two positive ints, got {self.kernel}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        if h + 2 * self.padding < kh or w + 2 * self.padding < kw or oh < 1 or ow < 1:
            raise DimensionError(
                f"kernel {self.kernel} with padding {self.padding} does not fit input {h}x{w}"
            )
        return oh, ow


def _as_tensor(x) -> Tensor:
    return np.ascontiguousarray(x, dtype=np.float64)


def _check_rank(name: str, x: Tensor, rank: int):
    if x.ndim != rank:
        raise DimensionError(f"{name} must have rank {rank}, got shape {x.shape}")


def _conv_shapes(x, weight, bias, spec):
    _check_rank("input", x, 4)
    _check_rank("weight", weight, 4)
    cout, cin, kh, kw = weight.shape
    if x.shape[1] != cin:
        raise DimensionError(
            f"input channel axis (1) has {x.shape[1]} but weight in-channel axis (1) has {cin}"
        )
    if (kh, kw) != tuple(spec.kernel):
        raise DimensionError(f"weight kernel axes (2, 3) are {(kh, kw)} but spec says {spec.kernel}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"bias shape {bias.shape} does not match weight out-channel axis (0) = {cout}")
    return spec.output_size(x.shape[2], x.shape[3])


def _pad(x: Tensor, p: int) -> Tensor:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_forward(x, weight, bias, spec: ConvSpec) -> Tensor:
    """2-D cross-correlation with symmetric zero padding, via im2col + GEMM."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    oh, ow = _conv_shapes(x, weight, bias, spec)
    n = x.shape[0]
    cout, _, kh, kw = weight.shape
    cols = kernels.im2col(_pad(x, spec.padding), kh, kw, spec.stride, oh, ow)
    out = weight.reshape(cout, -1) @ cols
    out += bias[:, None]
    return np.ascontiguousarray(out.reshape(cout, n, oh, ow).transpose(1, 0, 2, 3))


def conv2d_backward(x, weight, spec: ConvSpec, grad_out):
    """Return ``(grad_input, grad_weight, grad_bias)`` for :func:`conv2d_forward`."""
    x, weight, grad_out = _as_tensor(x), _as_tensor(weight), _as_tensor(grad_out)
    oh, ow = _conv_shapes(x, weight, None, spec)
    n = x.shape[0]
    cout, _, kh, kw = weight.shape
    if grad_out.shape != (n, cout, oh, ow):
        raise DimensionError(f"grad_out shape {grad_out.shape} != forward output shape {(n, cout, oh, ow)}")
    xp = _pad(x, spec.padding)
    cols = kernels.im2col(xp, kh, kw, spec.stride, oh, ow)
    g2 = grad_out.transpose(1, 0, 2, 3).reshape(cout, -1)
    grad_w = (g2 @ cols.T).reshape(weight.shape)
    grad_b = g2.sum(axis=1)
    dcols = weight.reshape(cout, -1).T @ g2
    dxp = kernels.col2im(dcols, xp.shape, kh, kw, spec.stride, oh, ow)
    p = spec.padding
    grad_x = dxp[:, :, p : p + x.shape[2], p : p + x.shape[3]] if p else dxp
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def _pool_geometry(shape, window, stride):
    if len(shape) != 4:
        raise DimensionError(f"pooling input must have rank 4, got shape {tuple(shape)}")
    kh, kw = window
    sh, sw = stride
    if min(kh, kw, sh, sw) < 1:
        raise DimensionError(f"window {window} and stride {stride} must be positive")
    h, w = shape[2], shape[3]
    if kh > h or kw > w:
        raise DimensionError(f"pool window {window} larger than input {h}x{w}")
    return (h - kh) // sh + 1, (w - kw) // sw + 1


def avg_pool2d_forward(x, window=(2, 2), stride=(2, 2)) -> Tensor:
    x = _as_tensor(x)
    oh, ow = _pool_geometry(x.shape, window, stride)
    return kernels.avgpool_forward(x, window[0], window[1], stride[0], stride[1], oh, ow)


def avg_pool2d_backward(input_shape, window, stride, grad_out) -> Tensor:
    """Spread each output gradient evenly over the cells of its window."""
    grad_out = _as_tensor(grad_out)
    input_shape = tuple(int(s) for s in input_shape)
    oh, ow = _pool_geometry(input_shape, window, stride)
    if grad_out.shape != input_shape[:2] + (oh, ow):
        raise DimensionError(f"grad_out shape {grad_out.shape} != pooled shape {input_shape[:2] + (oh, ow)}")
    return kernels.avgpool_backward(grad_out, input_shape, window[0], window[1], stride[0], stride[1])


def _affine_shapes(x, weight, bias):
    _check_rank("input", x, 2)
    _check_rank("weight", weight, 2)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"inner dimensions differ: input axis 1 = {x.shape[1]}, weight axis 0 = {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"bias shape {bias.shape} != ({weight.shape[1]},)")


def matmul_affine_forward(x, weight, bias) -> Tensor:
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    _affine_shapes(x, weight, bias)
    return x @ weight + bias


def matmul_affine_backward(x, weight, grad_out):
    """Return ``(grad_input, grad_weight, grad_bias)``."""
    x, weight, grad_out = _as_tensor(x), _as_tensor(weight), _as_tensor(grad_out)
    _affine_shapes(x, weight, None)
    if grad_out.shape != (x.shape[0], weight.shape[1]):
        raise DimensionError(f"grad_out shape {grad_out.shape} != {(x.shape[0], weight.shape[1])}")
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x) -> Tensor:
    return np.maximum(_as_tensor(x), 0.0)


def relu_backward(x, grad_out) -> Tensor:
    # subgradient at exactly 0 is 0
    x, grad_out = _as_tensor(x), _as_tensor(grad_out)
    if x.shape != grad_out.shape:
        raise DimensionError(f"relu grad shape {grad_out.shape} != input shape {x.shape}")
    return np.where(x > 0, grad_out, 0.0)


def softmax(logits) -> Tensor:
    z = _as_tensor(logits)
    _check_rank("logits", z, 2)
    if z.shape[1] < 2:
        raise DimensionError(f"softmax needs at least 2 classes, got {z.shape[1]}")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
