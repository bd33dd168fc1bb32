"""Composite layers: batch normalization and the residual block."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import tensor_core as tc
from .errors import DimensionError, UsageError

Mode = Literal["train", "eval"]


def _check_mode(mode):
    if mode not in ("train", "eval"):
        raise UsageError(f"mode must be 'train' or 'eval', got {mode!r}")


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics.

    The arrays are held by reference: train-mode forward updates
    ``running_mean``/``running_var`` in place.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.9

    @classmethod
    def fresh(cls, channels: int, **kw) -> "BatchNormState":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), **kw)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")


@dataclass
class _BNCache:
    mode: str
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def batchnorm_forward(x, state: BatchNormState, mode: Mode):
    _check_mode(mode)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != state.gamma.shape[0]:
        raise DimensionError(f"batchnorm over {state.gamma.shape[0]} channels got input shape {x.shape}")
    bshape = (1, -1, 1, 1)
    if mode == "train":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise UsageError("train-mode batchnorm needs at least 2 values per channel (N*H*W >= 2)")
        mean = x.mean(axis=(0, 2, 3))
        var = ((x - mean.reshape(bshape)) ** 2).mean(axis=(0, 2, 3))
        state.running_mean *= state.momentum
        state.running_mean += (1.0 - state.momentum) * mean
        state.running_var *= state.momentum
        state.running_var += (1.0 - state.momentum) * var
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * state.gamma.reshape(bshape) + state.beta.reshape(bshape)
    return out, _BNCache(mode, xhat, inv_std, state.gamma.copy())


def batchnorm_backward(cache: _BNCache, grad_out):
    """Gradients of the train-mode forward, batch statistics included."""
    if cache.mode != "train":
        raise UsageError("batchnorm_backward requires a train-mode cache")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.xhat.shape:
        raise DimensionError(f"grad_out shape {g.shape} != forward output shape {cache.xhat.shape}")
    bshape = (1, -1, 1, 1)
    axes = (0, 2, 3)
    m = g.shape[0] * g.shape[2] * g.shape[3]
    grad_beta = g.sum(axis=axes)
    grad_gamma = (g * cache.xhat).sum(axis=axes)
    dxhat = g * cache.gamma.reshape(bshape)
    grad_x = (cache.inv_std / m).reshape(bshape) * (
        m * dxhat
        - dxhat.sum(axis=axes).reshape(bshape)
        - cache.xhat * (dxhat * cache.xhat).sum(axis=axes).reshape(bshape)
    )
    return grad_x, grad_gamma, grad_beta


@dataclass(frozen=True)
class BlockSpec:
    in_channels: int
    out_channels: int
    convs: int = 2
    projection: bool = False

    def __post_init__(self):
        if self.convs < 1:
            raise ValueError("a residual block needs at least one conv")
        if not self.projection and self.in_channels != self.out_channels:
            raise DimensionError(
                f"identity shortcut needs equal widths, got {self.in_channels} -> {self.out_channels}"
            )

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        cin = self.in_channels
        for i in range(1, self.convs + 1):
            shapes[f"conv{i}.weight"] = (self.out_channels, cin, 3, 3)
            shapes[f"conv{i}.bias"] = (self.out_channels,)
            shapes[f"bn{i}.gamma"] = (self.out_channels,)
            shapes[f"bn{i}.beta"] = (self.out_channels,)
            cin = self.out_channels
        if self.projection:
            shapes["proj.weight"] = (self.out_channels, self.in_channels, 1, 1)
            shapes["proj.bias"] = (self.out_channels,)
        return shapes

    def buffer_names(self) -> list[str]:
        return [f"bn{i}.{b}" for i in range(1, self.convs + 1) for b in ("running_mean", "running_var")]


CONV3 = tc.ConvSpec(kernel=(3, 3), stride=1, padding=1)
CONV1 = tc.ConvSpec(kernel=(1, 1), stride=1, padding=0)


@dataclass
class ResidualBlock:
    """A block spec plus its parameters and BN buffers, keyed by local name
    (``conv1.weight``, ``bn1.running_mean``, ``proj.weight`` ...)."""

    spec: BlockSpec
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9

    def bn_state(self, i: int) -> BatchNormState:
        return BatchNormState(
            self.params[f"bn{i}.gamma"],
            self.params[f"bn{i}.beta"],
            self.buffers[f"bn{i}.running_mean"],
            self.buffers[f"bn{i}.running_var"],
            self.bn_epsilon,
            self.bn_momentum,
        )


@dataclass
class _BlockCache:
    block: ResidualBlock
    x: np.ndarray
    steps: list = field(default_factory=list)
    pre_relu: np.ndarray | None = None


def residual_block_forward(x, block: ResidualBlock, mode: Mode):
    """``relu(F(x) + shortcut(x))`` with F = [conv -> BN -> relu] * (k-1) -> conv -> BN."""
    _check_mode(mode)
    x = np.asarray(x, dtype=np.float64)
    spec = block.spec
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise DimensionError(f"block expects {spec.in_channels} input channels, got shape {x.shape}")
    cache = _BlockCache(block, x)
    h = x
    for i in range(1, spec.convs + 1):
        conv_in = h
        h = tc.conv2d_forward(h, block.params[f"conv{i}.weight"], block.params[f"conv{i}.bias"], CONV3)
        h, bn_cache = batchnorm_forward(h, block.bn_state(i), mode)
        relu_in = None
        if i < spec.convs:
            relu_in = h
            h = tc.relu_forward(h)
        cache.steps.append((conv_in, bn_cache, relu_in))
    if spec.projection:
        shortcut = tc.conv2d_forward(x, block.params["proj.weight"], block.params["proj.bias"], CONV1)
    else:
        shortcut = x
    z = h + shortcut
    cache.pre_relu = z
    return tc.relu_forward(z), cache


def residual_block_backward(cache: _BlockCache, grad_out):
    """Return ``(grad_x, grads)`` where ``grads`` is keyed like ``block.params``.

    The input gradient is the sum of the residual-branch and shortcut paths.
    """
    block = cache.block
    spec = block.spec
    gz = tc.relu_backward(cache.pre_relu, grad_out)
    grads: dict[str, np.ndarray] = {}
    if spec.projection:
        gx_short, grads["proj.weight"], grads["proj.bias"] = tc.conv2d_backward(
            cache.x, block.params["proj.weight"], CONV1, gz
        )
    else:
        gx_short = gz
    g = gz
    for i in range(spec.convs, 0, -1):
        conv_in, bn_cache, relu_in = cache.steps[i - 1]
        if relu_in is not None:
            g = tc.relu_backward(relu_in, g)
        g, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = batchnorm_backward(bn_cache, g)
        g, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = tc.conv2d_backward(
            conv_in, block.params[f"conv{i}.weight"], CONV3, g
        )
    return g + gx_short, grads
