"""Cross-entropy loss, Adam, and parameter initialization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, TYPE_CHECKING

import numpy as np

from .errors import DimensionError, LabelError, NumericError

if TYPE_CHECKING:
    from .network import NetworkConfig, ParamSet

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossValue:
    mean: float
    per_sample: np.ndarray


def cross_entropy(probs, labels):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits.

    ``probs`` are softmax outputs; the returned gradient is the fused
    ``(probs - onehot) / N`` so callers never differentiate through softmax.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise DimensionError(f"probs must be (N, K), got {probs.shape}")
    n, k = probs.shape
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k or not np.issubdtype(labels.dtype, np.integer)):
        raise LabelError(f"labels must be integers in [0, {k}), got {labels.tolist()}")
    picked = probs[np.arange(n), labels]
    per_sample = -np.log(np.maximum(picked, PROB_FLOOR))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return LossValue(float(per_sample.mean()), per_sample), grad


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads: Mapping[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place.

    ``params`` is a :class:`ParamSet` or a plain name -> array mapping. The
    whole step is rejected before any write if a gradient is non-finite.
    """
    table = params.params if hasattr(params, "params") else params
    for name, value in table.items():
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {value.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r} at step {state.t + 1}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, value in table.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps_hat)
    return params, state


def weight_bound(shape: tuple[int, ...]) -> float:
    """Glorot-uniform bound sqrt(6 / (fan_in + fan_out))."""
    if len(shape) == 4:
        out_c, in_c, kh, kw = shape
        fan_in, fan_out = in_c * kh * kw, out_c * kh * kw
    elif len(shape) == 2:
        fan_in, fan_out = shape
    else:
        raise DimensionError(f"no fan rule for weight shape {shape}")
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: "NetworkConfig", seed: int) -> "ParamSet":
    """Weights ~ U(-b, b); biases and BN shifts zero; BN scales one."""
    from .network import ParamSet

    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in config.parameter_layout():
        if name.endswith(".weight"):
            b = config.init_bound if config.init_bound is not None else weight_bound(shape)
            params[name] = rng.uniform(-b, b, size=shape)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    buffers = {
        name: (np.ones(shape) if name.endswith("running_var") else np.zeros(shape))
        for name, shape in config.buffer_layout()
    }
    return ParamSet(config, seed, params, buffers)
