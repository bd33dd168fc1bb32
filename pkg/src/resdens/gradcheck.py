"""Finite-difference verification of every backward pass."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import layers
from . import tensor_core as tc
from .network import NetworkConfig, backward, build_network, forward, load_config
from .optim import cross_entropy

THRESHOLD = 1e-5
STEP = 1e-5
# A whole network is dense with ReLU kinks; a 1e-5 step crosses some of them
# and the difference quotient then averages two linear pieces.
NETWORK_STEP = 1e-7


def rel_error(analytic, numeric) -> float:
    """max |a - n| / max(1, |a|, |n|) over all entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))))


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = STEP, index=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. entries of ``x`` (perturbed in place
    and restored). ``index`` selects flat positions; default is all."""
    flat = x.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(len(positions) if index is not None else flat.size)
    for j, i in enumerate(positions):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[j] = (fp - fm) / (2 * h)
    return out


@dataclass(frozen=True)
class GroupResult:
    group: str
    worst: float
    checked: int
    threshold: float = THRESHOLD

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst) and self.worst <= self.threshold)


def _check(name, f, pairs, h=STEP) -> GroupResult:
    """``pairs`` is a list of (tensor, analytic gradient) to compare."""
    worst, checked = 0.0, 0
    for x, g in pairs:
        num = numeric_grad(f, x, h).reshape(x.shape)
        worst = max(worst, rel_error(g, num))
        checked += x.size
    return GroupResult(name, worst, checked)


def check_conv(rng) -> GroupResult:
    results = []
    for spec, shape in ((tc.ConvSpec((3, 3), 1, 1), (2, 3, 5, 5)), (tc.ConvSpec((3, 3), 2, 0), (2, 2, 7, 6))):
        x = rng.normal(size=shape)
        w = rng.normal(size=(4, shape[1], 3, 3))
        b = rng.normal(size=4)
        r = rng.normal(size=tc.conv2d_forward(x, w, b, spec).shape)
        gx, gw, gb = tc.conv2d_backward(x, w, spec, r)
        results.append(_check("conv", lambda: float(np.sum(tc.conv2d_forward(x, w, b, spec) * r)), [(x, gx), (w, gw), (b, gb)]))
    return GroupResult("conv", max(r.worst for r in results), sum(r.checked for r in results))


def check_avgpool(rng) -> GroupResult:
    x = rng.normal(size=(2, 2, 6, 5))
    r = rng.normal(size=tc.avg_pool2d_forward(x, (2, 2), (2, 2)).shape)
    gx = tc.avg_pool2d_backward(x.shape, (2, 2), (2, 2), r)
    return _check("avgpool", lambda: float(np.sum(tc.avg_pool2d_forward(x, (2, 2), (2, 2)) * r)), [(x, gx)])


def check_fc(rng) -> GroupResult:
    x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)
    r = rng.normal(size=(3, 4))
    gx, gw, gb = tc.matmul_affine_backward(x, w, r)
    return _check("fc", lambda: float(np.sum(tc.matmul_affine_forward(x, w, b) * r)), [(x, gx), (w, gw), (b, gb)])


def check_relu(rng) -> GroupResult:
    x = rng.normal(size=(3, 7))
    x += np.sign(x) * 0.1  # keep finite differences away from the kink
    r = rng.normal(size=x.shape)
    return _check("relu", lambda: float(np.sum(tc.relu_forward(x) * r)), [(x, tc.relu_backward(x, r))])


def check_batchnorm(rng) -> GroupResult:
    x = rng.normal(size=(2, 3, 3, 3)) * 2.0 + 0.5
    gamma, beta = rng.normal(size=3), rng.normal(size=3)
    r = rng.normal(size=x.shape)

    def run():
        st = layers.BatchNormState(gamma, beta, np.zeros(3), np.ones(3))
        return layers.batchnorm_forward(x, st, "train")

    out, cache = run()
    gx, gg, gb = layers.batchnorm_backward(cache, r)
    return _check("batchnorm", lambda: float(np.sum(run()[0] * r)), [(x, gx), (gamma, gg), (beta, gb)])


def _random_block(rng, spec: layers.BlockSpec) -> layers.ResidualBlock:
    params = {k: rng.normal(size=s) * (0.5 if k.endswith("weight") else 1.0) for k, s in spec.param_shapes().items()}
    buffers = {b: (np.ones if b.endswith("var") else np.zeros)(spec.out_channels) for b in spec.buffer_names()}
    return layers.ResidualBlock(spec, params, buffers)


def check_residual_block(rng) -> GroupResult:
    worst, checked = 0.0, 0
    for spec in (layers.BlockSpec(4, 4, 2, False), layers.BlockSpec(3, 5, 3, True)):
        block = _random_block(rng, spec)
        x = rng.normal(size=(2, spec.in_channels, 4, 4))
        out, cache = layers.residual_block_forward(x, block, "train")
        r = rng.normal(size=out.shape)
        gx, grads = layers.residual_block_backward(cache, r)

        def f():
            return float(np.sum(layers.residual_block_forward(x, block, "train")[0] * r))

        res = _check("residual_block", f, [(x, gx)] + [(block.params[k], grads[k]) for k in block.params])
        worst, checked = max(worst, res.worst), checked + res.checked
    return GroupResult("residual_block", worst, checked)


def check_softmax_ce(rng) -> GroupResult:
    z = rng.normal(size=(5, 4)) * 3.0
    y = rng.integers(0, 4, size=5)
    _, g = cross_entropy(tc.softmax(z), y)
    return _check("softmax_ce", lambda: cross_entropy(tc.softmax(z), y)[0].mean, [(z, g)])


LAYER_CHECKS = {
    "conv": check_conv,
    "avgpool": check_avgpool,
    "fc": check_fc,
    "relu": check_relu,
    "batchnorm": check_batchnorm,
    "residual_block": check_residual_block,
    "softmax_ce": check_softmax_ce,
}


def check_network(config: NetworkConfig, seed: int = 0, batch: int = 4, max_entries: int = 16,
                  h: float = NETWORK_STEP) -> list[GroupResult]:
    """End-to-end check of every parameter tensor of ``config``.

    Tensors with more than ``max_entries`` elements are checked at that many
    randomly chosen positions.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params = build_network(config, seed)
    x = rng.uniform(0.0, 1.0, size=(batch, config.in_channels) + tuple(config.input_size))
    y = rng.integers(0, config.classes, size=batch)
    saved = {k: v.copy() for k, v in params.buffers.items()}

    def loss() -> float:
        probs, _ = forward(params, x, "train")
        return cross_entropy(probs, y)[0].mean

    probs, cache = forward(params, x, "train")
    grads = backward(params, cache, cross_entropy(probs, y)[1])
    results = []
    for name, value in params.params.items():
        idx = None
        if value.size > max_entries:
            idx = np.sort(rng.choice(value.size, max_entries, replace=False))
        num = numeric_grad(loss, value, h, idx)
        ana = grads[name].reshape(-1) if idx is None else grads[name].reshape(-1)[idx]
        results.append(GroupResult(f"network:{name}", rel_error(ana, num), num.size))
    for k, v in saved.items():
        params.buffers[k][...] = v
    return results


def gradcheck_config(preset: str = "tiny") -> NetworkConfig:
    """The named preset shrunk to a 16x16 input for fast end-to-end checks."""
    cfg = load_config(preset)
    return cfg.replace(input_size=(16, 16))


def run_gradcheck(preset: str = "tiny", seed: int = 0, max_entries: int = 16) -> list[GroupResult]:
    rng = np.random.Generator(np.random.PCG64(seed))
    results = [fn(rng) for fn in LAYER_CHECKS.values()]
    results += check_network(gradcheck_config(preset), seed, max_entries=max_entries)
    return results


def format_report(results: list[GroupResult], seconds: float | None = None) -> str:
    width = max(len(r.group) for r in results) + 2
    lines = [f"{'group':<{width}}{'worst rel err':>15}{'checked':>9}  status"]
    for r in results:
        lines.append(f"{r.group:<{width}}{r.worst:>15.3e}{r.checked:>9}  {'PASS' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in results)
    tail = f"{len(results) - failed}/{len(results)} groups passed (threshold {THRESHOLD:g})"
    if seconds is not None:
        tail += f" in {seconds:.1f}s"
    return "\n".join(lines + [tail])


def main_report(preset: str = "tiny", seed: int = 0) -> tuple[bool, str]:
    t0 = time.perf_counter()
    results = run_gradcheck(preset, seed)
    return all(r.passed for r in results), format_report(results, time.perf_counter() - t0)
