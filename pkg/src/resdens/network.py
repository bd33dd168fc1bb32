"""Residual CNN assembly: declarative config, parameter set, forward/backward.

Layout of every network::

    stem:   conv(k x k, stride s) -> BN -> relu [-> avgpool 2x2]
    stage:  residual blocks [-> avgpool 2x2]        (repeated per stage)
    head:   flatten -> (fc -> relu)* -> fc -> softmax

Presets live in ``presets/*.cfg`` and are read with :func:`load_config`.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from . import layers
from . import tensor_core as tc
from .errors import ConfigError, DimensionError, UsageError

POOL = ((2, 2), (2, 2))
PRESETS = ("36L", "48L", "70L", "tiny")


@dataclass(frozen=True)
class StemConfig:
    channels: int = 64
    kernel: int = 3
    stride: int = 1
    pool: bool = False


@dataclass(frozen=True)
class StageConfig:
    blocks: int
    channels: int
    convs_per_block: int = 2
    # force a projection shortcut on the stage's first block even if widths match
    projection: bool = False
    pool: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    name: str
    stem: StemConfig
    stages: tuple[StageConfig, ...]
    fc_widths: tuple[int, ...]
    input_size: tuple[int, int]
    classes: int = 4
    in_channels: int = 1
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    # None -> Glorot bound sqrt(6 / (fan_in + fan_out)); a float -> fixed bound
    init_bound: float | None = None

    def __post_init__(self):
        if self.classes not in (2, 4):
            raise ConfigError(f"classes must be 2 or 4, got {self.classes}")
        if not self.fc_widths or self.fc_widths[-1] != self.classes:
            raise ConfigError(f"last fc width {self.fc_widths[-1:]} must equal classes = {self.classes}")
        if not self.stages:
            raise ConfigError("at least one stage is required")
        for s in self.stages:
            if s.blocks < 1 or s.channels < 1 or s.convs_per_block < 1:
                raise ConfigError(f"invalid stage {s}")
        if min(self.input_size) < 1 or self.stem.channels < 1 or self.stem.kernel < 1:
            raise ConfigError("sizes must be positive")
        if self.init_bound is not None and self.init_bound <= 0:
            raise ConfigError("init_bound must be positive")
        self.feature_shape()  # raises on geometry that collapses to nothing

    # ---- derived structure -------------------------------------------------

    @property
    def stem_spec(self) -> tc.ConvSpec:
        k = self.stem.kernel
        return tc.ConvSpec(kernel=(k, k), stride=self.stem.stride, padding=k // 2)

    def blocks(self) -> Iterator[tuple[str, layers.BlockSpec]]:
        cin = self.stem.channels
        for si, stage in enumerate(self.stages, 1):
            for bi in range(1, stage.blocks + 1):
                proj = bi == 1 and (stage.projection or cin != stage.channels)
                yield f"stage{si}.block{bi}", layers.BlockSpec(cin, stage.channels, stage.convs_per_block, proj)
                cin = stage.channels

    def feature_shape(self) -> tuple[int, int, int]:
        """(C, H, W) of the last stage output after pooling, i.e. before flatten."""
        try:
            h, w = self.stem_spec.output_size(*self.input_size)
        except DimensionError as exc:
            raise ConfigError(str(exc)) from None

        def pooled(h, w):
            if h < 2 or w < 2:
                raise ConfigError(f"{self.name}: feature map {h}x{w} too small for 2x2 pooling")
            return h // 2, w // 2

        if self.stem.pool:
            h, w = pooled(h, w)
        for stage in self.stages:
            if stage.pool:
                h, w = pooled(h, w)
        return self.stages[-1].channels, h, w

    def parameter_layout(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (name, shape) for every learnable tensor."""
        out = [
            ("stem.conv.weight", (self.stem.channels, self.in_channels, self.stem.kernel, self.stem.kernel)),
            ("stem.conv.bias", (self.stem.channels,)),
            ("stem.bn.gamma", (self.stem.channels,)),
            ("stem.bn.beta", (self.stem.channels,)),
        ]
        for prefix, spec in self.blocks():
            out += [(f"{prefix}.{k}", s) for k, s in spec.param_shapes().items()]
        d = int(np.prod(self.feature_shape()))
        for i, m in enumerate(self.fc_widths, 1):
            out += [(f"fc{i}.weight", (d, m)), (f"fc{i}.bias", (m,))]
            d = m
        return out

    def buffer_layout(self) -> list[tuple[str, tuple[int, ...]]]:
        out = [("stem.bn.running_mean", (self.stem.channels,)), ("stem.bn.running_var", (self.stem.channels,))]
        for prefix, spec in self.blocks():
            out += [(f"{prefix}.{b}", (spec.out_channels,)) for b in spec.buffer_names()]
        return out

    def weight_layer_counts(self) -> tuple[int, int]:
        """(conv layers, fc layers); BN and pooling are not weight layers."""
        convs = 1
        for _, spec in self.blocks():
            convs += spec.convs + int(spec.projection)
        return convs, len(self.fc_widths)

    def with_classes(self, k: int) -> "NetworkConfig":
        return dataclasses.replace(self, classes=k, fc_widths=self.fc_widths[:-1] + (k,))

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    # ---- serialization -----------------------------------------------------

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["network"] = {
            "name": self.name,
            "classes": str(self.classes),
            "in_channels": str(self.in_channels),
            "input_size": f"{self.input_size[0]}, {self.input_size[1]}",
        }
        cp["stem"] = {k: _fmt(v) for k, v in dataclasses.asdict(self.stem).items()}
        for i, stage in enumerate(self.stages, 1):
            cp[f"stage{i}"] = {k: _fmt(v) for k, v in dataclasses.asdict(stage).items()}
        cp["fc"] = {"widths": ", ".join(str(w) for w in self.fc_widths)}
        cp["batchnorm"] = {"epsilon": repr(self.bn_epsilon), "momentum": repr(self.bn_momentum)}
        cp["init"] = {"bound": "fan" if self.init_bound is None else repr(self.init_bound)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def parse_config(text: str, source: str = "<string>") -> NetworkConfig:
    """Parse the ``key = value`` / ``[section]`` grammar into a config."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
        net = cp["network"]
        size = _ints(net.get("input_size", "224, 224"))
        if len(size) == 1:
            size = size * 2
        st = cp["stem"] if cp.has_section("stem") else {}
        stem = StemConfig(
            channels=int(st.get("channels", 64)),
            kernel=int(st.get("kernel", 3)),
            stride=int(st.get("stride", 1)),
            pool=_bool(st.get("pool", "false")),
        )
        stages = []
        i = 1
        while cp.has_section(f"stage{i}"):
            s = cp[f"stage{i}"]
            stages.append(
                StageConfig(
                    blocks=s.getint("blocks"),
                    channels=s.getint("channels"),
                    convs_per_block=s.getint("convs_per_block", 2),
                    projection=s.getboolean("projection", False),
                    pool=s.getboolean("pool", True),
                )
            )
            i += 1
        classes = net.getint("classes", 4)
        fc = _ints(cp["fc"]["widths"]) if cp.has_section("fc") else (classes,)
        bn = cp["batchnorm"] if cp.has_section("batchnorm") else {}
        bound = cp["init"].get("bound", "fan") if cp.has_section("init") else "fan"
        return NetworkConfig(
            name=net.get("name", Path(source).stem),
            stem=stem,
            stages=tuple(stages),
            fc_widths=fc,
            input_size=(size[0], size[1]),
            classes=classes,
            in_channels=net.getint("in_channels", 1),
            bn_epsilon=float(bn.get("epsilon", 1e-5)),
            bn_momentum=float(bn.get("momentum", 0.9)),
            init_bound=None if bound.strip().lower() == "fan" else float(bound),
        )
    except (configparser.Error, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def load_config(name_or_path: str | Path) -> NetworkConfig:
    """Load a shipped preset by name (``70L``, ``tiny`` ...) or a config file path."""
    name = str(name_or_path)
    if name in PRESETS:
        text = resources.files("resdens.presets").joinpath(f"{name}.cfg").read_text()
        return parse_config(text, source=f"{name}.cfg")
    path = Path(name)
    if not path.is_file():
        raise ConfigError(f"no preset or config file named {name!r}")
    return parse_config(path.read_text(), source=str(path))


@dataclass
class ParamSet:
    """Learnable tensors, their gradients, and BN running statistics."""

    config: NetworkConfig
    seed: int
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return self.config.hash()

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self) -> "ParamSet":
        return ParamSet(
            self.config,
            self.seed,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            {k: v.copy() for k, v in self.grads.items()},
        )

    def weight_layer_counts(self) -> tuple[int, int]:
        convs = sum(1 for k, v in self.params.items() if k.endswith(".weight") and v.ndim == 4)
        fcs = sum(1 for k, v in self.params.items() if k.endswith(".weight") and v.ndim == 2)
        return convs, fcs

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def _block(self, prefix: str, spec: layers.BlockSpec) -> layers.ResidualBlock:
        p = prefix + "."
        n = len(p)
        return layers.ResidualBlock(
            spec,
            {k[n:]: v for k, v in self.params.items() if k.startswith(p)},
            {k[n:]: v for k, v in self.buffers.items() if k.startswith(p)},
            self.config.bn_epsilon,
            self.config.bn_momentum,
        )

    def _stem_bn(self) -> layers.BatchNormState:
        return layers.BatchNormState(
            self.params["stem.bn.gamma"],
            self.params["stem.bn.beta"],
            self.buffers["stem.bn.running_mean"],
            self.buffers["stem.bn.running_var"],
            self.config.bn_epsilon,
            self.config.bn_momentum,
        )


def build_network(config: NetworkConfig, seed: int) -> ParamSet:
    from .optim import init_params

    return init_params(config, seed)


@dataclass
class ForwardCache:
    mode: str
    steps: list
    logits: np.ndarray


def forward(params: ParamSet, batch, mode: layers.Mode = "eval"):
    """Run the network; returns ``(probs, cache)``.

    Train mode normalizes with batch statistics and updates the BN running
    statistics held in ``params.buffers``.
    """
    layers._check_mode(mode)
    cfg = params.config
    x = np.ascontiguousarray(batch, dtype=np.float64)
    expected = (cfg.in_channels,) + tuple(cfg.input_size)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError(f"{cfg.name} expects input (N, {', '.join(map(str, expected))}), got {x.shape}")
    p = params.params
    steps = []

    steps.append(("conv", "stem.conv", x, cfg.stem_spec))
    h = tc.conv2d_forward(x, p["stem.conv.weight"], p["stem.conv.bias"], cfg.stem_spec)
    h, bn_cache = layers.batchnorm_forward(h, params._stem_bn(), mode)
    steps.append(("bn", "stem.bn", bn_cache))
    steps.append(("relu", h))
    h = tc.relu_forward(h)
    if cfg.stem.pool:
        steps.append(("pool", h.shape))
        h = tc.avg_pool2d_forward(h, *POOL)

    block_iter = cfg.blocks()
    for stage in cfg.stages:
        for _ in range(stage.blocks):
            prefix, spec = next(block_iter)
            h, bcache = layers.residual_block_forward(h, params._block(prefix, spec), mode)
            steps.append(("block", prefix, bcache))
        if stage.pool:
            steps.append(("pool", h.shape))
            h = tc.avg_pool2d_forward(h, *POOL)

    steps.append(("flatten", h.shape))
    h = h.reshape(h.shape[0], -1)
    nfc = len(cfg.fc_widths)
    for i in range(1, nfc + 1):
        steps.append(("fc", f"fc{i}", h))
        h = tc.matmul_affine_forward(h, p[f"fc{i}.weight"], p[f"fc{i}.bias"])
        if i < nfc:
            steps.append(("relu", h))
            h = tc.relu_forward(h)
    return tc.softmax(h), ForwardCache(mode, steps, h)


def backward(params: ParamSet, cache: ForwardCache, grad_logits) -> dict[str, np.ndarray]:
    """Back-propagate a gradient w.r.t. the pre-softmax logits.

    Returns the gradient of every parameter and also stores it in
    ``params.grads``.
    """
    if cache.mode != "train":
        raise UsageError("backward requires a train-mode forward cache")
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != cache.logits.shape:
        raise DimensionError(f"grad_logits shape {g.shape} != logits shape {cache.logits.shape}")
    p = params.params
    grads: dict[str, np.ndarray] = {}
    for step in reversed(cache.steps):
        kind = step[0]
        if kind == "fc":
            _, name, x_in = step
            g, grads[f"{name}.weight"], grads[f"{name}.bias"] = tc.matmul_affine_backward(x_in, p[f"{name}.weight"], g)
        elif kind == "relu":
            g = tc.relu_backward(step[1], g)
        elif kind == "flatten":
            g = g.reshape(step[1])
        elif kind == "pool":
            g = tc.avg_pool2d_backward(step[1], *POOL, g)
        elif kind == "block":
            _, prefix, bcache = step
            g, bgrads = layers.residual_block_backward(bcache, g)
            for k, v in bgrads.items():
                grads[f"{prefix}.{k}"] = v
        elif kind == "bn":
            _, name, bn_cache = step
            g, grads[f"{name}.gamma"], grads[f"{name}.beta"] = layers.batchnorm_backward(bn_cache, g)
        elif kind == "conv":
            _, name, x_in, spec = step
            g, grads[f"{name}.weight"], grads[f"{name}.bias"] = tc.conv2d_backward(x_in, p[f"{name}.weight"], spec, g)
    ordered = {k: grads[k] for k in p}
    params.grads = ordered
    return ordered


def predict_from_probs(probs) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(np.asarray(probs), axis=1)


def predict(params: ParamSet, batch) -> list[int]:
    probs, _ = forward(params, batch, "eval")
    return predict_from_probs(probs).tolist()
