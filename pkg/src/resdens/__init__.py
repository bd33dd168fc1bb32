"""Residual CNN engine for mammographic breast-density classification."""
from .errors import ConfigError, DimensionError, LabelError, NumericError, ParseError, ResdensError, UsageError
from .network import NetworkConfig, ParamSet, backward, build_network, forward, load_config, predict
from .optim import AdamState, adam_step, cross_entropy, init_params

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConfigError",
    "DimensionError",
    "LabelError",
    "NetworkConfig",
    "NumericError",
    "ParamSet",
    "ParseError",
    "ResdensError",
    "UsageError",
    "adam_step",
    "backward",
    "build_network",
    "cross_entropy",
    "forward",
    "init_params",
    "load_config",
    "predict",
]
