"""Minibatch Adam training with metrics logging and resumable checkpoints."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint as ckpt
from .data.manifest import DatasetManifest, collapse_labels, read_manifest
from .data.pgm import load_image
from .errors import ConfigError, NumericError
from .network import NetworkConfig, ParamSet, build_network, forward, backward, load_config, parse_config, predict_from_probs
from .optim import AdamState, adam_step, cross_entropy
from .plot import plot_metrics

log = logging.getLogger(__name__)

METRICS_HEADER = "iteration,epoch,train_loss,train_acc,val_loss,val_acc,wall_ms"
CLASS_MODES = ("four", "two")


@dataclass
class TrainRunConfig:
    preset: str = "tiny"
    manifest: str | None = None
    out: str = "run"
    batch_size: int = 16
    max_iterations: int = 3200
    max_epochs: float | None = None
    learning_rate: float = 1e-4
    seed: int = 0
    log_interval: int = 50
    val_cap: int | None = None
    class_mode: str = "four"
    eval_batch_size: int = 64
    # False writes wall_ms = 0 so metrics files are byte-comparable across runs
    record_wall_time: bool = True

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.log_interval < 1:
            raise ConfigError("log_interval must be >= 1")
        if self.max_epochs is not None and self.max_epochs <= 0:
            raise ConfigError("max_epochs must be positive")
        if self.class_mode not in CLASS_MODES:
            raise ConfigError(f"class_mode must be one of {CLASS_MODES}, got {self.class_mode!r}")
        if self.val_cap is not None and self.val_cap < 1:
            raise ConfigError("val_cap must be >= 1")


class ImageStore:
    """Lazily decoded images of one split, cached up to ``cache_bytes``."""

    def __init__(self, paths: list[str], labels: np.ndarray, input_size: tuple[int, int], cache_bytes: int = 1 << 30):
        self.paths = paths
        self.labels = labels
        self.input_size = tuple(input_size)
        self._cache: dict[int, np.ndarray] = {}
        self._budget = cache_bytes

    def __len__(self):
        return len(self.paths)

    def image(self, i: int) -> np.ndarray:
        img = self._cache.get(i)
        if img is None:
            img = load_image(self.paths[i])
            if img.shape != self.input_size:
                raise ConfigError(
                    f"{self.paths[i]} is {img.shape[0]}x{img.shape[1]} but the network expects "
                    f"{self.input_size[0]}x{self.input_size[1]}"
                )
            if self._budget >= img.nbytes:
                self._cache[i] = img
                self._budget -= img.nbytes
        return img

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([self.image(int(i)) for i in idx])[:, None, :, :]
        return x, self.labels[np.asarray(idx, dtype=np.int64)]


def load_split(manifest: DatasetManifest, split: str, input_size, class_mode: str = "four") -> ImageStore:
    recs = manifest.split(split)
    labels = np.array([r.label for r in recs], dtype=np.int64)
    if class_mode == "two":
        labels = collapse_labels(labels)
    return ImageStore([r.path for r in recs], labels, input_size)


def evaluate_store(params: ParamSet, store: ImageStore, idx=None, batch_size: int = 64):
    """Eval-mode (mean loss, accuracy, predictions) over ``idx`` (default: all)."""
    idx = np.arange(len(store)) if idx is None else np.asarray(idx)
    losses, preds = [], []
    for start in range(0, len(idx), batch_size):
        x, y = store.batch(idx[start : start + batch_size])
        probs, _ = forward(params, x, "eval")
        lv, _ = cross_entropy(probs, y)
        losses.append(lv.per_sample)
        preds.append(predict_from_probs(probs))
    if not losses:
        return float("nan"), float("nan"), np.zeros(0, dtype=np.int64)
    per = np.concatenate(losses)
    pred = np.concatenate(preds)
    return float(per.mean()), float(np.mean(pred == store.labels[idx])), pred


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


class Trainer:
    def __init__(self, cfg: TrainRunConfig, net_config: NetworkConfig, train: ImageStore, val: ImageStore | None = None):
        cfg.validate()
        if len(train) == 0:
            raise ConfigError("training split is empty")
        self.cfg = cfg
        self.net_config = net_config
        self.train = train
        self.val = val if val is not None and len(val) else None
        self.params = build_network(net_config, cfg.seed)
        self.adam = AdamState(lr=cfg.learning_rate)
        self.iteration = 0
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0x7A1])))
        self.accum = np.zeros(3)  # loss sum, correct, samples since last log row
        self.elapsed_ms = 0.0
        self._perm_cache: dict[int, np.ndarray] = {}
        self.out = Path(cfg.out)
        self.train.image(0)  # fail fast on size mismatch

    # ---- schedule ----------------------------------------------------------

    @property
    def total_iterations(self) -> int:
        total = self.cfg.max_iterations
        if self.cfg.max_epochs is not None:
            total = min(total, math.ceil(self.cfg.max_epochs * len(self.train) / self.cfg.batch_size))
        return total

    def epoch_of(self, iteration: int) -> int:
        return iteration * self.cfg.batch_size // len(self.train)

    def _perm(self, epoch: int) -> np.ndarray:
        p = self._perm_cache.get(epoch)
        if p is None:
            gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.cfg.seed, epoch])))
            p = gen.permutation(len(self.train))
            self._perm_cache = {epoch: p}
        return p

    def batch_indices(self, step: int) -> np.ndarray:
        """Samples ``[step*B, (step+1)*B)`` of the stream of per-epoch shuffles."""
        n, b = len(self.train), self.cfg.batch_size
        out = np.empty(b, dtype=np.int64)
        for j, q in enumerate(range(step * b, (step + 1) * b)):
            out[j] = self._perm(q // n)[q % n]
        return out

    # ---- training ------------------------------------------------------------

    def step(self) -> float:
        x, y = self.train.batch(self.batch_indices(self.iteration))
        probs, cache = forward(self.params, x, "train")
        loss, grad = cross_entropy(probs, y)
        if not math.isfinite(loss.mean):
            raise NumericError(f"non-finite training loss at iteration {self.iteration + 1}")
        grads = backward(self.params, cache, grad)
        adam_step(self.params, grads, self.adam)
        self.iteration += 1
        self.accum += (loss.per_sample.sum(), np.sum(predict_from_probs(probs) == y), len(y))
        return loss.mean

    def validation(self):
        if self.val is None:
            return None, None
        idx = None
        if self.cfg.val_cap is not None and self.cfg.val_cap < len(self.val):
            idx = np.sort(self.rng.choice(len(self.val), self.cfg.val_cap, replace=False))
        loss, acc, _ = evaluate_store(self.params, self.val, idx, self.cfg.eval_batch_size)
        return loss, acc

    @property
    def metrics_path(self) -> Path:
        return self.out / "metrics.csv"

    def _log_row(self):
        vl, va = self.validation()
        tl = self.accum[0] / self.accum[2]
        ta = self.accum[1] / self.accum[2]
        self.accum[:] = 0.0
        wall = int(round(self.elapsed_ms)) if self.cfg.record_wall_time else 0
        row = f"{self.iteration},{self.epoch_of(self.iteration)},{_fmt(tl)},{_fmt(ta)},{_fmt(vl)},{_fmt(va)},{wall}\n"
        with open(self.metrics_path, "a", encoding="utf-8") as fh:
            fh.write(row)
        log.info("iter %d epoch %d loss %.4f acc %.3f val_loss %s val_acc %s",
                 self.iteration, self.epoch_of(self.iteration), tl, ta, _fmt(vl), _fmt(va))

    def run(self, on_iteration: Callable[["Trainer"], None] | None = None) -> Path:
        """Train to ``total_iterations``; returns the final checkpoint path."""
        self.out.mkdir(parents=True, exist_ok=True)
        if self.iteration == 0 or not self.metrics_path.exists():
            self.metrics_path.write_text(METRICS_HEADER + "\n", encoding="utf-8")
        total = self.total_iterations
        while self.iteration < total:
            t0 = time.perf_counter()
            self.step()
            self.elapsed_ms += (time.perf_counter() - t0) * 1e3
            it = self.iteration
            if it % self.cfg.log_interval == 0 or it == total:
                self._log_row()
            if self.epoch_of(it) > self.epoch_of(it - 1):
                self.save(self.out / "last.rdck")
            if on_iteration is not None:
                on_iteration(self)
        final = self.save(self.out / "final.rdck")
        plot_metrics(self.metrics_path, self.out / "metrics.svg")
        return final

    # ---- checkpoints ---------------------------------------------------------

    def state_entries(self) -> dict[str, np.ndarray]:
        e = {
            "meta/config": ckpt.text_entry(self.net_config.to_text()),
            "meta/config_hash": ckpt.text_entry(self.net_config.hash()),
            "meta/run": ckpt.text_entry(json.dumps(dataclasses.asdict(self.cfg), sort_keys=True)),
            "meta/iteration": np.array([self.iteration], dtype=np.int64),
            "meta/seed": np.array([self.cfg.seed], dtype=np.int64),
            "meta/elapsed_ms": np.array([self.elapsed_ms if self.cfg.record_wall_time else 0.0]),
            "adam/t": np.array([self.adam.t], dtype=np.int64),
            "adam/hyper": np.array([self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps_hat]),
            "rng/state": ckpt.rng_to_words(self.rng),
            "train/accum": self.accum.copy(),
        }
        e.update({f"param/{k}": v for k, v in self.params.params.items()})
        e.update({f"buffer/{k}": v for k, v in self.params.buffers.items()})
        e.update({f"adam/m/{k}": v for k, v in self.adam.m.items()})
        e.update({f"adam/v/{k}": v for k, v in self.adam.v.items()})
        return e

    def save(self, path) -> Path:
        ckpt.save(path, self.state_entries())
        return Path(path)

    def restore(self, entries: dict[str, np.ndarray]):
        text = ckpt.entry_text(entries["meta/config"])
        if parse_config(text).hash() != self.net_config.hash():
            raise ConfigError("checkpoint was written for a different network configuration")
        self.iteration = int(entries["meta/iteration"][0])
        self.elapsed_ms = float(entries["meta/elapsed_ms"][0])
        for k in self.params.params:
            self.params.params[k] = entries[f"param/{k}"].copy()
        for k in self.params.buffers:
            self.params.buffers[k] = entries[f"buffer/{k}"].copy()
        lr, b1, b2, eps = (float(v) for v in entries["adam/hyper"])
        self.adam = AdamState(lr, b1, b2, eps, int(entries["adam/t"][0]))
        for k in self.params.params:
            if f"adam/m/{k}" in entries:
                self.adam.m[k] = entries[f"adam/m/{k}"].copy()
                self.adam.v[k] = entries[f"adam/v/{k}"].copy()
        self.rng = ckpt.words_to_rng(entries["rng/state"])
        self.accum = entries["train/accum"].copy()
        self._truncate_metrics()

    def _truncate_metrics(self):
        """Drop metric rows written after the checkpoint's iteration."""
        if not self.metrics_path.exists():
            return
        lines = self.metrics_path.read_text(encoding="utf-8").splitlines(keepends=True)
        keep = [lines[0]] + [ln for ln in lines[1:] if int(ln.split(",", 1)[0]) <= self.iteration]
        self.metrics_path.write_text("".join(keep), encoding="utf-8")


def params_from_checkpoint(path) -> ParamSet:
    entries = ckpt.load(path)
    config = parse_config(ckpt.entry_text(entries["meta/config"]), source=str(path))
    seed = int(entries["meta/seed"][0])
    params = build_network(config, seed)
    for k in params.params:
        params.params[k] = entries[f"param/{k}"].copy()
    for k in params.buffers:
        params.buffers[k] = entries[f"buffer/{k}"].copy()
    return params


def network_for(cfg: TrainRunConfig) -> NetworkConfig:
    net = load_config(cfg.preset)
    if cfg.class_mode == "two" and net.classes != 2:
        net = net.with_classes(2)
    return net


def train(cfg: TrainRunConfig, resume: str | None = None, on_iteration=None) -> Trainer:
    """Build stores from the manifest, optionally resume, and run to completion."""
    cfg.validate()
    if cfg.manifest is None:
        raise ConfigError("a manifest is required for training")
    net = network_for(cfg)
    manifest = read_manifest(cfg.manifest)
    trainer = Trainer(
        cfg,
        net,
        load_split(manifest, "train", net.input_size, cfg.class_mode),
        load_split(manifest, "val", net.input_size, cfg.class_mode),
    )
    if resume is not None:
        trainer.restore(ckpt.load(resume))
    trainer.run(on_iteration)
    return trainer
