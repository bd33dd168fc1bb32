"""``resdens`` command line: prepare | train | evaluate | gradcheck | synth.

Every option can also come from ``--config FILE`` (``key = value`` lines in a
``[run]`` section and/or a section named after the subcommand); flags given
on the command line win.

Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error,
3 gradcheck failure.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from . import __version__
from .data.manifest import CLASS_NAMES, DatasetManifest, collapse_labels, Record, normalize_ordering, read_manifest, split_dataset, write_manifest
from .data.pgm import write_image
from .data.prepare import count_table, prepare_dataset
from .data.synthetic import generate_synthetic
from .errors import ConfigError, LabelError, ParseError, ResdensError, UsageError
from .evaluate import EvalReport
from .network import load_config
from .train import TrainRunConfig, evaluate_store, load_split, params_from_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_GRADCHECK = 0, 1, 2, 3
DEFAULT_SPLIT = "349,77,95"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _split_arg(text: str) -> tuple:
    parts = [p for p in str(text).replace(",", " ").split() if p]
    try:
        return tuple(int(p) if p.isdigit() else float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"cannot parse split sizes {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resdens", description="Residual CNN breast-density classification toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        return sp

    sp = common(sub.add_parser("prepare", help="split, rebalance, augment and resize a labelled image folder"))
    sp.add_argument("--input", help="directory holding labels.csv (path,label) and PGM images")
    sp.add_argument("--preset", help="network preset whose input size images are resized to")
    sp.add_argument("--size", type=int, nargs="+", help="explicit output size H [W]")
    sp.add_argument("--split", help="train,val,test counts or fractions")
    sp.add_argument("--ordering", choices=["paper", "leakfree", "leak-free"])
    sp.add_argument("--angles", type=int)
    sp.add_argument("--maxval", type=int)
    sp.add_argument("--force", action="store_true", default=None)

    sp = common(sub.add_parser("train", help="train a network from a prepared manifest"))
    sp.add_argument("--preset")
    sp.add_argument("--manifest")
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--max-iterations", type=int)
    sp.add_argument("--max-epochs", type=float)
    sp.add_argument("--log-interval", type=int)
    sp.add_argument("--val-cap", type=int)
    sp.add_argument("--class-mode", choices=["four", "two"])
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--no-wall-time", action="store_true", default=None, help="write wall_ms as 0")

    sp = common(sub.add_parser("evaluate", help="per-class accuracy report for a checkpoint"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--manifest")
    sp.add_argument("--split")
    sp.add_argument("--class-mode", choices=["four", "two"])

    sp = common(sub.add_parser("gradcheck", help="finite-difference check of all backward passes"))
    sp.add_argument("--preset")

    sp = common(sub.add_parser("synth", help="write a synthetic density dataset"))
    sp.add_argument("--n-per-class", type=int)
    sp.add_argument("--size", type=int)
    sp.add_argument("--split", help="optional train,val,test counts or fractions")
    sp.add_argument("--maxval", type=int)
    return p


DEFAULTS = {
    "prepare": dict(seed=0, out="prepared", preset="70L", size=None, split=DEFAULT_SPLIT, ordering="leak-free",
                    angles=8, maxval=255, force=False, input=None),
    "train": dict(seed=0, out="run", preset="tiny", manifest=None, batch_size=16, lr=1e-4, max_iterations=3200,
                  max_epochs=None, log_interval=50, val_cap=None, class_mode="four", resume=None, no_wall_time=False),
    "evaluate": dict(seed=0, out=None, checkpoint=None, manifest=None, split="test", class_mode="four"),
    "gradcheck": dict(seed=0, out=None, preset="tiny"),
    "synth": dict(seed=0, out="synth", n_per_class=10, size=32, split=None, maxval=255),
}
_TYPES = {"seed": int, "batch_size": int, "lr": float, "max_iterations": int, "max_epochs": float, "log_interval": int,
          "val_cap": int, "angles": int, "maxval": int, "n_per_class": int}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags."""
    opts = dict(DEFAULTS[args.command])
    if getattr(args, "config", None):
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            if not cp.read(args.config):
                raise ConfigError(f"cannot read config file {args.config}")
        except configparser.Error as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        for section in ("run", args.command):
            if cp.has_section(section):
                for key, value in cp[section].items():
                    key = key.replace("-", "_")
                    if key not in opts:
                        raise ConfigError(f"{args.config}: unknown key {key!r} for {args.command}")
                    opts[key] = _coerce(key, value)
    for key, value in vars(args).items():
        if key in opts and value is not None:
            opts[key] = value
    return opts


def _coerce(key, value: str):
    if key in _TYPES:
        return _TYPES[key](value)
    if key in ("force", "no_wall_time"):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if key == "size":
        return [int(v) for v in value.replace(",", " ").split()]
    return value


def cmd_prepare(o) -> int:
    if not o["input"]:
        raise ConfigError("prepare needs --input")
    if o["size"]:
        size = tuple(o["size"]) if len(o["size"]) == 2 else (o["size"][0],) * 2
    else:
        size = load_config(o["preset"]).input_size
    m = prepare_dataset(o["input"], o["out"], _split_arg(o["split"]), o["seed"], size,
                        normalize_ordering(o["ordering"]), o["angles"], o["maxval"], o["force"])
    print(f"wrote {len(m.records)} records to {Path(o['out']) / 'manifest.csv'} ({m.ordering} ordering)")
    print(count_table(m))
    return EXIT_OK


def cmd_train(o) -> int:
    cfg = TrainRunConfig(
        preset=o["preset"], manifest=o["manifest"], out=o["out"], batch_size=o["batch_size"],
        max_iterations=o["max_iterations"], max_epochs=o["max_epochs"], learning_rate=o["lr"], seed=o["seed"],
        log_interval=o["log_interval"], val_cap=o["val_cap"], class_mode=o["class_mode"],
        record_wall_time=not o["no_wall_time"],
    )
    t = train(cfg, resume=o["resume"])
    print(f"trained {t.iteration} iterations; checkpoint {Path(cfg.out) / 'final.rdck'}; metrics {t.metrics_path}")
    return EXIT_OK


def evaluate_checkpoint(checkpoint, manifest: DatasetManifest, split: str, class_mode: str) -> EvalReport:
    params = params_from_checkpoint(checkpoint)
    if not manifest.split(split):
        raise ConfigError(f"manifest has no records in split {split!r}")
    k = params.config.classes
    if class_mode == "four" and k != 4:
        raise ConfigError(f"a {k}-class network cannot be evaluated in four-class mode")
    store = load_split(manifest, split, params.config.input_size, "four" if k == 4 else "two")
    _, _, pred = evaluate_store(params, store)
    labels = store.labels
    if class_mode == "two" and k == 4:
        labels, pred = collapse_labels(labels), collapse_labels(pred)
    classes = 2 if class_mode == "two" else 4
    return EvalReport.from_predictions(labels, pred, classes, model=params.config.name, class_names=CLASS_NAMES[classes])


def cmd_evaluate(o) -> int:
    if not o["checkpoint"] or not o["manifest"]:
        raise ConfigError("evaluate needs --checkpoint and --manifest")
    report = evaluate_checkpoint(o["checkpoint"], read_manifest(o["manifest"]), o["split"], o["class_mode"])
    print(report.to_table())
    print()
    print(report.confusion_table())
    if o["out"]:
        print(f"report written to {report.write_csv(o['out'])}")
    return EXIT_OK


def cmd_gradcheck(o) -> int:
    from .gradcheck import main_report

    ok, text = main_report(o["preset"], o["seed"])
    print(text)
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_synth(o) -> int:
    out = Path(o["out"])
    images = generate_synthetic(o["n_per_class"], o["size"], o["seed"])
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    lines = ["path,label"]
    for img in images:
        rel = f"images/{img.source_id}.pgm"
        write_image(out / rel, img.pixels, o["maxval"])
        records.append(Record(str((out / rel).resolve()), img.label, "train", rel, None))
        lines.append(f"{rel},{img.label}")
    (out / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if o["split"]:
        manifest = split_dataset(records, _split_arg(o["split"]), o["seed"], "leak-free", rebalance=False)
    else:
        manifest = DatasetManifest(records, seed=o["seed"])
    manifest.materialized = True
    write_manifest(manifest, out / "manifest.csv")
    print(f"wrote {len(images)} images and manifest to {out}")
    print(count_table(manifest))
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](resolve(args))
    except (ConfigError, LabelError, UsageError, ParseError, FileNotFoundError, PermissionError) as exc:
        print(f"resdens {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResdensError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"resdens {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
