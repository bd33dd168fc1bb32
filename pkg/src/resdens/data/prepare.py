"""Materialize a manifest: apply augmentation tags, resize, write PGM files."""
from __future__ import annotations

import dataclasses
import os
import shutil
import tempfile
from pathlib import Path

from ..errors import ConfigError, UsageError
from .images import augment, resize
from .manifest import (
    SPLITS,
    DatasetManifest,
    Record,
    expand_training_set,
    normalize_ordering,
    read_labels_csv,
    split_dataset,
    write_manifest,
)
from .pgm import load_image, write_image

LABELS_FILE = "labels.csv"


def _out_name(r: Record, k: int) -> str:
    stem = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in Path(r.source_id).with_suffix("").as_posix())
    return f"{r.split}/{stem}_{k:03d}.pgm"


def materialize(manifest: DatasetManifest, out_dir, size: tuple[int, int], maxval: int = 255) -> DatasetManifest:
    """Write every record as a ``size`` PGM under ``out_dir/images``.

    Records of one source are rendered from a single decoded copy of it.
    """
    out_dir = Path(out_dir)
    per_source: dict[tuple[str, str], int] = {}
    cache_path, cache_img = None, None
    written = []
    for r in manifest.records:
        if r.path != cache_path:
            cache_path, cache_img = r.path, load_image(r.path)
        img = cache_img
        if r.tag is not None and not manifest.materialized:
            img = augment(img, r.tag.angle, r.tag.hflip, r.tag.vflip)
        img = resize(img, size)
        key = (r.split, r.source_id)
        k = per_source.get(key, 0)
        per_source[key] = k + 1
        dest = out_dir / "images" / _out_name(r, k)
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_image(dest, img, maxval)
        written.append(dataclasses.replace(r, path=str(dest.resolve())))
    return dataclasses.replace(manifest, records=written, materialized=True)


def count_table(manifest: DatasetManifest, classes: int = 4) -> str:
    counts = manifest.counts()
    splits = [s for s in SPLITS if s in counts] + sorted(s for s in counts if s not in SPLITS)
    header = f"{'class':<8}" + "".join(f"{s:>10}" for s in splits)
    lines = [header]
    for c in range(classes):
        lines.append(f"{c:<8}" + "".join(f"{counts[s][c]:>10}" for s in splits))
    lines.append(f"{'total':<8}" + "".join(f"{sum(counts[s].values()):>10}" for s in splits))
    return "\n".join(lines)


def prepare_dataset(input_dir, out_dir, split, seed: int, size: tuple[int, int], ordering: str = "leak-free",
                    angles: int = 8, maxval: int = 255, force: bool = False) -> DatasetManifest:
    """split -> rebalance -> expand -> resize, written atomically to ``out_dir``.

    ``input_dir`` holds ``labels.csv`` (``path,label``) and the PGM images it
    lists. Nothing is left behind in ``out_dir`` if any step fails.
    """
    input_dir, out_dir = Path(input_dir), Path(out_dir)
    labels = input_dir / LABELS_FILE
    if not labels.is_file():
        raise ConfigError(f"{input_dir} has no {LABELS_FILE}")
    records = read_labels_csv(labels)
    if not records:
        raise ConfigError(f"{labels} lists no images")
    missing = [r.path for r in records if not Path(r.path).is_file()]
    if missing:
        raise ConfigError(f"{len(missing)} listed images are missing, e.g. {missing[0]}")
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise UsageError(f"output directory {out_dir} is not empty")
    ordering = normalize_ordering(ordering)
    manifest = split_dataset(records, split, seed, ordering)
    manifest = expand_training_set(manifest, seed, angles)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        done = materialize(manifest, tmp, size, maxval)
        done = dataclasses.replace(done, extra={"size": list(size)})
        # rewrite paths to their final location before writing the manifest
        final = dataclasses.replace(
            done, records=[dataclasses.replace(r, path=str(out_dir.resolve() / Path(r.path).relative_to(tmp.resolve()))) for r in done.records]
        )
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
        write_manifest(final, out_dir / "manifest.csv")
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final
