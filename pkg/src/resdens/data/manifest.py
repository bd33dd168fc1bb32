"""Dataset records, splitting, minority rebalancing, and augmentation expansion."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, LabelError, UsageError

SPLITS = ("train", "val", "test")
ORDERINGS = ("leak-free", "paper")
CLASS_NAMES = {
    4: ("BI-RADS I", "BI-RADS II", "BI-RADS III", "BI-RADS IV"),
    2: ("Scattered density", "Heterogeneously dense"),
}
MANIFEST_HEADER = ["path", "label", "split", "source_id", "angle", "hflip", "vflip"]
MINORITY_CLASS = 3
ANGLES_PER_IMAGE = 8


@dataclass(frozen=True)
class AugTag:
    angle: float
    hflip: bool = False
    vflip: bool = False


@dataclass(frozen=True)
class Record:
    path: str
    label: int
    split: str = ""
    source_id: str = ""
    tag: AugTag | None = None


@dataclass
class LabeledImage:
    pixels: np.ndarray
    label: int
    source_id: str
    augmentation_tag: AugTag | None = None


@dataclass
class DatasetManifest:
    records: list[Record]
    seed: int | None = None
    ratios: tuple | None = None
    ordering: str = "leak-free"
    rebalanced: bool = False
    expanded: bool = False
    # True once every record's file already has its tag applied
    materialized: bool = False
    extra: dict = field(default_factory=dict)

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name]

    def counts(self) -> dict[str, Counter]:
        out = {s: Counter() for s in SPLITS}
        for r in self.records:
            out.setdefault(r.split, Counter())[r.label] += 1
        return out

    def sources_by_split(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for r in self.records:
            out.setdefault(r.split, set()).add(r.source_id)
        return out

    def check_leak_free(self):
        seen = self.sources_by_split()
        names = sorted(seen)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                shared = seen[a] & seen[b]
                if shared:
                    raise UsageError(f"splits {a!r} and {b!r} share sources, e.g. {sorted(shared)[0]!r}")

    def meta(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios) if self.ratios is not None else None,
            "ordering": self.ordering,
            "rebalanced": self.rebalanced,
            "expanded": self.expanded,
            "materialized": self.materialized,
            **self.extra,
        }


def check_label(label, classes: int = 4) -> int:
    if isinstance(label, (bool, np.bool_)) or int(label) != label or not 0 <= int(label) < classes:
        raise LabelError(f"label {label!r} outside 0..{classes - 1}")
    return int(label)


def to_two_class(label4) -> int:
    """BI-RADS I/II -> 0 (scattered), III/IV -> 1 (heterogeneously dense)."""
    return int(check_label(label4) >= 2)


def collapse_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.size and (arr.min() < 0 or arr.max() > 3):
        raise LabelError(f"labels must lie in 0..3, got range {arr.min()}..{arr.max()}")
    return (arr >= 2).astype(np.int64)


# ---- file formats ------------------------------------------------------------


def read_labels_csv(path) -> list[Record]:
    """Read a ``path,label`` CSV; each row becomes a base record whose
    source_id is the path as written."""
    path = Path(path)
    root = path.parent
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "label"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected a header with 'path' and 'label' columns")
        for row in reader:
            label = check_label(int(row["label"]))
            records.append(Record(str((root / row["path"]).resolve()), label, "", row["path"], None))
    return records


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    root = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            rel = Path(os.path.relpath(Path(r.path).resolve(), root)).as_posix()
            if r.tag is None:
                tag = ["", "", ""]
            else:
                tag = [repr(float(r.tag.angle)), str(int(r.tag.hflip)), str(int(r.tag.vflip))]
            w.writerow([rel, r.label, r.split, r.source_id] + tag)
    _meta_path(path).write_text(json.dumps(manifest.meta(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest {path} does not exist")
    root = path.parent
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ConfigError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            tag = None
            if row["angle"] != "":
                tag = AugTag(float(row["angle"]), row["hflip"] == "1", row["vflip"] == "1")
            records.append(
                Record(str((root / row["path"]).resolve()), check_label(int(row["label"])), row["split"], row["source_id"], tag)
            )
    meta = {}
    if _meta_path(path).is_file():
        meta = json.loads(_meta_path(path).read_text(encoding="utf-8"))
    known = {"seed", "ratios", "ordering", "rebalanced", "expanded", "materialized"}
    return DatasetManifest(
        records,
        seed=meta.get("seed"),
        ratios=tuple(meta["ratios"]) if meta.get("ratios") is not None else None,
        ordering=meta.get("ordering", "leak-free"),
        rebalanced=meta.get("rebalanced", False),
        expanded=meta.get("expanded", False),
        materialized=meta.get("materialized", True),
        extra={k: v for k, v in meta.items() if k not in known},
    )


# ---- pipeline stages ---------------------------------------------------------


def _stream_seed(seed: int, *keys) -> np.random.Generator:
    """Generator keyed only by (seed, keys) so results ignore processing order."""
    words = [zlib.crc32(str(k).encode("utf-8")) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))


def rebalance_minority(manifest: DatasetManifest, splits: Iterable[str] | None = None) -> DatasetManifest:
    """Add 90/180/270 degree copies of every un-augmented BI-RADS IV record.

    ``splits`` limits the operation to records in those splits (None = all).
    A manifest that is already rebalanced is returned unchanged.
    """
    if manifest.rebalanced:
        return manifest
    allowed = None if splits is None else set(splits)
    out = []
    for r in manifest.records:
        out.append(r)
        if r.label == MINORITY_CLASS and r.tag is None and (allowed is None or r.split in allowed):
            out += [dataclasses.replace(r, tag=AugTag(float(a))) for a in (90, 180, 270)]
    return dataclasses.replace(manifest, records=out, rebalanced=True)


def resolve_counts(ratios: Sequence, n: int) -> tuple[int, int, int]:
    """Turn (train, val, test) counts or fractions into exact counts for ``n`` records."""
    if len(ratios) != 3:
        raise ConfigError(f"need three split sizes (train, val, test), got {list(ratios)}")
    values = [float(r) for r in ratios]
    if min(values) < 0:
        raise ConfigError(f"split sizes must be non-negative, got {list(ratios)}")
    is_counts = all(isinstance(r, (int, np.integer)) for r in ratios) or max(values) > 1
    if is_counts:
        if all(v.is_integer() for v in values) and sum(values) == n:
            return tuple(int(v) for v in values)
    elif abs(sum(values) - 1.0) < 1e-9:
        val = int(round(values[1] * n))
        test = int(round(values[2] * n))
        return n - val - test, val, test
    raise ConfigError(f"split sizes {list(ratios)} must be counts summing to {n} or fractions summing to 1.0")


def _assign(records: list[Record], counts, seed: int) -> list[Record]:
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(len(records))
    split_of = np.empty(len(records), dtype=object)
    start = 0
    for name, c in zip(SPLITS, counts):
        split_of[perm[start : start + c]] = name
        start += c
    by_split = {s: [] for s in SPLITS}
    for r, s in zip(records, split_of):
        by_split[s].append(dataclasses.replace(r, split=s))
    return [r for s in SPLITS for r in by_split[s]]


def split_dataset(records: Sequence[Record], ratios, seed: int, ordering: str = "leak-free", rebalance: bool = True) -> DatasetManifest:
    """Random train/val/test partition.

    ``paper`` ordering rebalances BI-RADS IV before splitting, so rotated
    copies of one image can land in different splits. ``leak-free`` splits
    the base images first and rebalances train and val only.
    """
    ordering = normalize_ordering(ordering)
    records = list(records)
    if ordering == "paper":
        pool = rebalance_minority(DatasetManifest(records)).records if rebalance else records
        counts = resolve_counts(ratios, len(pool))
        return DatasetManifest(_assign(pool, counts, seed), seed, tuple(ratios), ordering, rebalance)
    ids = [r.source_id for r in records]
    if len(set(ids)) != len(ids):
        raise ConfigError("leak-free splitting needs one base record per source_id")
    counts = resolve_counts(ratios, len(records))
    m = DatasetManifest(_assign(records, counts, seed), seed, tuple(ratios), ordering)
    if rebalance:
        m = rebalance_minority(m, splits=("train", "val"))
    m.check_leak_free()
    return m


def normalize_ordering(ordering: str) -> str:
    o = ordering.strip().lower().replace("_", "-")
    if o == "leakfree":
        o = "leak-free"
    if o not in ORDERINGS:
        raise ConfigError(f"ordering must be 'paper' or 'leak-free', got {ordering!r}")
    return o


def expand_training_set(manifest: DatasetManifest, seed: int, angles: int = ANGLES_PER_IMAGE) -> DatasetManifest:
    """Replace every train/val record by ``angles`` x 2 x 2 augmented records.

    Angles are drawn from U[0, 360) with a stream keyed by (seed, source_id,
    existing rotation) and composed with any rotation the record already has.
    """
    if manifest.expanded:
        raise UsageError("manifest is already expanded")
    out = []
    for r in manifest.records:
        if r.split not in ("train", "val"):
            out.append(r)
            continue
        base = r.tag.angle if r.tag is not None else 0.0
        draws = _stream_seed(seed, r.source_id, repr(base)).uniform(0.0, 360.0, size=angles)
        for a in draws:
            angle = float((base + a) % 360.0)
            for hflip in (False, True):
                for vflip in (False, True):
                    out.append(dataclasses.replace(r, tag=AugTag(angle, hflip, vflip)))
    return dataclasses.replace(manifest, records=out, expanded=True, materialized=False)
