from pathlib import Path

import numpy as np
import pytest

from resdens.cli import main
from resdens.data import read_manifest
from resdens.train import ImageStore


def write_synth(out: Path, n_per_class: int, seed: int = 0, split: str | None = None, size: int = 32) -> Path:
    """Synthetic dataset on disk via the CLI; returns the manifest path."""
    argv = ["synth", "--out", str(out), "--n-per-class", str(n_per_class), "--seed", str(seed), "--size", str(size)]
    if split:
        argv += ["--split", split]
    assert main(argv) == 0
    return out / "manifest.csv"


def store_for(manifest_path: Path, split: str, size=(32, 32)) -> ImageStore:
    recs = read_manifest(manifest_path).split(split)
    return ImageStore([r.path for r in recs], np.array([r.label for r in recs], dtype=np.int64), size)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory) -> Path:
    """40 images split 24/8/8, shared read-only by several tests."""
    return write_synth(tmp_path_factory.mktemp("synth") / "d", 10, seed=3, split="24,8,8")


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the summary prints them all at the end."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
