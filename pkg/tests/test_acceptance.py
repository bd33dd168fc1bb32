"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines are printed in the
"acceptance criteria" section of the terminal summary.
"""
import csv
import time

import numpy as np
import pytest

from resdens import build_network, load_config
from resdens import checkpoint as ckpt
from resdens import tensor_core as tc
from resdens.cli import main
from resdens.data import DatasetManifest, Record, expand_training_set, read_manifest, rebalance_minority
from resdens.data.manifest import CLASS_NAMES, collapse_labels
from resdens.gradcheck import run_gradcheck
from resdens.optim import AdamState, adam_step
from resdens.train import Trainer, TrainRunConfig, evaluate_store

from conftest import store_for, write_synth
from oracles import affine_loop, avgpool_loop, conv2d_loop, reference_adam


def last_row(metrics_path):
    with open(metrics_path, newline="") as fh:
        return list(csv.DictReader(fh))[-1]


def test_gradient_gate(verdict):
    t0 = time.perf_counter()
    results = run_gradcheck("tiny", seed=0)
    secs = time.perf_counter() - t0
    worst = max(r.worst for r in results)
    groups = {r.group.split(":")[0] for r in results}
    ok = all(r.passed for r in results) and secs < 60 and {"conv", "batchnorm", "fc", "residual_block",
                                                           "softmax_ce", "network"} <= groups
    assert verdict("gradient gate", ok, f"{len(results)} groups, worst rel err {worst:.2e} (<= 1e-5), {secs:.1f}s (< 60s)")


def test_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    worst, shapes = 0.0, 0
    for _ in range(40):
        n, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.integers(1, 4))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        h, w = int(rng.integers(k, 9)), int(rng.integers(k, 9))
        x = rng.normal(size=(n, c, h, w))
        wt, b = rng.normal(size=(o, c, k, k)), rng.normal(size=o)
        out = tc.conv2d_forward(x, wt, b, tc.ConvSpec((k, k), stride, pad))
        worst = max(worst, np.max(np.abs(out - conv2d_loop(x, wt, b, stride, pad))))
        shapes += 1
    for _ in range(40):
        kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
        sh, sw = (int(v) for v in rng.integers(1, 3, size=2))
        x = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(kh, 10)),
                             int(rng.integers(kw, 10))))
        out = tc.avg_pool2d_forward(x, (kh, kw), (sh, sw))
        worst = max(worst, np.max(np.abs(out - avgpool_loop(x, (kh, kw), (sh, sw)))))
        shapes += 1
    for _ in range(40):
        n, d, m = (int(v) for v in rng.integers(1, 20, size=3))
        x, w, b = rng.normal(size=(n, d)), rng.normal(size=(d, m)), rng.normal(size=m)
        worst = max(worst, np.max(np.abs(tc.matmul_affine_forward(x, w, b) - affine_loop(x, w, b))))
        shapes += 1
    assert verdict("oracle equivalence", shapes >= 100 and worst <= 1e-12,
                   f"{shapes} random shapes (conv/pool/affine), max abs diff {worst:.1e} (<= 1e-12)")


@pytest.mark.slow
def test_overfit(verdict, tmp_path):
    m = write_synth(tmp_path / "d", 4, seed=11, split="16,0,0")
    cfg = TrainRunConfig(out=str(tmp_path / "run"), batch_size=16, learning_rate=1e-4, max_iterations=500,
                         log_interval=50, record_wall_time=False)
    t0 = time.perf_counter()
    t = Trainer(cfg, load_config("tiny"), store_for(m, "train"))
    t.run()
    secs = time.perf_counter() - t0
    row = last_row(t.metrics_path)
    acc, loss = float(row["train_acc"]), float(row["train_loss"])
    ok = acc == 1.0 and loss < 0.01 and secs < 120
    assert verdict("overfit", ok, f"16 samples, 500 iterations: train acc {acc:.0%}, loss {loss:.2e} (< 0.01), {secs:.0f}s (< 120s)")


@pytest.mark.slow
def test_synthetic_four_class(verdict, tmp_path):
    # synth -> prepare (augmentation of train/val, test untouched) -> train -> evaluate
    write_synth(tmp_path / "raw", 70, seed=7)
    assert main(["prepare", "--input", str(tmp_path / "raw"), "--out", str(tmp_path / "prep"), "--size", "32",
                 "--split", "200,40,40", "--seed", "7"]) == 0
    m = tmp_path / "prep" / "manifest.csv"
    bases = {s: len({r.source_id for r in read_manifest(m).split(s)}) for s in ("train", "val", "test")}
    assert bases == {"train": 200, "val": 40, "test": 40}
    cfg = TrainRunConfig(out=str(tmp_path / "run"), max_iterations=3000, log_interval=500, val_cap=200,
                         record_wall_time=False)
    t0 = time.perf_counter()
    t = Trainer(cfg, load_config("tiny"), store_for(m, "train"), store_for(m, "val"))
    t.run()
    test = store_for(m, "test")
    _, acc4, pred = evaluate_store(t.params, test)
    secs = time.perf_counter() - t0
    acc2 = float(np.mean(collapse_labels(pred) == collapse_labels(test.labels)))
    ok = acc4 >= 0.90 and acc2 >= acc4 and secs < 600
    assert verdict("synthetic four-class", ok,
                   f"test acc four-class {acc4:.1%} (>= 90%), two-class {acc2:.1%} (>= four-class), {secs:.0f}s (< 600s)")


@pytest.mark.parametrize("name,split", [("36L", (33, 3)), ("48L", (45, 3)), ("70L", (67, 3))])
def test_architecture_accounting(verdict, name, split):
    cfg = load_config(name)
    built = build_network(cfg, 0).weight_layer_counts()
    ok = built == split and sum(built) == int(name[:-1]) and cfg.weight_layer_counts() == split
    assert verdict(f"architecture accounting {name}", ok, f"{built[0]} conv + {built[1]} fc = {sum(built)}")


def test_augmentation_arithmetic(verdict):
    def base(n, split, label=0):
        return [Record(f"/x/{split}{i}.pgm", label, split, f"{split}{i}") for i in range(n)]

    expanded = expand_training_set(DatasetManifest(base(349, "train") + base(77, "val")), seed=0)
    counts = {s: len(expanded.split(s)) for s in ("train", "val")}
    minority = rebalance_minority(DatasetManifest(base(28, "train", label=3)))
    n4 = sum(r.label == 3 for r in minority.records)
    ok = counts == {"train": 11168, "val": 2464} and n4 == 112
    assert verdict("augmentation arithmetic", ok,
                   f"349 -> {counts['train']} (11168), 77 -> {counts['val']} (2464), class IV 28 -> {n4} (112)")


def test_determinism_and_resume(verdict, small_synth, tmp_path):
    def trainer(out):
        cfg = TrainRunConfig(out=str(tmp_path / out), max_iterations=18, batch_size=4, log_interval=3,
                             record_wall_time=False)
        return Trainer(cfg, load_config("tiny"), store_for(small_synth, "train"), store_for(small_synth, "val"))

    a, b = trainer("a"), trainer("b")
    a.run()
    b.run()
    same = a.metrics_path.read_bytes() == b.metrics_path.read_bytes()

    class Halt(Exception):
        pass

    def halt(tr):
        if tr.iteration == 14:
            raise Halt

    c = trainer("c")
    with pytest.raises(Halt):
        c.run(on_iteration=halt)
    resumed = trainer("c")
    resumed.restore(ckpt.load(tmp_path / "c" / "last.rdck"))
    resumed.run()
    resumed_same = resumed.metrics_path.read_bytes() == a.metrics_path.read_bytes()
    pa, pc = a.params.params, resumed.params.params
    params_same = all(pa[k].tobytes() == pc[k].tobytes() for k in pa)
    assert verdict("determinism & resume", same and resumed_same and params_same,
                   f"repeat run identical: {same}; resume from iteration 12 identical: {resumed_same and params_same}")


def test_adam_unit_suite(verdict):
    one = {"w": np.array([0.0])}
    adam_step(one, {"w": np.array([1.0])}, AdamState(lr=0.1))
    e1 = abs(one["w"][0] - (-0.1 / (1.0 + 1e-8)))
    two = {"w": np.array([0.0])}
    state = AdamState(lr=0.1)
    for g in (1.0, -0.5):
        adam_step(two, {"w": np.array([g])}, state)
    e2 = abs(two["w"][0] - reference_adam(0.0, [1.0, -0.5], 0.1))
    theta = {"w": np.array([1.5, -2.0])}
    adam_step(theta, {"w": np.zeros(2)}, AdamState())
    noop = theta["w"].tolist() == [1.5, -2.0]
    ok = e1 <= 1e-15 and e2 <= 1e-15 and noop
    assert verdict("adam unit suite", ok, f"single-step err {e1:.1e}, two-step err {e2:.1e} (<= 1e-15), zero-grad no-op: {noop}")


@pytest.mark.parametrize("mode,k", [("four", 4), ("two", 2)])
def test_report_shape(verdict, small_synth, tmp_path, capsys, mode, k):
    cfg = TrainRunConfig(out=str(tmp_path / "run"), max_iterations=2, batch_size=4, record_wall_time=False)
    t = Trainer(cfg, load_config("tiny"), store_for(small_synth, "train"))
    final = t.run()
    capsys.readouterr()
    rc = main(["evaluate", "--checkpoint", str(final), "--manifest", str(small_synth), "--class-mode", mode])
    lines = capsys.readouterr().out.strip().split("\n\n")[0].splitlines()
    labels = [ln.rsplit(None, 1)[0].strip() for ln in lines[1:]]
    ok = rc == 0 and lines[0].split()[0] == "Models" and labels == list(CLASS_NAMES[k]) + ["ALL(accuracy)"]
    assert verdict(f"report shape ({mode}-class)", ok, " | ".join(labels))
