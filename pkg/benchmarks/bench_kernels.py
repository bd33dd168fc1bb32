"""Time the numpy and numba kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Kernel rows call both implementations directly. The last row times one tiny
training step per backend in a subprocess, since the backend is fixed at
import time by RESDENS_KERNELS.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from resdens.kernels import _numba, _numpy

STEP_SNIPPET = """
import timeit, numpy as np
from resdens import backward, build_network, forward, load_config
from resdens.optim import cross_entropy
cfg = load_config("tiny")
p = build_network(cfg, 0)
x = np.random.default_rng(0).uniform(size=(16, 1, 32, 32))
y = np.arange(16) % 4
def step():
    probs, cache = forward(p, x, "train")
    backward(p, cache, cross_entropy(probs, y)[1])
step()
print(min(timeit.repeat(step, number=1, repeat={repeat})))
"""


def cases():
    rng = np.random.default_rng(0)
    xp = rng.normal(size=(16, 16, 18, 18))
    cols = _numpy.im2col(xp, 3, 3, 1, 16, 16)
    x = rng.normal(size=(16, 32, 32, 32))
    g = rng.normal(size=(16, 32, 16, 16))
    img = rng.uniform(size=(224, 224))
    ys, xs = (a.astype(float) * 0.73 + 0.3 for a in np.mgrid[0:224, 0:224])
    return {
        "im2col 16x16x16x16 k3": lambda k: k.im2col(xp, 3, 3, 1, 16, 16),
        "col2im 16x16x16x16 k3": lambda k: k.col2im(cols, xp.shape, 3, 3, 1, 16, 16),
        "avgpool fwd 16x32x32x32": lambda k: k.avgpool_forward(x, 2, 2, 2, 2, 16, 16),
        "avgpool bwd 16x32x32x32": lambda k: k.avgpool_backward(g, x.shape, 2, 2, 2, 2),
        "bilinear 224x224": lambda k: k.bilinear_sample(img, ys, xs),
    }


def best(fn, repeat):
    fn()  # warm-up; triggers numba compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def train_step(backend, repeat):
    env = dict(os.environ, RESDENS_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"{'case':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    rows = [(name, best(lambda: f(_numpy), args.repeat), best(lambda: f(_numba), args.repeat))
            for name, f in cases().items()]
    rows.append(("tiny train step, batch 16", train_step("numpy", args.repeat // 4 or 1),
                 train_step("numba", args.repeat // 4 or 1)))
    for name, a, b in rows:
        print(f"{name:<28}{a * 1e3:>10.3f}{b * 1e3:>10.3f}{a / b:>8.2f}x")


if __name__ == "__main__":
    main()
