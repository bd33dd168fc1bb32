"""Independent reference implementations used as test oracles.

Nothing here imports the package's numeric code: loops are written straight
from the operation definitions.
"""
import math

import numpy as np


def conv2d_loop(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, oh, ow))
    for ni in range(n):
        for co in range(cout):
            for y in range(oh):
                for xx in range(ow):
                    s = b[co]
                    for ci in range(cin):
                        for dy in range(kh):
                            for dx in range(kw):
                                iy = y * stride - pad + dy
                                ix = xx * stride - pad + dx
                                if 0 <= iy < h and 0 <= ix < wd:
                                    s += x[ni, ci, iy, ix] * w[co, ci, dy, dx]
                    out[ni, co, y, xx] = s
    return out


def avgpool_loop(x, window, stride):
    n, c, h, w = x.shape
    kh, kw = window
    sh, sw = stride
    oh, ow = (h - kh) // sh + 1, (w - kw) // sw + 1
    out = np.zeros((n, c, oh, ow))
    for ni in range(n):
        for ci in range(c):
            for y in range(oh):
                for xx in range(ow):
                    vals = [x[ni, ci, y * sh + dy, xx * sw + dx] for dy in range(kh) for dx in range(kw)]
                    out[ni, ci, y, xx] = math.fsum(vals) / len(vals)
    return out


def affine_loop(x, w, b):
    n, d = x.shape
    m = w.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = b[j] + math.fsum(x[i, k] * w[k, j] for k in range(d))
    return out


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``x``."""
    g = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def rel_err(a, n):
    a, n = np.asarray(a), np.asarray(n)
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))))


def reference_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written out step by step."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
    return theta


def bilinear_point(img, y, x):
    """Bilinear value at (y, x) with zero outside, from the textbook formula."""
    h, w = img.shape

    def px(i, j):
        return img[i, j] if 0 <= i < h and 0 <= j < w else 0.0

    y0, x0 = math.floor(y), math.floor(x)
    fy, fx = y - y0, x - x0
    return ((1 - fy) * (1 - fx) * px(y0, x0) + (1 - fy) * fx * px(y0, x0 + 1)
            + fy * (1 - fx) * px(y0 + 1, x0) + fy * fx * px(y0 + 1, x0 + 1))
