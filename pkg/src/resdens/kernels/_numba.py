"""Numba-compiled kernels, loop-for-loop twins of ``_numpy.py``."""
import math

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


@_jit
def im2col(xp, kh, kw, stride, oh, ow):
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((c * kh * kw, n * oh * ow))
    for ci in range(c):
        for dy in range(kh):
            for dx in range(kw):
                row = (ci * kh + dy) * kw + dx
                for ni in range(n):
                    base = ni * oh * ow
                    for y in range(oh):
                        sy = y * stride + dy
                        for x in range(ow):
                            cols[row, base + y * ow + x] = xp[ni, ci, sy, x * stride + dx]
    return cols


@_jit
def col2im(cols, xp_shape, kh, kw, stride, oh, ow):
    n, c, hp, wp = xp_shape
    out = np.zeros((n, c, hp, wp))
    for dy in range(kh):
        for dx in range(kw):
            for ci in range(c):
                row = (ci * kh + dy) * kw + dx
                for ni in range(n):
                    base = ni * oh * ow
                    for y in range(oh):
                        sy = y * stride + dy
                        for x in range(ow):
                            out[ni, ci, sy, x * stride + dx] += cols[row, base + y * ow + x]
    return out


@_jit
def avgpool_forward(x, kh, kw, sh, sw, oh, ow):
    n, c = x.shape[0], x.shape[1]
    out = np.empty((n, c, oh, ow))
    area = kh * kw
    for ni in range(n):
        for ci in range(c):
            for y in range(oh):
                for xx in range(ow):
                    s = 0.0
                    for dy in range(kh):
                        for dx in range(kw):
                            s += x[ni, ci, y * sh + dy, xx * sw + dx]
                    out[ni, ci, y, xx] = s / area
    return out


@_jit
def avgpool_backward(g, in_shape, kh, kw, sh, sw):
    n, c, oh, ow = g.shape
    out = np.zeros(in_shape)
    area = kh * kw
    for dy in range(kh):
        for dx in range(kw):
            for ni in range(n):
                for ci in range(c):
                    for y in range(oh):
                        for xx in range(ow):
                            out[ni, ci, y * sh + dy, xx * sw + dx] += g[ni, ci, y, xx] / area
    return out


@_jit
def _pixel(img, y, x):
    if y < 0 or x < 0 or y >= img.shape[0] or x >= img.shape[1]:
        return 0.0
    return img[y, x]


@_jit
def _bilinear_flat(img, ys, xs, out):
    for i in range(ys.size):
        fy0 = math.floor(ys[i])
        fx0 = math.floor(xs[i])
        fy = ys[i] - fy0
        fx = xs[i] - fx0
        y0 = int(fy0)
        x0 = int(fx0)
        top = _pixel(img, y0, x0) * (1.0 - fx) + _pixel(img, y0, x0 + 1) * fx
        bot = _pixel(img, y0 + 1, x0) * (1.0 - fx) + _pixel(img, y0 + 1, x0 + 1) * fx
        out[i] = top * (1.0 - fy) + bot * fy


def bilinear_sample(img, ys, xs):
    out = np.empty(ys.size)
    _bilinear_flat(
        np.ascontiguousarray(img, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64).ravel(),
        np.ascontiguousarray(xs, dtype=np.float64).ravel(),
        out,
    )
    return out.reshape(ys.shape)
