"""Pure-numpy reference kernels.

Every kernel here has a twin in ``_numba.py`` that performs the same floating
point operations in the same order, so both backends are bit-identical.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, kh, kw, stride, oh, ow):
    """Unfold padded input (N, C, Hp, Wp) into columns (C*kh*kw, N*oh*ow)."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (oh - 1) + 1 : stride, : stride * (ow - 1) + 1 : stride]
    # (N, C, oh, ow, kh, kw) -> (C, kh, kw, N, oh, ow)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * oh * ow)


def col2im(cols, xp_shape, kh, kw, stride, oh, ow):
    """Scatter-add columns back onto a padded input of shape ``xp_shape``."""
    n, c, hp, wp = xp_shape
    out = np.zeros(xp_shape)
    cols6 = cols.reshape(c, kh, kw, n, oh, ow).transpose(3, 0, 1, 2, 4, 5)
    ys = stride * (oh - 1) + 1
    xs = stride * (ow - 1) + 1
    for dy in range(kh):
        for dx in range(kw):
            out[:, :, dy : dy + ys : stride, dx : dx + xs : stride] += cols6[:, :, dy, dx]
    return out


def avgpool_forward(x, kh, kw, sh, sw, oh, ow):
    acc = np.zeros(x.shape[:2] + (oh, ow))
    for dy in range(kh):
        for dx in range(kw):
            acc += x[:, :, dy : dy + sh * (oh - 1) + 1 : sh, dx : dx + sw * (ow - 1) + 1 : sw]
    return acc / (kh * kw)


def avgpool_backward(g, in_shape, kh, kw, sh, sw):
    oh, ow = g.shape[2:]
    out = np.zeros(in_shape)
    share = g / (kh * kw)
    for dy in range(kh):
        for dx in range(kw):
            out[:, :, dy : dy + sh * (oh - 1) + 1 : sh, dx : dx + sw * (ow - 1) + 1 : sw] += share
    return out


def bilinear_sample(img, ys, xs):
    """Bilinear samples of a 2-D image at float coordinates; pixels outside are 0."""
    h, w = img.shape
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = img
    # indices shifted by the 1-pixel zero border, clipped to stay in the border
    yi = np.clip(y0 + 1, 0, h + 1)
    xi = np.clip(x0 + 1, 0, w + 1)
    yj = np.clip(y0 + 2, 0, h + 1)
    xj = np.clip(x0 + 2, 0, w + 1)
    v00 = padded[yi, xi]
    v01 = padded[yi, xj]
    v10 = padded[yj, xi]
    v11 = padded[yj, xj]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy
