"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def naive_conv2d(x, w, dilation=1):
    """Quadruple loop cross-correlation with explicit zero padding."""
    b, c, h, wd = x.shape
    o, _, k, _ = w.shape
    pad = dilation * (k - 1) // 2
    out = np.zeros((b, o, h, wd))
    for n in range(b):
        for oc in range(o):
            for i in range(h):
                for j in range(wd):
                    acc = 0.0
                    for ic in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                y = i + ky * dilation - pad
                                xx = j + kx * dilation - pad
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += x[n, ic, y, xx] * w[oc, ic, ky, kx]
                    out[n, oc, i, j] = acc
    return out


def naive_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, peak=1.0):
    """Window-by-window SSIM with two-pass weighted moments."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            pa, pb = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            ma, mb = np.sum(win * pa), np.sum(win * pb)
            va = np.sum(win * (pa - ma) ** 2)
            vb = np.sum(win * (pb - mb) ** 2)
            cov = np.sum(win * (pa - ma) * (pb - mb))
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def _catmull_rom(t):
    t = abs(t)
    a = -0.5
    if t <= 1:
        return (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
    if t < 2:
        return a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
    return 0.0


def naive_bicubic(img, out_w, out_h):
    """Direct 4x4-neighbourhood evaluation per output pixel, edge clamped."""
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        sy = (i + 0.5) * h / out_h - 0.5
        y0 = math.floor(sy)
        for j in range(out_w):
            sx = (j + 0.5) * w / out_w - 0.5
            x0 = math.floor(sx)
            acc = 0.0
            for dy in range(-1, 3):
                for dx in range(-1, 3):
                    yy = min(max(y0 + dy, 0), h - 1)
                    xx = min(max(x0 + dx, 0), w - 1)
                    acc += _catmull_rom(sy - (y0 + dy)) * _catmull_rom(sx - (x0 + dx)) * img[yy, xx]
            out[i, j] = acc
    return np.clip(out, 0, 1)
