"""Slow, independent reference implementations used as test oracles."""

import math

import numpy as np


def ssim_loop(a, b, data_range=1.0, size=11, sigma=1.5):
    """Per-window SSIM written from the definition (no separable filtering)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    x = np.arange(size) - (size - 1) / 2
    g1 = np.array([math.exp(-(v * v) / (2 * sigma * sigma)) for v in x])
    g = np.outer(g1, g1)
    g /= g.sum()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    h, w, ch = a.shape
    per_channel = []
    for c in range(ch):
        vals = []
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                pa = a[i:i + size, j:j + size, c]
                pb = b[i:i + size, j:j + size, c]
                ma, mb = (g * pa).sum(), (g * pb).sum()
                va = (g * (pa - ma) ** 2).sum()
                vb = (g * (pb - mb) ** 2).sum()
                cov = (g * (pa - ma) * (pb - mb)).sum()
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                            / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
        per_channel.append(sum(vals) / len(vals))
    return sum(per_channel) / len(per_channel)


def mse_loop(a, b):
    fa, fb = np.ravel(a), np.ravel(b)
    return sum((float(x) - float(y)) ** 2 for x, y in zip(fa, fb)) / len(fa)


def psnr_loop(a, b, peak=1.0):
    return 10 * math.log10(peak * peak / mse_loop(a, b))


def l1_loop(a, b):
    fa, fb = np.ravel(a), np.ravel(b)
    return sum(abs(float(x) - float(y)) for x, y in zip(fa, fb)) / len(fa)


def bce_loop(pred, target, eps=1e-7):
    total = 0.0
    fp, ft = np.ravel(pred), np.ravel(target)
    for p, t in zip(fp, ft):
        p = min(max(float(p), eps), 1 - eps)
        total += -(t * math.log(p) + (1 - t) * math.log(1 - p))
    return total / len(fp)


def ralsgan_scalar(real, fake):
    """Relativistic average LS losses with the signs of the published objective."""
    real, fake = np.ravel(real).astype(float), np.ravel(fake).astype(float)
    mr, mf = real.mean(), fake.mean()
    d_rf = [r - mf for r in real]
    d_fr = [f - mr for f in fake]
    l_gen = -sum(d * d for d in d_rf) / len(d_rf) - sum((1 - d) ** 2 for d in d_fr) / len(d_fr)
    l_disc = -sum((1 - d) ** 2 for d in d_rf) / len(d_rf) - sum(d * d for d in d_fr) / len(d_fr)
    return l_gen, l_disc


def gram_loop(f, spatial_norm=True):
    """``f`` is C x H x W."""
    c, h, w = f.shape
    g = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            g[i, j] = sum(f[i, y, x] * f[j, y, x] for y in range(h) for x in range(w))
    return g / (h * w) if spatial_norm else g


def perceptual_loop(stack_a, stack_b):
    total = 0.0
    for fa, fb in zip(stack_a, stack_b):
        n, c, h, w = fa.shape
        per = [math.sqrt(sum(float(v) ** 2 for v in np.ravel(fa[k] - fb[k]))) / (c * h * w) for k in range(n)]
        total += sum(per) / n
    return total


def style_loop(stack_a, stack_b, spatial_norm=True):
    total = 0.0
    for fa, fb in zip(stack_a, stack_b):
        n, c = fa.shape[:2]
        per = []
        for k in range(n):
            d = gram_loop(fa[k], spatial_norm) - gram_loop(fb[k], spatial_norm)
            per.append(sum(abs(v) for v in np.ravel(d)) / (c * c))
        total += sum(per) / n
    return total


def central_difference(f, x, h=1e-6):
    """Numerical gradient of scalar ``f`` at float64 array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def inverse_warp_mask(alpha, matrix, height, width, threshold=0.5):
    """Rasterize ``alpha >= threshold`` of a warped template pixel by pixel."""
    a = np.asarray(matrix, float)
    inv = np.linalg.inv(a[:, :2])
    th, tw = alpha.shape
    out = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            u = inv[0, 0] * (x - a[0, 2]) + inv[0, 1] * (y - a[1, 2])
            v = inv[1, 0] * (x - a[0, 2]) + inv[1, 1] * (y - a[1, 2])
            u0, v0 = math.floor(u), math.floor(v)
            fu, fv = u - u0, v - v0
            acc = 0.0
            for dv, du, wgt in ((0, 0, (1 - fu) * (1 - fv)), (0, 1, fu * (1 - fv)),
                                (1, 0, (1 - fu) * fv), (1, 1, fu * fv)):
                yy, xx = v0 + dv, u0 + du
                if 0 <= yy < th and 0 <= xx < tw:
                    acc += wgt * alpha[yy, xx]
            out[y, x] = 1.0 if acc >= threshold else 0.0
    return out
