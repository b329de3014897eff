"""Hot pixel loops, in two interchangeable flavours.

Every kernel exists as a numba ``@njit`` loop and as a vectorised numpy
function computing the same arithmetic in the same order, so the two are
bit-identical. The numba flavour is used unless numba is missing or the
environment sets ``SWEEPKIT_DISABLE_NUMBA=1``. ``benchmarks/bench_kernels.py``
times both.

Pixel kernels take and return ``(H, W, C)`` uint8 arrays; the optimizer
kernel updates float64 arrays in place.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_DISABLED = os.environ.get("SWEEPKIT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}
USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def reflect101_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer indices into ``[0, n)`` by mirroring without repeating the edge."""
    idx = np.asarray(idx, dtype=np.int64)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


# ----------------------------------------------------------------------------
# numpy flavour


def median_numpy(img: np.ndarray, k: int) -> np.ndarray:
    h, w, _ = img.shape
    r = k // 2
    rows = reflect101_index(np.arange(-r, h + r), h)
    cols = reflect101_index(np.arange(-r, w + r), w)
    padded = img[rows][:, cols]
    win = sliding_window_view(padded, (k, k), axis=(0, 1))
    flat = win.reshape(h, w, img.shape[2], k * k)
    mid = (k * k) // 2
    return np.partition(flat, mid, axis=-1)[..., mid].astype(np.uint8)


def bilinear_numpy(img, y0, y1, wy, x0, x1, wx):
    src = img.astype(np.float64)
    p00 = src[y0][:, x0]
    p01 = src[y0][:, x1]
    p10 = src[y1][:, x0]
    p11 = src[y1][:, x1]
    wxb = wx[None, :, None]
    wyb = wy[:, None, None]
    top = (1.0 - wxb) * p00 + wxb * p01
    bot = (1.0 - wxb) * p10 + wxb * p11
    val = (1.0 - wyb) * top + wyb * bot
    val = np.floor(val + 0.5)
    return np.clip(val, 0.0, 255.0).astype(np.uint8)


def gather_numpy(img, src_r, src_c):
    h, w, c = img.shape
    ok = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.zeros(src_r.shape + (c,), dtype=np.uint8)
    out[ok] = img[src_r[ok], src_c[ok]]
    return out


def adadelta_numpy(p, g, acc_g, acc_d, rho, eps, lr):
    acc_g *= rho
    acc_g += (1.0 - rho) * g * g
    step = -np.sqrt(acc_d + eps) / np.sqrt(acc_g + eps) * g
    acc_d *= rho
    acc_d += (1.0 - rho) * step * step
    p += lr * step


# ----------------------------------------------------------------------------
# numba flavour

if HAVE_NUMBA:

    @njit(cache=True)
    def _reflect101_scalar(i, n):
        if n == 1:
            return 0
        period = 2 * n - 2
        i = abs(i) % period
        if i >= n:
            i = period - i
        return i

    @njit(cache=True)
    def median_numba(img, k):
        # sliding 256-bin histogram per row; median = first level whose
        # cumulative count exceeds k*k // 2
        h, w, c = img.shape
        r = k // 2
        mid = (k * k) // 2
        rows = np.empty(h + 2 * r, dtype=np.int64)
        cols = np.empty(w + 2 * r, dtype=np.int64)
        for i in range(h + 2 * r):
            rows[i] = _reflect101_scalar(i - r, h)
        for i in range(w + 2 * r):
            cols[i] = _reflect101_scalar(i - r, w)
        out = np.empty_like(img)
        hist = np.zeros(256, dtype=np.int32)
        plane = np.empty((h + 2 * r, w + 2 * r), dtype=np.uint8)
        for ch in range(c):
            for i in range(h + 2 * r):
                for j in range(w + 2 * r):
                    plane[i, j] = img[rows[i], cols[j], ch]
            for y in range(h):
                hist[:] = 0
                for dy in range(k):
                    for dx in range(k):
                        hist[plane[y + dy, dx]] += 1
                for x in range(w):
                    if x > 0:
                        for dy in range(k):
                            hist[plane[y + dy, x - 1]] -= 1
                            hist[plane[y + dy, x + k - 1]] += 1
                    cnt = 0
                    v = 0
                    while True:
                        cnt += hist[v]
                        if cnt > mid:
                            break
                        v += 1
                    out[y, x, ch] = v
        return out

    @njit(cache=True)
    def bilinear_numba(img, y0, y1, wy, x0, x1, wx):
        c = img.shape[2]
        nh = y0.shape[0]
        nw = x0.shape[0]
        out = np.empty((nh, nw, c), dtype=np.uint8)
        for i in range(nh):
            fy = wy[i]
            for j in range(nw):
                fx = wx[j]
                for ch in range(c):
                    p00 = np.float64(img[y0[i], x0[j], ch])
                    p01 = np.float64(img[y0[i], x1[j], ch])
                    p10 = np.float64(img[y1[i], x0[j], ch])
                    p11 = np.float64(img[y1[i], x1[j], ch])
                    top = (1.0 - fx) * p00 + fx * p01
                    bot = (1.0 - fx) * p10 + fx * p11
                    val = np.floor((1.0 - fy) * top + fy * bot + 0.5)
                    if val < 0.0:
                        val = 0.0
                    elif val > 255.0:
                        val = 255.0
                    out[i, j, ch] = np.uint8(val)
        return out

    @njit(cache=True)
    def gather_numba(img, src_r, src_c):
        h, w, c = img.shape
        oh, ow = src_r.shape
        out = np.zeros((oh, ow, c), dtype=np.uint8)
        for i in range(oh):
            for j in range(ow):
                r = src_r[i, j]
                s = src_c[i, j]
                if r >= 0 and r < h and s >= 0 and s < w:
                    for ch in range(c):
                        out[i, j, ch] = img[r, s, ch]
        return out

    @njit(cache=True)
    def _adadelta_flat(p, g, acc_g, acc_d, rho, eps, lr):
        for i in range(p.shape[0]):
            gi = g[i]
            eg = acc_g[i] * rho + (1.0 - rho) * gi * gi
            step = -np.sqrt(acc_d[i] + eps) / np.sqrt(eg + eps) * gi
            acc_g[i] = eg
            acc_d[i] = acc_d[i] * rho + (1.0 - rho) * step * step
            p[i] += lr * step

    def adadelta_numba(p, g, acc_g, acc_d, rho, eps, lr):
        _adadelta_flat(p.reshape(-1), g.reshape(-1), acc_g.reshape(-1), acc_d.reshape(-1), rho, eps, lr)

else:  # pragma: no cover
    median_numba = bilinear_numba = gather_numba = adadelta_numba = None


if USE_NUMBA:
    median = median_numba
    bilinear = bilinear_numba
    gather = gather_numba
    adadelta = adadelta_numba
else:
    median = median_numpy
    bilinear = bilinear_numpy
    gather = gather_numpy
    adadelta = adadelta_numpy
