"""Slow scalar reimplementations used as test oracles."""

import math

import numpy as np


def bilinear_oracle(img, new_h, new_w):
    """Scalar half-pixel bilinear interpolation, one output value at a time."""
    h, w, c = img.shape
    out = np.zeros((new_h, new_w, c), dtype=np.uint8)
    for i in range(new_h):
        sy = min(max((i + 0.5) * (h / new_h) - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(new_w):
            sx = min(max((j + 0.5) * (w / new_w) - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                top = img[y0, x0, ch] * (1 - fx) + img[y0, x1, ch] * fx
                bot = img[y1, x0, ch] * (1 - fx) + img[y1, x1, ch] * fx
                v = top * (1 - fy) + bot * fy
                out[i, j, ch] = min(255, max(0, math.floor(v + 0.5)))
    return out


def median_oracle(img, k):
    """Gather the reflect-101 window, sort, pick index k*k // 2."""
    h, w, c = img.shape
    r = k // 2

    def refl(i, n):
        if n == 1:
            return 0
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return i

    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                vals = sorted(
                    int(img[refl(y + dy, h), refl(x + dx, w), ch])
                    for dy in range(-r, r + 1)
                    for dx in range(-r, r + 1)
                )
                out[y, x, ch] = vals[(k * k) // 2]
    return out


def gamma_scalar(v, gamma):
    return min(255, max(0, math.floor(255.0 * (v / 255.0) ** gamma + 0.5)))


def od_oracle(img, delta_k):
    """Evaluate the contraction map per pixel and copy the floored source."""
    h, w, _ = img.shape
    cx, cy = w // 2, h // 2
    out = np.zeros_like(img)
    for v in range(h):
        for u in range(w):
            sx = math.floor((u - cx) * (1 + delta_k) + cx)
            sy = math.floor((v - cy) * (1 + delta_k) + cy)
            if 0 <= sx < w and 0 <= sy < h:
                out[v, u] = img[sy, sx]
    return out


def translate_oracle(img, dx, dy):
    h, w, _ = img.shape
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            sx = math.floor(x + dx * w)
            sy = math.floor(y + dy * h)
            if 0 <= sx < w and 0 <= sy < h:
                out[y, x] = img[sy, sx]
    return out


def rotate_oracle(img, degrees):
    h, w, _ = img.shape
    t = math.radians(degrees)
    cx, cy = w // 2, h // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            sx = math.floor((x - cx) * math.cos(t) + (y - cy) * math.sin(t) + cx)
            sy = math.floor(-(x - cx) * math.sin(t) + (y - cy) * math.cos(t) + cy)
            if 0 <= sx < w and 0 <= sy < h:
                out[y, x] = img[sy, sx]
    return out
