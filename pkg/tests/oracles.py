"""Straight-line reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def gaussian_kernel_oracle(size, sigma):
    c = (size - 1) / 2
    k = [[math.exp(-((i - c) ** 2 + (j - c) ** 2) / (2 * sigma * sigma)) for j in range(size)] for i in range(size)]
    total = math.fsum(v for row in k for v in row)
    return np.array([[v / total for v in row] for row in k])


def median_oracle(a, size):
    """Per-window full sort with edge replication, one pixel at a time."""
    r = size // 2
    h, w, ch = a.shape
    p = np.pad(a, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.empty_like(a)
    for c in range(ch):
        for i in range(h):
            for j in range(w):
                window = sorted(p[i : i + size, j : j + size, c].ravel().tolist())
                out[i, j, c] = window[len(window) // 2]
    return out


def convolve2d_oracle(a, kernel):
    """Direct (non-separable) 2-D correlation with edge replication."""
    size = kernel.shape[0]
    r = size // 2
    h, w, _ = a.shape
    p = np.pad(a, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(a)
    for di in range(size):
        for dj in range(size):
            out += kernel[di, dj] * p[di : di + h, dj : dj + w]
    return out


def l1_projection_oracle(delta, beta):
    """Enumerate every face of the l1 ball and keep the nearest feasible point.

    For a sign pattern s in {-1, 0, 1}^n the face is {z : s.z = beta, z_i = 0
    where s_i = 0, s_i z_i >= 0}; the Euclidean projection of delta onto its
    affine hull is closed form, and it is on the face when the sign
    constraints hold. The ball interior contributes delta itself.
    """
    if np.abs(delta).sum() <= beta:
        return delta.copy()
    best, best_d = None, math.inf
    for s in itertools.product((-1.0, 0.0, 1.0), repeat=delta.size):
        s = np.array(s)
        support = s != 0
        if not support.any():
            continue
        z = np.zeros_like(delta)
        shift = (s[support] @ delta[support] - beta) / support.sum()
        z[support] = delta[support] - shift * s[support]
        if np.any(s[support] * z[support] < -1e-12):
            continue
        d = np.sum((z - delta) ** 2)
        if d < best_d:
            best, best_d = z, d
    return best
