"""Shared test oracles: naive reference implementations and finite differences.

The reference routines here are deliberately written as plain Python loops so
they cannot share a bug with the vectorized code under test.
"""

import numpy as np
import pytest

from gknet.seeding import seeded_rng


def naive_matmul(a, b):
    """Triple-loop matrix product for [m,k] x [k,n]."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def naive_conv2d(image, kernels, stride=1):
    """Loop convolution (cross-correlation) of [C,H,W] with [O,C,kh,kw]."""
    c, h, w = image.shape
    o, c2, kh, kw = kernels.shape
    assert c == c2
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((o, ho, wo), dtype=np.float64)
    for f in range(o):
        for y in range(ho):
            for x in range(wo):
                s = 0.0
                for ch in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            s += image[ch, y * stride + i, x * stride + j] * kernels[f, ch, i, j]
                out[f, y, x] = s
    return out


def naive_pad(image, pad):
    """Zero border of width pad around the two trailing axes of [C,H,W]."""
    c, h, w = image.shape
    out = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=image.dtype)
    out[:, pad:pad + h, pad:pad + w] = image
    return out


def naive_pool(image, window, stride, mode):
    """Loop max/avg pooling of [C,H,W]."""
    c, h, w = image.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    out = np.zeros((c, ho, wo), dtype=np.float64)
    for ch in range(c):
        for y in range(ho):
            for x in range(wo):
                patch = image[ch, y * stride:y * stride + window, x * stride:x * stride + window]
                vals = [patch[i, j] for i in range(window) for j in range(window)]
                out[ch, y, x] = max(vals) if mode == "max" else sum(vals) / len(vals)
    return out


def finite_difference(f, arr, h=1e-5):
    """Central-difference gradient of scalar f() with respect to arr, in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up = f()
        flat[i] = saved - h
        down = f()
        flat[i] = saved
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def assert_grad_close(analytic, numeric, tol=1e-4, label=""):
    """Relative error with denominator max(1, |numeric|) must stay under tol."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    worst = float(err.max()) if err.size else 0.0
    assert worst < tol, f"{label} max relative gradient error {worst:.3e} >= {tol:.0e}"


def spearman_rho(values):
    """Spearman rank correlation of values against their 1-based positions."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    order = np.argsort(v, kind="stable")
    svals = v[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and svals[j] == svals[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    return float(np.corrcoef(ranks, np.arange(1.0, n + 1.0))[0, 1])


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Small on-disk synthetic dataset shared by training and CLI tests."""
    from gknet.data import synth_dataset

    root = tmp_path_factory.mktemp("tiny") / "corpus"
    synth_dataset(root, train_per_class=12, val_per_class=6, classes=3,
                  resolution=16, seed=7)
    return root
