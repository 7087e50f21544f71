"""Shared synthetic data and brute-force oracles for the tests."""

from __future__ import annotations

import itertools
import math
import statistics

import numpy as np

from ifpca.vae import BLOCKS, VaeHyper, elbo_and_gradients, init_vae


def two_class(n=100, p=50, shift=3.0, s=10, seed=0):
    """Balanced two-class Gaussian data; the first s features carry a mean shift."""
    r = np.random.default_rng(seed)
    y = np.repeat([1, 2], [n - n // 2, n // 2])
    X = r.standard_normal((n, p))
    X[y == 2, :s] += shift
    return X, y


def brute_ks(z, cdf) -> float:
    """sqrt(n) max over every data point of |F_n - F| on both sides of its jump."""
    z = [float(v) for v in z]
    n = len(z)
    m, s = statistics.fmean(z), statistics.stdev(z)
    u = [(v - m) / s for v in z]
    best = 0.0
    for x in u:
        at = sum(1 for w in u if w <= x) / n
        below = sum(1 for w in u if w < x) / n
        f = float(cdf(x))
        best = max(best, abs(at - f), abs(below - f))
    return math.sqrt(n) * best


def brute_error(y_hat, y, K) -> int:
    return min(sum(perm[h - 1] != t for h, t in zip(y_hat, y))
               for perm in itertools.permutations(range(1, K + 1)))


def random_point(seed, p=4, d=3, hidden=8, scale=0.7):
    r = np.random.default_rng(seed)
    P = init_vae(p, VaeHyper(d=d, hidden=hidden, seed=seed))
    for k in BLOCKS:
        getattr(P, k)[...] = r.normal(0, scale, getattr(P, k).shape)
    return P, r.uniform(size=(6, p)), r.standard_normal((6, d))


def finite_difference(P, x, e, h=1e-5):
    out = {}
    for k in BLOCKS:
        A = getattr(P, k)
        g = np.zeros_like(A)
        for idx in np.ndindex(A.shape):
            old = A[idx]
            A[idx] = old + h
            up, _ = elbo_and_gradients(P, x, e)
            A[idx] = old - h
            down, _ = elbo_and_gradients(P, x, e)
            A[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[k] = g
    return out


def max_relative_error(analytic, numeric):
    den = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / den).max())
