"""Truncated SVD, k-means and sign clustering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralEmbedding:
    vectors: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self) -> int:
        return self.singular_values.size


@dataclass(frozen=True)
class ClusterAssignment:
    """Labels in 1..K, numbered by order of first appearance."""

    labels: np.ndarray
    K: int
    objective: float
    seed: int | None
    method_tag: str
    trace: tuple[float, ...] = ()
    reseeds: int = 0
    empty_clusters: int = 0
    extra: dict = field(default_factory=dict)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs


def truncated_svd(A, k: int, check: bool = True) -> SpectralEmbedding:
    """Top-k left singular vectors and singular values of A.

    Eigendecomposes the smaller Gram matrix: A A' when A is wide, A'A
    otherwise. Each returned column has its largest-magnitude entry positive.
    """
    A = np.asarray(A, dtype=float)
    n, m = A.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k must be in [1, {min(n, m)}], got {k}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    wide = m > n
    G = A @ A.T if wide else A.T @ A
    try:
        evals, evecs = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed on a {G.shape[0]}x"
                               f"{G.shape[0]} Gram matrix: {exc}") from exc
    top = np.arange(evals.size - 1, evals.size - 1 - k, -1)
    sv = np.sqrt(np.clip(evals[top], 0.0, None))
    s1 = sv[0] if sv.size else 0.0
    # Gram eigenvalues carry absolute error ~ dim * eps * s1^2
    tol = 10 * np.sqrt(max(n, m) * np.finfo(float).eps) * s1
    if s1 == 0 or sv[-1] <= tol:
        raise RankError(f"requested {k} singular vectors but the numerical rank is "
                        f"{int(np.sum(sv > tol))}")
    if wide:
        U = evecs[:, top]
    else:
        U = (A @ evecs[:, top]) / sv
    U = _fix_signs(U)
    if check:
        resid = np.linalg.norm(A @ (A.T @ U) - U * sv**2, axis=0)
        if np.any(resid > 1e-6 * s1**2):
            raise ConvergenceError(f"eigen-residual {resid.max():.3g} exceeds 1e-6 * sigma_1^2")
    U.setflags(write=False)
    sv.setflags(write=False)
    return SpectralEmbedding(U, sv)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        i = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X: np.ndarray, C: np.ndarray, max_iter: int):
    K = C.shape[0]
    d = _sq_dists(X, C)
    labels = d.argmin(axis=1)
    trace = [float(d[np.arange(len(X)), labels].sum())]
    reseeds = 0
    for _ in range(max_iter):
        C = C.copy()
        counts = np.bincount(labels, minlength=K)
        for k in np.flatnonzero(counts):
            C[k] = X[labels == k].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed at the points worst served by their own centroid
            own = ((X - C[labels]) ** 2).sum(axis=1)
            far = np.argsort(-own, kind="stable")[:empty.size]
            C[empty] = X[far]
            reseeds += empty.size
        d = _sq_dists(X, C)
        new = d.argmin(axis=1)
        trace.append(float(d[np.arange(len(X)), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    else:
        logger.debug("Lloyd stopped at max_iter=%d before assignments settled", max_iter)
    return labels, C, trace, reseeds


def _first_appearance(labels: np.ndarray, K: int) -> np.ndarray:
    mapping = {}
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
    for k in range(K):
        if k not in mapping:
            mapping[k] = len(mapping) + 1
    return np.array([mapping[lab] for lab in labels], dtype=int)


def kmeans(points, K: int, restarts: int = 30, max_iter: int = 100,
           seed: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding; best objective over restarts.

    Restart r draws from the r-th child of ``SeedSequence(seed)``, so a run
    with more restarts extends, and never worsens, a run with fewer.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, n={n}], got {K}")
    if restarts < 1 or max_iter < 1:
        raise ValueError("restarts and max_iter must be positive")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels, C, trace, reseeds = _lloyd(X, _kmeanspp(X, K, rng), max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, C, trace, reseeds)
    labels, C, trace, reseeds = best
    empty = K - np.unique(labels).size
    return ClusterAssignment(_first_appearance(labels, K), K, trace[-1], seed, "kmeans",
                             tuple(trace), reseeds, empty)


def sign_cluster(xi) -> ClusterAssignment:
    """Label 1 where xi >= 0 and 2 where xi < 0."""
    xi = np.asarray(xi, dtype=float).ravel()
    labels = np.where(xi >= 0, 1, 2)
    return ClusterAssignment(labels, 2, float("nan"), None, "sign")
