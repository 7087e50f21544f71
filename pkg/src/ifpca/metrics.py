"""Clustering error, ARI, and cross-dataset regret/rank summaries."""

from __future__ import annotations

import csv
import functools
import io
import itertools
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .data import atomic_write_text

logger = logging.getLogger(__name__)

# beyond this many clusters the K! enumeration gives way to exact matching
ENUMERATION_MAX_K = 8


@dataclass(frozen=True)
class MetricsReport:
    error_count: int
    accuracy: float
    ari: float
    n: int
    permutation_used: dict = field(default_factory=dict)


def _check_labels(y_hat, y, K: int | None = None):
    a = np.asarray(y_hat)
    b = np.asarray(y)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"label vectors must be 1-d of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("empty label vectors")
    if K is not None:
        for name, v in (("y_hat", a), ("y", b)):
            if not np.issubdtype(v.dtype, np.integer) or v.min() < 1 or v.max() > K:
                raise ValueError(f"{name} labels must be integers in 1..{K}")
    return a, b


def confusion(y_hat, y, K: int) -> np.ndarray:
    """C[a, b] = #{i : y_hat_i = a + 1, y_i = b + 1}."""
    a, b = _check_labels(y_hat, y, K)
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (a - 1, b - 1), 1)
    return C


@functools.lru_cache(maxsize=None)
def _permutations(K: int) -> np.ndarray:
    """All K! permutations of range(K) as rows, lexicographic order (read-only)."""
    out = np.array(list(itertools.permutations(range(K))), dtype=np.intp).reshape(-1, K)
    out.setflags(write=False)
    return out


def clustering_error(y_hat, y, K: int) -> MetricsReport:
    """Mismatch count minimized over relabelings of the predicted clusters."""
    C = confusion(y_hat, y, K)
    n = int(C.sum())
    if K <= ENUMERATION_MAX_K:
        perms = _permutations(K)
        hits = C[np.arange(K), perms].sum(axis=1)
        k = int(np.argmax(hits))  # first maximum, in lexicographic order
        best, cols = int(hits[k]), perms[k]
    else:
        _, cols = linear_sum_assignment(-C)
        best = int(C[np.arange(K), cols].sum())
    errors = n - best
    mapping = {int(k) + 1: int(c) + 1 for k, c in enumerate(cols)}
    return MetricsReport(errors, best / n, ari(y_hat, y), n, mapping)


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return (x * (x - 1) / 2).sum()


def ari(y_hat, y) -> float:
    """Adjusted Rand index from the pair-counting contingency table."""
    a, b = _check_labels(y_hat, y)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    C = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(C, (ia, ib), 1)
    index = _comb2(C)
    sa = _comb2(C.sum(axis=1))
    sb = _comb2(C.sum(axis=0))
    total = _comb2([a.size])
    expected = sa * sb / total if total > 0 else 0.0
    max_index = (sa + sb) / 2
    denom = max_index - expected
    if denom == 0:
        # both partitions trivial (all singletons or one block)
        same = np.count_nonzero(C) == C.shape[0] == C.shape[1]
        return 1.0 if same else 0.0
    return float((index - expected) / denom)


@dataclass(frozen=True)
class LeaderboardReport:
    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    per_dataset_ranks: np.ndarray
    per_dataset_regrets: np.ndarray  # NaN on flagged datasets
    rank_mean: np.ndarray
    rank_sd: np.ndarray
    regret_mean: np.ndarray
    regret_sd: np.ndarray
    flagged_datasets: tuple[str, ...] = ()

    def footer_rows(self) -> list[tuple[str, np.ndarray]]:
        return [("Rank(mean)", self.rank_mean), ("Rank(SD)", self.rank_sd),
                ("Regret(mean)", self.regret_mean), ("Regret(SD)", self.regret_sd)]


def regret_and_rank(errors, methods: Sequence[str] | None = None,
                    datasets: Sequence[str] | None = None) -> LeaderboardReport:
    """Per-dataset regret (e - e_min) / (e_max - e_min) and tie-averaged ranks.

    ``errors`` is methods x datasets; lower is better. Datasets where every
    method ties are flagged and left out of the regret summaries, but still
    ranked (all methods share the middle rank).
    """
    E = np.asarray(errors, dtype=float)
    if E.ndim != 2 or E.shape[0] < 2 or E.shape[1] < 1:
        raise ValueError("need a methods x datasets table with at least 2 methods")
    if not np.all(np.isfinite(E)):
        raise ValueError("error table has non-finite entries")
    M, D = E.shape
    methods = tuple(methods) if methods is not None else tuple(f"m{i}" for i in range(M))
    datasets = tuple(datasets) if datasets is not None else tuple(f"d{j}" for j in range(D))
    if len(methods) != M or len(datasets) != D:
        raise ValueError("method/dataset names do not match the table shape")

    ranks = rankdata(E, method="average", axis=0)
    emin, emax = E.min(axis=0), E.max(axis=0)
    spread = emax - emin
    flat = spread == 0
    regrets = np.full_like(E, np.nan)
    ok = ~flat
    regrets[:, ok] = (E[:, ok] - emin[ok]) / spread[ok]
    flagged = tuple(d for d, f in zip(datasets, flat) if f)
    if flagged:
        logger.warning("regret undefined (all methods tie) on: %s", ", ".join(flagged))

    def sd(a):
        return a.std(axis=1, ddof=1) if a.shape[1] > 1 else np.full(a.shape[0], np.nan)

    R = regrets[:, ok]
    return LeaderboardReport(
        methods, datasets, ranks, regrets,
        ranks.mean(axis=1), sd(ranks),
        R.mean(axis=1) if R.shape[1] else np.full(M, np.nan), sd(R),
        flagged,
    )


def read_error_table(path: str | os.PathLike):
    """Leaderboard CSV: header ``method,<dataset>,...``; one row per method."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 3:
        raise ValueError("leaderboard table needs a header and at least two methods")
    datasets = [c.strip() for c in rows[0][1:]]
    methods, values = [], []
    for r in rows[1:]:
        if len(r) != len(datasets) + 1:
            raise ValueError(f"row for {r[0]!r} has {len(r) - 1} values, expected {len(datasets)}")
        methods.append(r[0].strip())
        values.append([float(c) for c in r[1:]])
    return np.array(values), methods, datasets


def format_footer_csv(report: LeaderboardReport, digits: int = 3) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["statistic", *report.methods])
    for name, vals in report.footer_rows():
        w.writerow([name, *(("nan" if np.isnan(v) else f"{v:.{digits}f}") for v in vals)])
    return buf.getvalue()


def write_footer_csv(report: LeaderboardReport, path: str | os.PathLike, digits: int = 3) -> None:
    atomic_write_text(path, format_footer_csv(report, digits))
