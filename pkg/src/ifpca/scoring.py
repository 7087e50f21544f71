"""Per-feature marginal test scores for the IF-step.

KS scores compare the empirical CDF of each studentized column against the
CDF of a studentized standard-normal draw. That CDF is estimated by seeded
Monte Carlo and cached on disk (see :func:`get_null_table`).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import DataMatrix, NormalizedMatrix, atomic_write_text

logger = logging.getLogger(__name__)

KINDS = ("studentized_value", "ks_score")
PVALUE_MODES = ("literal", "null_score")
DEFAULT_B = 100_000
CACHE_ENV = "IFPCA_NULL_CACHE"

# samples per chunk when simulating null KS scores; bounds peak memory
_CHUNK = 4096


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class NullCdfTable:
    """Sorted Monte Carlo draws defining F(t) = #{draws <= t} / B."""

    n: int
    B: int
    seed: int
    kind: str
    draws: np.ndarray

    def __post_init__(self):
        d = np.array(self.draws, dtype=float, copy=True)
        if d.shape != (self.B,):
            raise ValueError(f"expected {self.B} draws, got {d.shape}")
        if np.any(np.diff(d) < 0):
            raise ValueError("draws must be sorted ascending")
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)

    def cdf(self, t) -> np.ndarray:
        return np.searchsorted(self.draws, t, side="right") / self.B

    __call__ = cdf

    @property
    def key(self) -> str:
        return f"n{self.n}_B{self.B}_seed{self.seed}_{self.kind}"

    def save(self, path: str | os.PathLike) -> None:
        body = "\n".join(repr(float(x)) for x in self.draws)
        atomic_write_text(path, f"{self.n},{self.B},{self.seed},{self.kind}\n{body}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NullCdfTable":
        with open(path) as fh:
            head = fh.readline().strip().split(",")
            n, B, seed, kind = int(head[0]), int(head[1]), int(head[2]), head[3]
            draws = np.loadtxt(fh, dtype=float, ndmin=1)
        return cls(n, B, seed, kind, draws)


def studentize(z: np.ndarray, axis: int = 0) -> np.ndarray:
    """(z - mean) / sample sd along ``axis``."""
    z = np.asarray(z, dtype=float)
    mean = z.mean(axis=axis, keepdims=True)
    sd = z.std(axis=axis, ddof=1, keepdims=True)
    if np.any(sd == 0):
        raise DegenerateInputError("zero sample standard deviation")
    return (z - mean) / sd


def _ks_columns(Z: np.ndarray, cdf: Callable, studentized: bool = False) -> np.ndarray:
    # sup |F_n - F| over both sides of each jump: i/n - F(u_(i)) and F(u_(i)) - (i-1)/n
    U = Z if studentized else studentize(Z, axis=0)
    n = U.shape[0]
    Fu = np.asarray(cdf(np.sort(U, axis=0)), dtype=float)
    i = np.arange(1, n + 1, dtype=float)[:, None]
    upper = (i / n - Fu).max(axis=0)
    lower = (Fu - (i - 1) / n).max(axis=0)
    return np.sqrt(n) * np.maximum(upper, lower)


def ks_score(z, null_cdf: Callable) -> float:
    """sqrt(n) * sup_t |F_n(t) - F(t)| for the studentized sample ``z``."""
    z = np.asarray(z, dtype=float).ravel()
    if z.size < 3:
        raise DegenerateInputError("ks_score needs n >= 3")
    return float(_ks_columns(z[:, None], null_cdf)[0])


def ks_scores(W: np.ndarray | NormalizedMatrix, null_cdf: Callable) -> np.ndarray:
    """Vectorized :func:`ks_score` over the columns of ``W``."""
    v = W.values if isinstance(W, (DataMatrix, NormalizedMatrix)) else np.asarray(W, float)
    if v.shape[0] < 3:
        raise DegenerateInputError("ks_score needs n >= 3")
    return _ks_columns(v, null_cdf)


def build_null_cdf(n: int, B: int = DEFAULT_B, seed: int = 0,
                   kind: str = "studentized_value") -> NullCdfTable:
    """Simulate a null table; bit-identical for identical (n, B, seed, kind).

    ``studentized_value`` pools studentized values of ceil(B/n) normal samples
    of size n. ``ks_score`` draws B KS scores of fresh normal samples, each
    scored against the ``studentized_value`` table with the same (n, B, seed).
    """
    if n < 3:
        raise ValueError("null table needs n >= 3")
    if B < 10_000:
        raise ValueError("null table needs B >= 10^4")
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    value_ss, score_ss = np.random.SeedSequence(seed).spawn(2)

    rng = np.random.default_rng(value_ss)
    reps = -(-B // n)
    vals = studentize(rng.standard_normal((n, reps)), axis=0).T.ravel()[:B]
    values = NullCdfTable(n, B, seed, "studentized_value", np.sort(vals))
    if kind == "studentized_value":
        return values

    rng = np.random.default_rng(score_ss)
    out = np.empty(B)
    for start in range(0, B, _CHUNK):
        m = min(_CHUNK, B - start)
        out[start:start + m] = _ks_columns(rng.standard_normal((n, m)), values.cdf)
    return NullCdfTable(n, B, seed, "ks_score", np.sort(out))


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "ifpca"))


def get_null_table(n: int, B: int = DEFAULT_B, seed: int = 0,
                   kind: str = "studentized_value", use_cache: bool = True) -> NullCdfTable:
    """Load the (n, B, seed, kind) table from the cache, building it if absent."""
    path = cache_dir() / f"null_n{n}_B{B}_seed{seed}_{kind}.csv"
    if use_cache and path.exists():
        try:
            table = NullCdfTable.load(path)
            if (table.n, table.B, table.seed, table.kind) == (n, B, seed, kind):
                return table
        except (OSError, ValueError, IndexError):
            logger.warning("ignoring unreadable null table cache %s", path)
    logger.info("building null table n=%d B=%d seed=%d kind=%s", n, B, seed, kind)
    table = build_null_cdf(n, B, seed, kind)
    if use_cache:
        try:
            table.save(path)
        except OSError as exc:
            logger.warning("could not cache null table at %s: %s", path, exc)
    return table


def efron_standardize(raw_scores) -> tuple[float, float, np.ndarray]:
    """Center and scale scores by their own empirical mean and sample sd."""
    s = np.asarray(raw_scores, dtype=float)
    if s.size < 2:
        raise DegenerateInputError("need at least two scores")
    mu = float(s.mean())
    sigma = float(s.std(ddof=1))
    if sigma == 0:
        raise DegenerateInputError("all scores are equal")
    return mu, sigma, (s - mu) / sigma


def ks_pvalues(standardized, null_table: NullCdfTable, mode: str = "null_score") -> np.ndarray:
    """Upper-tail p-values 1 - F(psi*) of standardized KS scores.

    ``literal`` evaluates the studentized-value CDF at psi*; ``null_score``
    compares psi* against Efron-standardized simulated null KS scores.
    """
    expected = {"literal": "studentized_value", "null_score": "ks_score"}
    if mode not in expected:
        raise ValueError(f"unknown p-value mode {mode!r}")
    if null_table.kind != expected[mode]:
        raise ValueError(f"mode {mode!r} needs a {expected[mode]!r} table, "
                         f"got {null_table.kind!r}")
    psi = np.asarray(standardized, dtype=float)
    if mode == "literal":
        return 1.0 - null_table.cdf(psi)
    d = null_table.draws
    ref = (d - d.mean()) / d.std(ddof=1)
    return 1.0 - np.searchsorted(ref, psi, side="right") / null_table.B


@dataclass(frozen=True)
class KsScoreSet:
    raw_scores: np.ndarray
    mu_star: float
    sigma_star: float
    standardized: np.ndarray
    pvalues: np.ndarray
    null_table_ref: str
    mode: str


def score_features(W: NormalizedMatrix | np.ndarray, B: int = DEFAULT_B, seed: int = 0,
                   mode: str = "null_score", use_cache: bool = True) -> KsScoreSet:
    """KS scores, Efron correction and p-values for every column of W."""
    v = W.values if isinstance(W, NormalizedMatrix) else np.asarray(W, float)
    n = v.shape[0]
    values = get_null_table(n, B, seed, "studentized_value", use_cache)
    raw = ks_scores(v, values.cdf)
    mu, sigma, psi = efron_standardize(raw)
    table = values if mode == "literal" else get_null_table(n, B, seed, "ks_score", use_cache)
    pv = ks_pvalues(psi, table, mode)
    return KsScoreSet(raw, mu, sigma, psi, pv, table.key, mode)


@dataclass(frozen=True)
class ChiSquareScores:
    scores: np.ndarray
    n: int


def chi_square_scores(X: DataMatrix | np.ndarray) -> ChiSquareScores:
    """(||x_j||^2 - n) / sqrt(2n) for each column."""
    v = X.values if isinstance(X, DataMatrix) else np.asarray(X, float)
    n = v.shape[0]
    if n < 1:
        raise ValueError("need n >= 1")
    return ChiSquareScores((np.einsum("ij,ij->j", v, v) - n) / np.sqrt(2 * n), n)
