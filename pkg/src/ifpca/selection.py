"""Turning p-values or scores into a retained feature set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .scoring import ChiSquareScores

logger = logging.getLogger(__name__)

HC_VARIANTS = ("printed", "standard")


@dataclass(frozen=True)
class SelectionResult:
    sorted_pvalues: np.ndarray
    hc_curve: np.ndarray
    j_hat: int | None  # 1-based rank in the sorted p-values
    threshold: float
    retained: np.ndarray
    fallback_used: bool


@dataclass(frozen=True)
class FeatureSet:
    indices: np.ndarray
    origin: str
    empty: bool = False

    def __len__(self) -> int:
        return int(self.indices.size)


def hc_curve(sorted_pvalues: np.ndarray, n: int, variant: str = "printed") -> np.ndarray:
    """HC_{p,j} for j = 1..p.

    ``printed``: sqrt(p)(j/p - pi_(j)) / sqrt(max{sqrt(n)(j/p - pi_(j)), 0} + j/p).
    ``standard``: same numerator over sqrt(j/p (1 - j/p)).
    """
    ps = np.asarray(sorted_pvalues, dtype=float)
    p = ps.size
    frac = np.arange(1, p + 1) / p
    diff = frac - ps
    if variant == "printed":
        denom = np.sqrt(np.maximum(np.sqrt(n) * diff, 0.0) + frac)
    elif variant == "standard":
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = np.sqrt(frac * (1.0 - frac))
    else:
        raise ValueError(f"unknown HC variant {variant!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(p) * diff / denom


def hct(pvalues, n: int, variant: str = "printed") -> SelectionResult:
    """Higher Criticism threshold and the features it retains.

    The argmax runs over sorted ranks j with pi_(j) > log(p)/p and j < p/2;
    ties go to the smallest j. When that set is empty, or HC is nowhere
    positive on it, only the single smallest-p-value feature is kept.
    """
    pv = np.asarray(pvalues, dtype=float)
    p = pv.size
    if p < 2:
        raise ValueError("hct needs p >= 2")
    if np.any(np.isnan(pv)) or np.any((pv < 0) | (pv > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(pv, kind="stable")
    ps = pv[order]
    curve = hc_curve(ps, n, variant)
    j = np.arange(1, p + 1)
    feasible = (ps > math.log(p) / p) & (j < p / 2)
    cand = np.where(feasible, curve, -np.inf)
    k = int(np.argmax(cand))
    if feasible.any() and cand[k] > 0:
        threshold = float(ps[k])
        return SelectionResult(ps, curve, k + 1, threshold,
                               np.flatnonzero(pv <= threshold), False)
    logger.info("no usable HC maximum (p=%d); keeping the smallest p-value", p)
    return SelectionResult(ps, curve, None, float(ps[0]), order[:1].copy(), True)


def fixed_threshold_select(chi2: ChiSquareScores | np.ndarray, p: int | None = None) -> FeatureSet:
    """Keep features with score >= sqrt(2 log p)."""
    s = chi2.scores if isinstance(chi2, ChiSquareScores) else np.asarray(chi2, float)
    p = s.size if p is None else p
    t = math.sqrt(2 * math.log(p))
    idx = np.flatnonzero(s >= t)
    return FeatureSet(idx, "fixed_chi2", empty=idx.size == 0)


def top_m_select(scores, m: int) -> FeatureSet:
    """Indices of the m largest scores (ties to the smaller index), sorted."""
    s = np.asarray(scores, dtype=float)
    if not 1 <= m <= s.size:
        raise ValueError(f"m must be in [1, {s.size}], got {m}")
    order = np.argsort(-s, kind="stable")
    return FeatureSet(np.sort(order[:m]), "top_m")
