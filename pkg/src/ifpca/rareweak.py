"""Rare/Weak two-class model: instances, theory quantities and phase grids.

An instance is X = Y mu' + Z with Y_i uniform on {-1, +1}, Z iid N(0, 1),
and mu(j) equal to 0 with probability 1 - eps and to +tau or -tau with
probability eps/2 each. Exponents tie the sizes to p:

    n = round(p^theta),  eps = p^-beta,  tau = p^-alpha.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import __version__
from .data import DataMatrix, atomic_write_text, normalize_columns
from .pipelines import (IFConfig, NoFeaturesSelected, if_pca, pca_cluster, simplified_if_pca,
                        simplified_pca)
from .seeds import derive_seed, real_key
from .spectral import truncated_svd

logger = logging.getLogger(__name__)

PHASE_METHODS = ("simplified_pca", "simplified_ifpca", "pca", "ifpca")
IF_METHODS = ("simplified_ifpca", "ifpca")
BOUNDARY_NUDGE = 1e-6
GRID_HEADER = ("beta", "alpha", "method", "reps", "hamming_mean", "hamming_sd",
               "select_exact_rate")


class BoundaryError(ValueError):
    """beta sits on a boundary where the piecewise formulas disagree."""


@dataclass(frozen=True)
class RareWeakConfig:
    """Exponent parameterization with optional direct overrides.

    ``support_size`` plants exactly that many signal features (uniformly
    chosen, random signs) instead of drawing the support from Bernoulli(eps).
    """

    p: int
    theta: float
    beta: float
    alpha: float
    seed: int = 0
    n: int | None = None
    epsilon: float | None = None
    tau: float | None = None
    support_size: int | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if not 0 < self.theta < 1 and self.n is None:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.beta < 1 and self.epsilon is None and self.support_size is None:
            raise ValueError("beta must lie in (0, 1)")
        if self.alpha <= 0 and self.tau is None:
            raise ValueError("alpha must be positive")
        if self.n_subjects < 2:
            raise ValueError("n must be >= 2")
        if not 0 <= self.eps <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.signal < 0:
            raise ValueError("tau must be non-negative")
        if self.support_size is not None and not 0 <= self.support_size <= self.p:
            raise ValueError("support_size must lie in [0, p]")

    @property
    def n_subjects(self) -> int:
        return self.n if self.n is not None else int(round(self.p ** self.theta))

    @property
    def eps(self) -> float:
        return self.epsilon if self.epsilon is not None else self.p ** (-self.beta)

    @property
    def signal(self) -> float:
        return self.tau if self.tau is not None else self.p ** (-self.alpha)


@dataclass(frozen=True)
class RareWeakInstance:
    X: np.ndarray
    Y: np.ndarray
    mu: np.ndarray
    support: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        """Y coded as cluster labels: +1 -> 1, -1 -> 2."""
        return np.where(self.Y > 0, 1, 2)


def generate_instance(config: RareWeakConfig) -> RareWeakInstance:
    """Draw (Y, mu, Z) from independent streams of the config seed."""
    n, p = config.n_subjects, config.p
    y_ss, mu_ss, z_ss = np.random.SeedSequence(config.seed).spawn(3)
    Y = np.random.default_rng(y_ss).choice(np.array([-1.0, 1.0]), size=n)
    rng = np.random.default_rng(mu_ss)
    if config.support_size is not None:
        support = np.sort(rng.choice(p, size=config.support_size, replace=False))
    else:
        support = np.flatnonzero(rng.random(p) < config.eps)
    signs = rng.choice(np.array([-1.0, 1.0]), size=support.size)
    mu = np.zeros(p)
    mu[support] = signs * config.signal
    Z = np.random.default_rng(z_ss).standard_normal((n, p))
    X = np.outer(Y, mu) + Z
    return RareWeakInstance(X, Y, mu, support)


def _check_boundary(theta: float, beta: float) -> None:
    for b, name in ((0.5, "1/2"), (1 - theta / 2, "1 - theta/2")):
        if abs(beta - b) < 1e-12:
            raise BoundaryError(f"beta = {beta} lies on the boundary beta = {name}")


def critical_tau(p: float, theta: float, beta: float) -> float:
    """Critical signal strength with n = p^theta (unrounded) and s = p^(1 - beta)."""
    _check_boundary(theta, beta)
    n = p ** theta
    s = p ** (1 - beta)
    if beta < 0.5:
        return (p / (n * s * s)) ** 0.25
    if beta < 1 - theta / 2:
        return n ** -0.25
    return s ** -0.5


def alpha_star(beta: float, theta: float) -> float:
    """Exponent of the critical signal strength: tau* = p^(-alpha*)."""
    _check_boundary(theta, beta)
    if beta < 0.5:
        return (1 + theta - 2 * beta) / 4
    if beta < 1 - theta / 2:
        return theta / 4
    return (1 - beta) / 2


def hamming_error(y_hat, y) -> float:
    """Fraction of disagreements, minimized over a global sign flip."""
    a = np.asarray(y_hat)
    b = np.asarray(y)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("y_hat and y must be 1-d vectors of equal length")
    if a.size == 0:
        raise ValueError("empty label vectors")
    if not (np.all(np.abs(a) == 1) and np.all(np.abs(b) == 1)):
        raise ValueError("labels must be -1 or +1")
    wrong = int(np.count_nonzero(a != b))
    return min(wrong, a.size - wrong) / a.size


def _pm(labels: np.ndarray) -> np.ndarray:
    return np.where(labels == 1, 1, -1)


def nudge_beta(beta: float, theta: float) -> float:
    """Move beta off a boundary by BOUNDARY_NUDGE."""
    for b in (0.5, 1 - theta / 2):
        if abs(beta - b) < 1e-9:
            logger.info("beta %.6g is on a boundary; using %.7g", beta, beta + BOUNDARY_NUDGE)
            return beta + BOUNDARY_NUDGE
    return beta


@dataclass(frozen=True)
class PhaseCell:
    beta: float
    alpha: float
    method: str
    reps: int
    hamming_mean: float
    hamming_sd: float
    select_exact_rate: float | None = None
    no_selection: int = 0  # reps where the IF-step kept nothing (scored as 0.5)
    hammings: tuple[float, ...] = ()


def run_method_on_instance(method: str, inst: RareWeakInstance, seed: int,
                           config: IFConfig = IFConfig()) -> tuple[float, bool | None, bool]:
    """(Hamming error, exact support recovery or None, no-features flag)."""
    X = DataMatrix(inst.X)
    if method == "simplified_pca":
        rep = simplified_pca(X)
    elif method == "simplified_ifpca":
        try:
            rep = simplified_if_pca(X)
        except NoFeaturesSelected:
            return 0.5, inst.support.size == 0, True
    elif method == "pca":
        rep = pca_cluster(normalize_columns(X, config.sd_mode), 2, seed, 1, config=config)
    elif method == "ifpca":
        rep = if_pca(X, 2, "W", config, seed)
    else:
        raise ValueError(f"unknown phase method {method!r}")
    h = hamming_error(_pm(rep.assignment.labels), inst.Y.astype(int))
    exact = None
    if method in IF_METHODS:
        exact = bool(np.array_equal(rep.retained.indices, inst.support))
    return h, exact, False


def _cell_job(args):
    cfg, methods, seed, config = args
    inst = generate_instance(cfg)
    return [run_method_on_instance(m, inst, seed, config) for m in methods]


def _summarize(beta, alpha, method, results) -> PhaseCell:
    h = np.array([r[0] for r in results])
    sd = float(h.std(ddof=1)) if h.size > 1 else 0.0
    exact = None
    if method in IF_METHODS:
        exact = float(np.mean([bool(r[1]) for r in results]))
    return PhaseCell(beta, alpha, method, h.size, float(h.mean()), sd, exact,
                     sum(r[2] for r in results), tuple(float(v) for v in h))


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [fn(t) for t in tasks]


def cell_configs(p, theta, beta, alpha, reps, base_seed, **overrides) -> list[RareWeakConfig]:
    """Configs for the reps of one (beta, alpha) cell; seeds via :func:`derive_seed`."""
    return [RareWeakConfig(p, theta, beta, alpha,
                           derive_seed(base_seed, real_key(beta), real_key(alpha), r),
                           **overrides)
            for r in range(reps)]


def simulate_cell(p: int, theta: float, beta: float, alpha: float,
                  methods: Sequence[str] = ("simplified_ifpca",), reps: int = 50,
                  base_seed: int = 0, config: IFConfig = IFConfig(), jobs: int = 1,
                  **overrides) -> list[PhaseCell]:
    """Monte Carlo over ``reps`` instances; every method sees the same instances."""
    methods = tuple(methods)
    bad = set(methods) - set(PHASE_METHODS)
    if bad:
        raise ValueError(f"unknown phase method(s): {sorted(bad)}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfgs = cell_configs(p, theta, beta, alpha, reps, base_seed, **overrides)
    tasks = [(c, methods, c.seed, config) for c in cfgs]
    results = _map(_cell_job, tasks, jobs)
    return [_summarize(beta, alpha, m, [r[k] for r in results]) for k, m in enumerate(methods)]


def run_phase_grid(p: int, theta: float, beta_grid: Sequence[float],
                   alpha_grid: Sequence[float], methods: Sequence[str], reps: int,
                   base_seed: int = 0, config: IFConfig = IFConfig(),
                   jobs: int = 1) -> list[PhaseCell]:
    """Every (beta, alpha) cell for every method, sorted by (beta, alpha, method)."""
    if not beta_grid or not alpha_grid or not methods:
        raise ValueError("grids and methods must be non-empty")
    methods = tuple(methods)
    bad = set(methods) - set(PHASE_METHODS)
    if bad:
        raise ValueError(f"unknown phase method(s): {sorted(bad)}")
    betas = [nudge_beta(float(b), theta) for b in beta_grid]
    cells = [(b, float(a)) for b in betas for a in alpha_grid]
    tasks, owners = [], []
    for ci, (b, a) in enumerate(cells):
        for cfg in cell_configs(p, theta, b, a, reps, base_seed):
            tasks.append((cfg, methods, cfg.seed, config))
            owners.append(ci)
    results = _map(_cell_job, tasks, jobs)
    out = []
    for ci, (b, a) in enumerate(cells):
        mine = [r for r, o in zip(results, owners) if o == ci]
        out.extend(_summarize(b, a, m, [r[k] for r in mine]) for k, m in enumerate(methods))
    out.sort(key=lambda c: (c.beta, c.alpha, c.method))
    return out


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def format_grid_csv(cells: Sequence[PhaseCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for c in cells:
        w.writerow([_fmt(c.beta), _fmt(c.alpha), c.method, c.reps, _fmt(c.hamming_mean),
                    _fmt(c.hamming_sd), _fmt(c.select_exact_rate)])
    return buf.getvalue()


def write_grid(cells: Sequence[PhaseCell], path: str | os.PathLike, p: int, theta: float,
               base_seed: int, extra: dict | None = None) -> str:
    """Write the grid CSV and a companion ``<path>.json``; returns the JSON path."""
    atomic_write_text(path, format_grid_csv(cells))
    meta = {"schema_version": 1, "p": p, "theta": theta, "base_seed": base_seed,
            "software_version": __version__,
            "no_selection": {f"{c.beta}|{c.alpha}|{c.method}": c.no_selection
                             for c in cells if c.no_selection}}
    meta.update(extra or {})
    jpath = os.fspath(path) + ".json"
    atomic_write_text(jpath, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return jpath


def green_tau(p: int, n: int, multiple: float = 2.0) -> float:
    """tau with sqrt(n/2) tau^2 = multiple * sqrt(2 log p).

    The mean chi-square score of a signal feature is sqrt(n/2) tau^2, so this
    puts signal features ``multiple`` times above the fixed threshold.
    """
    return math.sqrt(multiple * math.sqrt(2 * math.log(p)) / math.sqrt(n / 2))


@dataclass(frozen=True)
class Lemma1Result:
    discrepancies: np.ndarray  # one per rep
    mu_norm_sq: float

    @property
    def max(self) -> float:
        return float(self.discrepancies.max())

    @property
    def median(self) -> float:
        return float(np.median(self.discrepancies))


def lemma1_mu_norm_sq(N: int, m: int, ratio: float) -> float:
    """||mu||^2 giving N ||mu||^2 / (N + 2 sqrt(N m)) = ratio."""
    return ratio * (N + 2 * math.sqrt(N * m)) / N


def lemma1_check(N: int, m: int, mu_norm_sq: float | None = None, reps: int = 20,
                 seed: int = 0, ratio: float | None = None,
                 noise_scale: float = 1.0) -> Lemma1Result:
    """Sup-norm gap between sqrt(N) xi and +-Y for X = Y mu' + noise_scale * Z.

    Give either ``mu_norm_sq`` directly or the signal ``ratio``. mu is dense
    with equal-magnitude entries and random signs.
    """
    if (mu_norm_sq is None) == (ratio is None):
        raise ValueError("give exactly one of mu_norm_sq and ratio")
    if mu_norm_sq is None:
        mu_norm_sq = lemma1_mu_norm_sq(N, m, ratio)
    out = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng(derive_seed(seed, r))
        Y = rng.choice(np.array([-1.0, 1.0]), size=N)
        mu = rng.choice(np.array([-1.0, 1.0]), size=m) * math.sqrt(mu_norm_sq / m)
        X = np.outer(Y, mu)
        if noise_scale:
            X = X + noise_scale * rng.standard_normal((N, m))
        xi = truncated_svd(X, 1, check=False).vectors[:, 0]
        v = math.sqrt(N) * xi
        out[r] = min(np.abs(v - Y).max(), np.abs(v + Y).max())
    return Lemma1Result(out, mu_norm_sq)
