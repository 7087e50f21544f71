"""End-to-end clustering methods.

Method wiring (IF-step always runs on the normalized matrix W):

    name       feature selection   reduction on        reduction
    pca        none                W                   K-1 singular vectors
    pca-x      none                X                   K singular vectors
    ifpca      KS + HCT on W       W restricted        K-1 singular vectors
    ifpca-x    KS + HCT on W       X restricted        K-1 singular vectors
    vae        none                W                   VAE latent means
    vae-x      none                X                   VAE latent means
    ifvae      KS + HCT on W       W restricted        VAE latent means
    ifvae-x    KS + HCT on W       X restricted        VAE latent means
    spca       none                X                   sign of 1st vector
    sifpca     chi-square, fixed   X restricted        sign of 1st vector

Everything except the sign rules finishes with k-means on the embedding rows.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import DataMatrix, NormalizedMatrix, normalize_columns
from .metrics import clustering_error
from .scoring import DEFAULT_B, KsScoreSet, chi_square_scores, score_features
from .seeds import derive_seed
from .selection import FeatureSet, SelectionResult, fixed_threshold_select, hct, top_m_select
from .spectral import ClusterAssignment, kmeans, sign_cluster, truncated_svd
from .vae import VaeHyper, encode, train_vae

logger = logging.getLogger(__name__)

FAMILIES = ("pca", "ifpca", "vae", "ifvae", "simplified_pca", "simplified_ifpca")
INPUTS = ("normalized", "raw")

METHODS = {
    "pca": ("pca", "normalized"),
    "pca-x": ("pca", "raw"),
    "ifpca": ("ifpca", "normalized"),
    "ifpca-x": ("ifpca", "raw"),
    "vae": ("vae", "normalized"),
    "vae-x": ("vae", "raw"),
    "ifvae": ("ifvae", "normalized"),
    "ifvae-x": ("ifvae", "raw"),
    "spca": ("simplified_pca", "raw"),
    "sifpca": ("simplified_ifpca", "raw"),
}

# observer(step, tag, matrix) is called with every matrix a step consumes
Observer = Callable[[str, str, np.ndarray], None]


class NoFeaturesSelected(RuntimeError):
    """The fixed chi-square threshold kept no feature; there is nothing to cluster."""

    def __init__(self, message: str, threshold: float, max_score: float):
        super().__init__(message)
        self.threshold = threshold
        self.max_score = max_score


@dataclass(frozen=True)
class IFConfig:
    pvalue_mode: str = "null_score"
    B: int = DEFAULT_B
    null_seed: int = 0
    hc_variant: str = "printed"
    sd_mode: str = "sample"
    n_vectors: int | None = None  # override the number of singular vectors
    kmeans_restarts: int = 30
    kmeans_max_iter: int = 100
    vae_scaling: str = "global"
    use_cache: bool = True


@dataclass(frozen=True)
class MethodSpec:
    family: str
    clustering_input: str
    K: int
    vae_hyper: VaeHyper | None = None
    seed: int = 0
    repeats: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.clustering_input not in INPUTS:
            raise ValueError(f"unknown clustering input {self.clustering_input!r}")
        if self.family.startswith("simplified") and (self.clustering_input != "raw" or self.K != 2):
            raise ValueError("simplified methods cluster raw X into K = 2 groups")
        if self.K < 2:
            raise ValueError("K must be >= 2")

    @classmethod
    def from_name(cls, name: str, K: int, **kw) -> "MethodSpec":
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
        family, inp = METHODS[name]
        return cls(family, inp, K, **kw)

    @property
    def n_repeats(self) -> int:
        if self.repeats is not None:
            return self.repeats
        return 10 if self.family in ("vae", "ifvae") else 5


@dataclass(frozen=True)
class PipelineReport:
    assignment: ClusterAssignment
    retained: FeatureSet | None = None
    per_repeat_errors: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    repeat_assignments: tuple[ClusterAssignment, ...] = ()


@dataclass(frozen=True)
class IFStep:
    normalized: NormalizedMatrix
    scores: KsScoreSet
    selection: SelectionResult
    retained: FeatureSet  # columns of the source matrix


def _as_data(X) -> DataMatrix:
    return X if isinstance(X, DataMatrix) else DataMatrix(X)


def _observe(observer: Observer | None, step: str, tag: str, M: np.ndarray) -> None:
    if observer is not None:
        observer(step, tag, M)


def repeat_seeds(seed: int, repeats: int) -> list[int]:
    return [derive_seed(seed, r) for r in range(repeats)]


def if_step(X, config: IFConfig = IFConfig(), observer: Observer | None = None) -> IFStep:
    """Normalize, KS-score every column of W, and keep features by HCT."""
    X = _as_data(X)
    if X.p < 2:
        raise ValueError("the IF-step needs p >= 2")
    W = normalize_columns(X, config.sd_mode)
    _observe(observer, "select", "W", W.values)
    ks = score_features(W, config.B, config.null_seed, config.pvalue_mode, config.use_cache)
    sel = hct(ks.pvalues, W.n, config.hc_variant)
    idx = W.retained_features[sel.retained]
    return IFStep(W, ks, sel, FeatureSet(np.sort(idx), "hct"))


def _embed_kmeans(M: np.ndarray, K: int, k: int, seeds: Sequence[int],
                  config: IFConfig) -> tuple[list[ClusterAssignment], np.ndarray]:
    emb = truncated_svd(M, k)
    out = [kmeans(emb.vectors, K, config.kmeans_restarts, config.kmeans_max_iter, s)
           for s in seeds]
    return out, emb.singular_values


def _errors(assignments, y, K) -> np.ndarray | None:
    if y is None:
        return None
    return np.array([clustering_error(a.labels, y, K).error_count for a in assignments])


def pca_cluster(data, K: int, seed: int = 0, repeats: int = 1, y=None,
                config: IFConfig = IFConfig(), n_vectors: int | None = None,
                observer: Observer | None = None) -> PipelineReport:
    """Spectral clustering: K-1 singular vectors on normalized W, K on raw X."""
    if K < 2:
        raise ValueError("K must be >= 2")
    t0 = time.perf_counter()
    if isinstance(data, NormalizedMatrix):
        M, tag, k = data.values, "W", K - 1
    else:
        M, tag, k = _as_data(data).values, "X", K
    k = n_vectors or config.n_vectors or k
    _observe(observer, "reduce", tag, M)
    assigns, sv = _embed_kmeans(M, K, k, repeat_seeds(seed, repeats), config)
    diag = {"reduce_on": tag, "n_vectors": k, "singular_values": sv.tolist(),
            "elapsed_s": time.perf_counter() - t0}
    return PipelineReport(assigns[0], None, _errors(assigns, y, K), diag, tuple(assigns))


def if_pca(X, K: int, variant: str = "W", config: IFConfig = IFConfig(), seed: int = 0,
           repeats: int = 1, y=None, observer: Observer | None = None) -> PipelineReport:
    """IF-step on W, then K-1 singular vectors of W or X restricted to the kept features."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if variant not in ("W", "X"):
        raise ValueError("variant must be 'W' or 'X'")
    t0 = time.perf_counter()
    X = _as_data(X)
    step = if_step(X, config, observer)
    if variant == "W":
        # retained columns of W, addressed in W's own column numbering
        M = step.normalized.values[:, step.selection.retained]
    else:
        M = X.values[:, step.retained.indices]
    tag = f"{variant}^IF"
    _observe(observer, "reduce", tag, M)
    k = config.n_vectors or K - 1
    assigns, sv = _embed_kmeans(M, K, k, repeat_seeds(seed, repeats), config)
    diag = _if_diagnostics(step)
    diag.update(reduce_on=tag, n_vectors=k, singular_values=sv.tolist(),
                elapsed_s=time.perf_counter() - t0)
    return PipelineReport(assigns[0], step.retained, _errors(assigns, y, K), diag, tuple(assigns))


def _if_diagnostics(step: IFStep) -> dict:
    sel = step.selection
    return {"select_on": "W", "threshold": sel.threshold, "j_hat": sel.j_hat,
            "n_retained": len(step.retained), "hct_fallback": sel.fallback_used,
            "dropped_constant": len(step.normalized.dropped_features),
            "pvalue_mode": step.scores.mode, "null_table": step.scores.null_table_ref}


def simplified_pca(X, y=None, observer: Observer | None = None) -> PipelineReport:
    """Sign of the first left singular vector of the full X."""
    v = _as_data(X).values
    _observe(observer, "reduce", "X", v)
    emb = truncated_svd(v, 1)
    a = sign_cluster(emb.vectors[:, 0])
    return PipelineReport(a, None, _errors([a], y, 2),
                          {"reduce_on": "X", "singular_values": emb.singular_values.tolist()})


def simplified_if_pca(X, y=None, observer: Observer | None = None) -> PipelineReport:
    """Chi-square screening at sqrt(2 log p), then the sign rule on the kept columns."""
    v = _as_data(X).values
    _observe(observer, "select", "X", v)
    chi2 = chi_square_scores(v)
    fs = fixed_threshold_select(chi2)
    t = float(np.sqrt(2 * np.log(v.shape[1])))
    if fs.empty:
        raise NoFeaturesSelected(
            f"no chi-square score reaches {t:.4g} (max {chi2.scores.max():.4g})",
            t, float(chi2.scores.max()))
    M = v[:, fs.indices]
    _observe(observer, "reduce", "X^IF", M)
    emb = truncated_svd(M, 1)
    a = sign_cluster(emb.vectors[:, 0])
    diag = {"select_on": "X", "reduce_on": "X^IF", "threshold": t, "n_retained": len(fs),
            "singular_values": emb.singular_values.tolist()}
    return PipelineReport(a, fs, _errors([a], y, 2), diag)


def _vae_job(args):
    M, K, hyper, scaling, restarts, max_iter = args
    params = train_vae(M, hyper, scaling)
    Z = encode(params, M).means
    a = kmeans(Z, K, restarts, max_iter, hyper.seed)
    return replace(a, method_tag="vae+kmeans",
                   extra={"final_loss": params.loss_trace[-1], "latent_dim": Z.shape[1]})


def _run_vae(M, K, hyper, seed, repeats, config, jobs):
    tasks = [(M, K, replace(hyper, seed=s), config.vae_scaling, config.kmeans_restarts,
              config.kmeans_max_iter) for s in repeat_seeds(seed, repeats)]
    if jobs > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, repeats)) as ex:
            return list(ex.map(_vae_job, tasks))
    return [_vae_job(t) for t in tasks]


def vae_cluster(X, K: int, variant: str = "W", hyper: VaeHyper = VaeHyper(), seed: int = 0,
                repeats: int = 10, y=None, config: IFConfig = IFConfig(), jobs: int = 1,
                observer: Observer | None = None) -> PipelineReport:
    """Train a VAE on W (or X), then k-means on the latent means; one model per repeat."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if variant not in ("W", "X"):
        raise ValueError("variant must be 'W' or 'X'")
    X = _as_data(X)
    M = normalize_columns(X, config.sd_mode).values if variant == "W" else X.values
    _observe(observer, "reduce", variant, M)
    assigns = _run_vae(M, K, hyper, seed, repeats, config, jobs)
    diag = {"reduce_on": variant, "latent_dim": hyper.d,
            "final_losses": [a.extra["final_loss"] for a in assigns]}
    return PipelineReport(assigns[0], None, _errors(assigns, y, K), diag, tuple(assigns))


def if_vae(X, K: int, variant: str = "W", hyper: VaeHyper = VaeHyper(), seed: int = 0,
           repeats: int = 10, y=None, config: IFConfig = IFConfig(), jobs: int = 1,
           observer: Observer | None = None) -> PipelineReport:
    """IF-step as in :func:`if_pca`, then the VAE clustering step on W^IF or X^IF."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if variant not in ("W", "X"):
        raise ValueError("variant must be 'W' or 'X'")
    X = _as_data(X)
    step = if_step(X, config, observer)
    if variant == "W":
        M = step.normalized.values[:, step.selection.retained]
    else:
        M = X.values[:, step.retained.indices]
    tag = f"{variant}^IF"
    _observe(observer, "reduce", tag, M)
    assigns = _run_vae(M, K, hyper, seed, repeats, config, jobs)
    diag = _if_diagnostics(step)
    diag.update(reduce_on=tag, latent_dim=hyper.d,
                final_losses=[a.extra["final_loss"] for a in assigns])
    return PipelineReport(assigns[0], step.retained, _errors(assigns, y, K), diag, tuple(assigns))


def run_method(name: str, X, K: int, seed: int = 0, repeats: int | None = None, y=None,
               config: IFConfig = IFConfig(), hyper: VaeHyper = VaeHyper(), jobs: int = 1,
               observer: Observer | None = None) -> PipelineReport:
    """Dispatch one of the names in :data:`METHODS`."""
    spec = MethodSpec.from_name(name, K, seed=seed, repeats=repeats, vae_hyper=hyper)
    r = spec.n_repeats
    variant = "W" if spec.clustering_input == "normalized" else "X"
    X = _as_data(X)
    if spec.family == "pca":
        data = normalize_columns(X, config.sd_mode) if variant == "W" else X
        return pca_cluster(data, K, seed, r, y, config, observer=observer)
    if spec.family == "ifpca":
        return if_pca(X, K, variant, config, seed, r, y, observer)
    if spec.family == "vae":
        return vae_cluster(X, K, variant, hyper, seed, r, y, config, jobs, observer)
    if spec.family == "ifvae":
        return if_vae(X, K, variant, hyper, seed, r, y, config, jobs, observer)
    if spec.family == "simplified_pca":
        return simplified_pca(X, y, observer)
    return simplified_if_pca(X, y, observer)


@dataclass(frozen=True)
class SweepRow:
    m: int
    mean_error_rate: float
    mean_error_count: float
    errors: tuple[int, ...]


def feature_sweep(X, K: int, m_grid: Sequence[int], y, clusterer: str = "pca", seed: int = 0,
                  repeats: int = 5, config: IFConfig = IFConfig(),
                  hyper: VaeHyper = VaeHyper(), n_vectors: int | None = None,
                  jobs: int = 1) -> list[SweepRow]:
    """Clustering error when keeping the m top-ranked features, for each m.

    Features are ranked once by Efron-standardized KS score on W; each
    clustering runs on the raw X restricted to the top m. The PCA clusterer
    uses K-1 singular vectors (as IF-PCA(X) does) unless ``n_vectors`` is set.
    """
    X = _as_data(X)
    y = np.asarray(y)
    if clusterer not in ("pca", "vae"):
        raise ValueError("clusterer must be 'pca' or 'vae'")
    W = normalize_columns(X, config.sd_mode)
    ks = score_features(W, config.B, config.null_seed, config.pvalue_mode, config.use_cache)
    p_eff = W.p
    rows = []
    for m in m_grid:
        m = int(m)
        if not 1 <= m <= p_eff:
            raise ValueError(f"m must lie in [1, {p_eff}], got {m}")
        idx = W.retained_features[top_m_select(ks.standardized, m).indices]
        M = X.values[:, idx]
        if clusterer == "pca":
            k = min(n_vectors or config.n_vectors or K - 1, m)
            assigns, _ = _embed_kmeans(M, K, k, repeat_seeds(seed, repeats), config)
        else:
            assigns = _run_vae(M, K, hyper, seed, repeats, config, jobs)
        errs = _errors(assigns, y, K)
        rows.append(SweepRow(m, float(errs.mean() / X.n), float(errs.mean()),
                             tuple(int(e) for e in errs)))
    return rows
