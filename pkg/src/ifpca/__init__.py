"""Feature-screened spectral and VAE clustering for sparse high-dimensional data."""

from __future__ import annotations

__version__ = "0.1.0"

from .data import DataMatrix, LabelVector, NormalizedMatrix, load_matrix, normalize_columns
from .metrics import ari, clustering_error, regret_and_rank
from .pipelines import (IFConfig, MethodSpec, feature_sweep, if_pca, if_vae, pca_cluster,
                        run_method, simplified_if_pca, simplified_pca, vae_cluster)
from .rareweak import (RareWeakConfig, alpha_star, critical_tau, generate_instance,
                       hamming_error, lemma1_check, run_phase_grid)
from .scoring import build_null_cdf, ks_score, ks_scores, score_features
from .selection import hct, top_m_select
from .spectral import kmeans, truncated_svd
from .vae import VaeHyper, encode, train_vae

__all__ = [
    "DataMatrix", "LabelVector", "NormalizedMatrix", "load_matrix", "normalize_columns",
    "ari", "clustering_error", "regret_and_rank",
    "IFConfig", "MethodSpec", "feature_sweep", "if_pca", "if_vae", "pca_cluster", "run_method",
    "simplified_if_pca", "simplified_pca", "vae_cluster",
    "RareWeakConfig", "alpha_star", "critical_tau", "generate_instance", "hamming_error",
    "lemma1_check", "run_phase_grid",
    "build_null_cdf", "ks_score", "ks_scores", "score_features",
    "hct", "top_m_select", "kmeans", "truncated_svd",
    "VaeHyper", "encode", "train_vae",
]
