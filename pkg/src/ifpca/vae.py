"""A one-hidden-layer variational autoencoder in plain numpy.

Encoder: x -> relu(x W1 + b1) -> (mean, log_var) heads.
Decoder: z -> relu(z W3 + b3) -> sigmoid(h W4 + b4).
The loss is Bernoulli cross-entropy plus the KL divergence of the Gaussian
posterior from N(0, I), averaged over the batch. Gradients are derived by
hand and checked against finite differences in the test suite.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
SCALINGS = ("feature", "global")
BLOCKS = ("W1", "b1", "Wm", "bm", "Wv", "bv", "W3", "b3", "W4", "b4")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, trace=(), batch: int | None = None):
        super().__init__(message)
        self.trace = tuple(trace)
        self.batch = batch


@dataclass(frozen=True)
class VaeHyper:
    d: int = 25
    hidden: int = 128
    epochs: int = 100
    batches: int = 50
    learning_rate: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "hidden", "epochs", "batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.learning_rate < 1:
            raise ValueError("learning_rate must lie in (0, 1)")


@dataclass
class VaeParams:
    """Weights are stored (fan_in, fan_out) so layers are ``x @ W + b``."""

    W1: np.ndarray
    b1: np.ndarray
    Wm: np.ndarray
    bm: np.ndarray
    Wv: np.ndarray
    bv: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    W4: np.ndarray
    b4: np.ndarray
    input_scaling: tuple[np.ndarray, np.ndarray] | None = None  # (min, max) per feature
    loss_trace: tuple[float, ...] = ()

    @property
    def p_in(self) -> int:
        return self.W1.shape[0]

    @property
    def d(self) -> int:
        return self.Wm.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in BLOCKS}

    def copy(self) -> "VaeParams":
        return replace(self, **{k: v.copy() for k, v in self.blocks().items()})


@dataclass(frozen=True)
class LatentEmbedding:
    means: np.ndarray
    log_vars: np.ndarray


def init_vae(p_in: int, hyper: VaeHyper) -> VaeParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    if p_in < 1:
        raise ValueError("p_in must be >= 1")
    rng = np.random.default_rng([hyper.seed, 0])
    h, d = hyper.hidden, hyper.d

    def layer(fan_in, fan_out):
        r = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-r, r, size=(fan_in, fan_out)), np.zeros(fan_out)

    W1, b1 = layer(p_in, h)
    Wm, bm = layer(h, d)
    Wv, bv = layer(h, d)
    W3, b3 = layer(d, h)
    W4, b4 = layer(h, p_in)
    return VaeParams(W1, b1, Wm, bm, Wv, bv, W3, b3, W4, b4)


def _encode_raw(params: VaeParams, x: np.ndarray):
    pre1 = x @ params.W1 + params.b1
    h1 = np.maximum(pre1, 0.0)
    return pre1, h1, h1 @ params.Wm + params.bm, h1 @ params.Wv + params.bv


def elbo_terms(params: VaeParams, batch: np.ndarray, noise: np.ndarray) -> tuple[float, float]:
    """Batch-averaged (reconstruction, KL) terms of the loss."""
    _, _, mu, lv = _encode_raw(params, batch)
    z = mu + np.exp(lv / 2) * noise
    a = np.maximum(z @ params.W3 + params.b3, 0.0) @ params.W4 + params.b4
    b = batch.shape[0]
    recon = float((np.logaddexp(0.0, a) - batch * a).sum() / b)
    kl = float(-0.5 * (1.0 + lv - mu**2 - np.exp(lv)).sum() / b)
    return recon, kl


def elbo_and_gradients(params: VaeParams, batch: np.ndarray,
                       noise: np.ndarray, batch_index: int | None = None):
    """Loss (negative ELBO, batch mean) and its exact gradient for this noise draw."""
    x = np.asarray(batch, dtype=float)
    b = x.shape[0]
    if x.ndim != 2 or x.shape[1] != params.p_in:
        raise ValueError(f"batch must be b x {params.p_in}, got {x.shape}")
    if noise.shape != (b, params.d):
        raise ValueError(f"noise must be {b} x {params.d}, got {noise.shape}")

    pre1, h1, mu, lv = _encode_raw(params, x)
    sd = np.exp(lv / 2)
    z = mu + sd * noise
    pre2 = z @ params.W3 + params.b3
    h2 = np.maximum(pre2, 0.0)
    a = h2 @ params.W4 + params.b4

    recon = (np.logaddexp(0.0, a) - x * a).sum()
    kl = -0.5 * (1.0 + lv - mu**2 - np.exp(lv)).sum()
    loss = float((recon + kl) / b)
    if not np.isfinite(loss):
        where = "" if batch_index is None else f" on batch {batch_index}"
        raise TrainingDiverged(f"non-finite loss{where}", batch=batch_index)

    dA = (expit(a) - x) / b
    g = {"W4": h2.T @ dA, "b4": dA.sum(axis=0)}
    dpre2 = (dA @ params.W4.T) * (pre2 > 0)
    g["W3"] = z.T @ dpre2
    g["b3"] = dpre2.sum(axis=0)
    dz = dpre2 @ params.W3.T
    dmu = dz + mu / b
    dlv = dz * noise * sd / 2 + (np.exp(lv) - 1.0) / (2 * b)
    g["Wm"], g["bm"] = h1.T @ dmu, dmu.sum(axis=0)
    g["Wv"], g["bv"] = h1.T @ dlv, dlv.sum(axis=0)
    dpre1 = (dmu @ params.Wm.T + dlv @ params.Wv.T) * (pre1 > 0)
    g["W1"], g["b1"] = x.T @ dpre1, dpre1.sum(axis=0)
    return loss, g


def fit_scaling(data: np.ndarray, scaling: str = "feature") -> tuple[np.ndarray, np.ndarray]:
    """(lo, hi) per feature for mapping data into [0, 1]."""
    if scaling == "feature":
        return data.min(axis=0), data.max(axis=0)
    if scaling == "global":
        p = data.shape[1]
        return np.full(p, data.min()), np.full(p, data.max())
    raise ValueError(f"unknown scaling {scaling!r}")


def apply_scaling(data: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Min-max map to [0, 1]; features with hi == lo map to 0.5."""
    span = hi - lo
    flat = span == 0
    out = (data - lo) / np.where(flat, 1.0, span)
    out[:, flat] = 0.5
    return out


def epoch_batches(n: int, batches: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle row indices and split them into ``batches`` nearly equal parts."""
    return np.array_split(rng.permutation(n), batches)


def train_vae(data, hyper: VaeHyper = VaeHyper(), scaling: str = "feature") -> VaeParams:
    """Mini-batch SGD for hyper.epochs passes of hyper.batches batches.

    Rows are reshuffled each epoch and split into ``batches`` nearly equal
    parts; every step draws fresh reparameterization noise.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("data has non-finite entries")
    n = X.shape[0]
    if n < hyper.batches:
        raise ValueError(f"need n >= batches ({n} < {hyper.batches})")
    lo, hi = fit_scaling(X, scaling)
    Xs = apply_scaling(X, lo, hi)
    params = init_vae(X.shape[1], hyper)
    rng = np.random.default_rng([hyper.seed, 1])
    lr = hyper.learning_rate
    trace: list[float] = []
    step = 0
    for _ in range(hyper.epochs):
        total = 0.0
        for rows in epoch_batches(n, hyper.batches, rng):
            noise = rng.standard_normal((rows.size, hyper.d))
            try:
                loss, grads = elbo_and_gradients(params, Xs[rows], noise, batch_index=step)
            except TrainingDiverged as exc:
                raise TrainingDiverged(str(exc), trace, exc.batch) from None
            for k, w in params.blocks().items():
                w -= lr * grads[k]
            total += loss
            step += 1
        trace.append(total / hyper.batches)
        if not all(np.all(np.isfinite(v)) for v in params.blocks().values()):
            raise TrainingDiverged(f"non-finite parameters after epoch {len(trace)}", trace)
    params.input_scaling = (lo, hi)
    params.loss_trace = tuple(trace)
    return params


def encode(params: VaeParams, data) -> LatentEmbedding:
    """Posterior means and log-variances; no sampling."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.p_in:
        raise ValueError(f"data width {X.shape[-1]} does not match the model ({params.p_in})")
    if params.input_scaling is not None:
        X = apply_scaling(X, *params.input_scaling)
    _, _, mu, lv = _encode_raw(params, X)
    return LatentEmbedding(mu, lv)


def reconstruct(params: VaeParams, data) -> np.ndarray:
    """Decoder output at the posterior means, on the [0, 1] scale."""
    mu = encode(params, data).means
    return expit(np.maximum(mu @ params.W3 + params.b3, 0.0) @ params.W4 + params.b4)


def save_checkpoint(params: VaeParams, path: str | os.PathLike) -> None:
    extra = {}
    if params.input_scaling is not None:
        extra = {"scale_lo": params.input_scaling[0], "scale_hi": params.input_scaling[1]}
    with open(path, "wb") as fh:
        np.savez(fh, version=CHECKPOINT_VERSION, loss_trace=np.asarray(params.loss_trace),
                 **params.blocks(), **extra)


def load_checkpoint(path: str | os.PathLike) -> VaeParams:
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        blocks = {k: z[k].copy() for k in BLOCKS}
        scaling = (z["scale_lo"].copy(), z["scale_hi"].copy()) if "scale_lo" in z else None
        trace = tuple(float(v) for v in z["loss_trace"])
    return VaeParams(**blocks, input_scaling=scaling, loss_trace=trace)
