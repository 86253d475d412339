"""Evaluation metrics: identity similarity, Re-ID rate, SSIM, and the
Fréchet distance between embedding statistics.

Identity embeddings come from whatever embedder backend is plugged in;
nothing here knows about networks. Re-ID counts a pair as
re-identified when cosine similarity exceeds a threshold strictly; the
raw similarities are always available so any other threshold can be
applied after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

DEFAULT_REID_THRESHOLD = 0.4


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.dot(a, b) / (norm_a * norm_b))


def pair_similarities(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
) -> np.ndarray:
    return np.asarray([cosine_similarity(a, b) for a, b in pairs])


def reid_rate_from_similarities(
    similarities: Sequence[float], threshold: float
) -> float:
    sims = np.asarray(similarities, dtype=np.float64)
    if sims.size == 0:
        raise ValueError("re-identification rate needs at least one pair")
    return float(np.mean(sims > threshold))


def reid_rate(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    threshold: float = DEFAULT_REID_THRESHOLD,
) -> float:
    """Fraction of (original, anonymized) embedding pairs whose cosine
    similarity strictly exceeds the threshold. Lower is better."""
    return reid_rate_from_similarities(pair_similarities(pairs), threshold)


@dataclass(frozen=True)
class SsimParams:
    """Standard SSIM constants; data_range defaults to 2.0 because the
    pipeline's images live in [-1, 1]."""

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 2.0

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError("window size must be a positive odd integer")
        if self.sigma <= 0.0:
            raise ValueError("window sigma must be positive")
        if self.data_range <= 0.0:
            raise ValueError("data range must be positive")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Separable 2-D Gaussian window normalized to unit sum."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(image: np.ndarray, window: np.ndarray) -> np.ndarray:
    views = np.lib.stride_tricks.sliding_window_view(image, window.shape)
    return np.einsum("ijkl,kl->ij", views, window)


def ssim(
    x: np.ndarray, y: np.ndarray, params: SsimParams | None = None
) -> float:
    """Mean of the local SSIM map over all fully-interior windows."""
    if params is None:
        params = SsimParams()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ValueError("ssim expects 2-D grayscale images")
    k = params.window_size
    if k > min(x.shape):
        raise ValueError(
            f"window {k} exceeds image extent {min(x.shape)}"
        )
    window = gaussian_window(k, params.sigma)
    c1 = (params.k1 * params.data_range) ** 2
    c2 = (params.k2 * params.data_range) ** 2

    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    var_x = _filter_valid(x * x, window) - mu_x * mu_x
    var_y = _filter_valid(y * y, window) - mu_y * mu_y
    cov_xy = _filter_valid(x * y, window) - mu_x * mu_y

    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


@dataclass(frozen=True)
class ActivationStats:
    """Gaussian summary (mean, covariance) of a set of embeddings."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance {cov.shape} inconsistent with mean of "
                f"dimension {mean.size}"
            )
        asym = float(np.max(np.abs(cov - cov.T))) if cov.size else 0.0
        if asym > 1e-9:
            raise ValueError(f"covariance asymmetric by {asym}")
        cov = (cov + cov.T) / 2.0
        if self.count < 1:
            raise ValueError("count must be >= 1")
        mean = mean.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def activation_stats(samples: np.ndarray) -> ActivationStats:
    """Fit mean and (unbiased) covariance to rows of embeddings."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("samples must be (count, dim)")
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples for a covariance")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False)
    cov = np.atleast_2d(cov)
    return ActivationStats(mean=mean, cov=cov, count=samples.shape[0])


def frechet_distance(
    p: ActivationStats, q: ActivationStats, jitter: float = 1e-6
) -> float:
    """Fréchet distance between two Gaussian summaries.

    The cross-covariance square root can go numerically sour when a
    covariance is near-singular, so on a non-finite or heavily complex
    result the product is retried with `jitter` added to both
    diagonals; failure after that is an error, not a silent answer.
    """
    if p.mean.shape != q.mean.shape:
        raise ValueError("activation stats have mismatched dimensions")
    diff = p.mean - q.mean

    covmean = _stable_sqrtm(p.cov @ q.cov)
    if covmean is None:
        eye = np.eye(p.mean.size) * jitter
        covmean = _stable_sqrtm((p.cov + eye) @ (q.cov + eye))
        if covmean is None:
            raise ArithmeticError(
                "covariance product has no stable square root; inputs are "
                "not PSD within jitter tolerance"
            )
    value = float(diff @ diff + np.trace(p.cov + q.cov - 2.0 * covmean))
    if value < 0.0:
        # sqrtm noise on near-singular products is relative to the trace
        # magnitude, so the rounding allowance has to scale with it
        scale = max(1.0, float(np.trace(p.cov) + np.trace(q.cov)))
        if value < -1e-6 * scale:
            raise ArithmeticError(f"Fréchet distance came out {value}")
        value = 0.0
    return value


def _stable_sqrtm(mat: np.ndarray) -> np.ndarray | None:
    root = scipy.linalg.sqrtm(mat)
    if np.iscomplexobj(root):
        imag_scale = float(np.max(np.abs(root.imag)))
        real_scale = max(float(np.max(np.abs(root.real))), 1.0)
        if imag_scale > 1e-6 * real_scale:
            return None
        root = root.real
    if not np.all(np.isfinite(root)):
        return None
    return root
