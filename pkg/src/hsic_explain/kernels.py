"""Per-unit kernels, Gram matrices, centering and normalization.

Each explainable unit contributes one Gram matrix over the M auxiliary
samples.  Matrices are double centered (K <- HKH with H = I - (1/M)11')
then scaled to unit Frobenius norm, so the solver's inner products are
directly comparable across units.  A matrix whose centered norm vanishes
carries no information; it is replaced by exact zeros and flagged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateOutputError(RuntimeError):
    """The model output carries no variation over the auxiliary samples."""


@dataclass(frozen=True)
class KernelConfig:
    """Kernel choices for unit features and model outputs.

    input_kernel "auto" maps binary and categorical unit features to the
    delta kernel and continuous features to a Gaussian.  Forcing "delta"
    on continuous features binarizes them at `binarize_threshold` first.
    A sigma of None means the median heuristic.
    """

    input_kernel: str = "auto"
    input_sigma: float | None = None
    output_sigma: float | None = None
    binarize_threshold: float = 0.5
    zero_norm_tol: float = 1e-12

    def __post_init__(self):
        if self.input_kernel not in ("auto", "delta", "gaussian"):
            raise ValueError(f"unknown input kernel {self.input_kernel!r}")
        for name in ("input_sigma", "output_sigma"):
            sigma = getattr(self, name)
            if sigma is not None and not sigma > 0:
                raise ValueError(f"{name} must be positive")
        if not self.zero_norm_tol > 0:
            raise ValueError("zero_norm_tol must be positive")


@dataclass(frozen=True)
class GramMatrix:
    """Centered, normalized Gram matrix over the auxiliary samples."""

    values: np.ndarray
    normalized: bool = True
    degenerate: bool = False

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _as_2d(features: np.ndarray) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    if f.ndim != 2:
        raise ValueError(f"features must be 1- or 2-dimensional, got shape {f.shape}")
    return f


def pairwise_sq_dists(features: np.ndarray) -> np.ndarray:
    f = _as_2d(features)
    sq = np.sum(f * f, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (f @ f.T)
    return np.maximum(d2, 0.0)


def median_heuristic(features: np.ndarray) -> float:
    """Median of nonzero pairwise Euclidean distances; 1.0 if all vanish."""
    d2 = pairwise_sq_dists(features)
    iu = np.triu_indices(d2.shape[0], k=1)
    dists = np.sqrt(d2[iu])
    nonzero = dists[dists > 0]
    if nonzero.size == 0:
        return 1.0
    return float(np.median(nonzero))


def delta_gram(features: np.ndarray) -> np.ndarray:
    """k(x, y) = 1 iff the feature vectors are equal."""
    f = _as_2d(features)
    eq = np.all(f[:, None, :] == f[None, :, :], axis=2)
    return eq.astype(np.float64)


def gaussian_gram(features: np.ndarray, sigma: float) -> np.ndarray:
    """k(x, y) = exp(-||x - y||^2 / (2 sigma^2))."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return np.exp(pairwise_sq_dists(features) / (-2.0 * sigma * sigma))


def center_normalize(K: np.ndarray, tol: float = 1e-12) -> GramMatrix:
    """Double center then scale to unit Frobenius norm.

    Centering uses the closed form HKH = K - row means - column means +
    grand mean.  A centered norm below tol yields an exactly zero matrix
    flagged degenerate.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"gram matrix must be square, got shape {K.shape}")
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    centered = K - row - col + K.mean()
    centered = 0.5 * (centered + centered.T)  # enforce exact symmetry
    norm = float(np.linalg.norm(centered))
    if norm < tol:
        return GramMatrix(np.zeros_like(K), normalized=True, degenerate=True)
    return GramMatrix(centered / norm, normalized=True, degenerate=False)


FEATURE_KINDS = ("binary", "continuous", "categorical")


def unit_gram(values: np.ndarray, feature_kind: str, config: KernelConfig, label: str = "unit") -> GramMatrix:
    """Centered normalized Gram matrix for one unit's sample features."""
    if feature_kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    f = _as_2d(values)
    kernel = config.input_kernel
    if kernel == "auto":
        kernel = "gaussian" if feature_kind == "continuous" else "delta"
    if kernel == "delta":
        if feature_kind == "continuous":
            f = (f > config.binarize_threshold).astype(np.float64)
        K = delta_gram(f)
    else:
        sigma = config.input_sigma if config.input_sigma is not None else median_heuristic(f)
        K = gaussian_gram(f, sigma)
    gm = center_normalize(K, config.zero_norm_tol)
    if gm.degenerate:
        warnings.warn(
            f"{label}: constant kernel features over all samples, gram is zero",
            RuntimeWarning,
            stacklevel=2,
        )
    return gm


def output_gram(predictions: np.ndarray, config: KernelConfig) -> GramMatrix:
    """Gaussian Gram matrix over prediction vectors.

    Raises DegenerateOutputError when the model never changed its answer:
    a constant output makes every HSIC score zero and the explanation
    meaningless.
    """
    p = _as_2d(predictions)
    sigma = config.output_sigma if config.output_sigma is not None else median_heuristic(p)
    gm = center_normalize(gaussian_gram(p, sigma), config.zero_norm_tol)
    if gm.degenerate:
        raise DegenerateOutputError(
            "model output is constant under this perturbation scheme"
        )
    return gm
