"""Dense linear algebra substrate: PCA fit/project/reconstruct and Pearson
correlation.

All public functions take and return float64 ndarrays (matrices are 2-D,
row-major) and are pure: no shared mutable state, safe to call from any
thread. Inputs are checked for finiteness; outputs of valid inputs are
always finite.

PCA conventions
---------------
- Sample covariance with divisor n-1.
- Components are rows, orthonormal, ordered by non-increasing explained
  variance.
- Deterministic sign: each component's largest-magnitude entry is made
  positive, so repeated fits (and fits across machines) agree bit-for-bit
  modulo floating-point.
- Fit goes through the SVD of the centered data matrix, which satisfies
  the same post-conditions as an explicit covariance eigendecomposition
  but is better conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ValidationError

__all__ = ["PcaModel", "pca_fit", "pca_project", "pca_reconstruct", "pearson_corr", "as_matrix"]


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: contains non-finite values")
    return a


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: contains non-finite values")
    return a


@dataclass(frozen=True)
class PcaModel:
    """Fitted principal-component model.

    mean        : (d,) column means of the fitted data
    components  : (k, d) orthonormal rows, non-increasing variance order
    variances   : (k,) explained variances (sample convention, divisor n-1)
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "mean"))
        object.__setattr__(self, "components", as_matrix(self.components, "components"))
        object.__setattr__(self, "variances", _as_vector(self.variances, "variances"))
        k, d = self.components.shape
        if self.mean.shape[0] != d:
            raise ValidationError("PcaModel: mean length does not match component width")
        if self.variances.shape[0] != k:
            raise ValidationError("PcaModel: variances length does not match component count")
        if k > d:
            raise ValidationError("PcaModel: more components than dimensions")
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(k), atol=1e-9):
            raise ValidationError("PcaModel: components are not orthonormal")
        if np.any(self.variances < 0):
            raise ValidationError("PcaModel: negative explained variance")
        if np.any(np.diff(self.variances) > 1e-12):
            raise ValidationError("PcaModel: variances not sorted in non-increasing order")


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def pca_fit(X, k: int) -> PcaModel:
    """Fit a k-component PCA to the rows of X (n samples, d dims).

    Requires n >= 2 and 1 <= k <= min(n-1, d). Variances use the n-1
    divisor; components carry the deterministic sign convention.
    """
    X = as_matrix(X, "X")
    n, d = X.shape
    if n < 2:
        raise PreconditionError(f"pca_fit: need at least 2 samples, got {n}")
    if not (1 <= k <= min(n - 1, d)):
        raise PreconditionError(
            f"pca_fit: k={k} outside valid range [1, {min(n - 1, d)}] for shape {n}x{d}"
        )
    mean = X.mean(axis=0)
    centered = X - mean
    # SVD of the centered data: singular values relate to eigenvalues of
    # the sample covariance by s^2 / (n-1).
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = _fix_signs(vt[:k])
    variances = (s[:k] ** 2) / (n - 1)
    return PcaModel(mean=mean, components=components, variances=variances)


def pca_project(model: PcaModel, X) -> np.ndarray:
    """Project rows of X into component coordinates: (X - mean) @ P.T."""
    X = as_matrix(X, "X")
    if X.shape[1] != model.d:
        raise ValidationError(
            f"pca_project: X has {X.shape[1]} columns, model expects {model.d}"
        )
    return (X - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, Z) -> np.ndarray:
    """Map component coordinates back to data space: Z @ P + mean."""
    Z = as_matrix(Z, "Z")
    if Z.shape[1] != model.k:
        raise ValidationError(
            f"pca_reconstruct: Z has {Z.shape[1]} columns, model has k={model.k}"
        )
    return Z @ model.components + model.mean


def pearson_corr(a, b) -> float:
    """Sample Pearson correlation of two equal-length vectors.

    Returns 0.0 when either vector has zero variance: a constant signal
    carries no correlational information and downstream metrics must stay
    finite.
    """
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    if a.shape[0] != b.shape[0]:
        raise PreconditionError(
            f"pearson_corr: length mismatch {a.shape[0]} vs {b.shape[0]}"
        )
    if a.shape[0] < 2:
        raise PreconditionError("pearson_corr: need at least 2 entries")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.sum(da * da))
    nb = np.sqrt(np.sum(db * db))
    if na == 0.0 or nb == 0.0:
        return 0.0
    r = float(np.sum(da * db) / (na * nb))
    # Roundoff can push |r| a hair past 1.
    return float(np.clip(r, -1.0, 1.0))
