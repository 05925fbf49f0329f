"""Principal component reduction of output ensembles.

Fits the eigendecomposition of the sample covariance of a K x N ensemble,
selects the number of retained components by an explained-variance
threshold, and maps between original and reduced (score) spaces.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DegenerateData, DimensionMismatch, InsufficientSamples

# Use the K x K Gram matrix instead of the N x N covariance once outputs
# outnumber samples by this factor.
_GRAM_RATIO = 4


def select_components(eigenvalues, epsilon_dr: float) -> int:
    """Smallest N' whose leading eigenvalues explain >= (1 - epsilon_dr) of
    the total variance; never less than 1."""
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0.0 < epsilon_dr < 1.0:
        raise DimensionMismatch(f"epsilon_dr must be in (0, 1), got {epsilon_dr}")
    total = lam.sum()
    if total <= 0.0:
        raise DegenerateData("eigenvalue sum is not positive")
    share = np.cumsum(lam) / total
    return min(int(np.searchsorted(share, 1.0 - epsilon_dr) + 1), lam.size)


def reconstruction_error(Y, Y_re) -> float:
    """Centred relative squared reconstruction error
    ||Y - Y_re||_F^2 / ||Y - mean(Y)||_F^2."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Y_re = np.atleast_2d(np.asarray(Y_re, dtype=float))
    if Y.shape != Y_re.shape:
        raise DimensionMismatch(f"shape mismatch {Y.shape} vs {Y_re.shape}")
    denom = float(np.sum((Y - Y.mean(axis=0)) ** 2))
    if denom == 0.0:
        raise DegenerateData("ensemble has zero variance")
    return float(np.sum((Y - Y_re) ** 2)) / denom


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


class PcaReducer(BaseEstimator, TransformerMixin):
    """PCA transformer over row-wise output ensembles.

    Parameters
    ----------
    epsilon_dr : float
        Allowed unexplained-variance fraction; the number of retained
        components ``n_retained_`` is the smallest count whose eigenvalues
        explain at least ``1 - epsilon_dr`` of the total.
    n_components : int or None
        Fixed retained count overriding the threshold rule (e.g. the full
        N for lossless round trips).

    Attributes
    ----------
    mean_ : (N,) column means (divisor K).
    eigenvalues_ : (N,) covariance eigenvalues, descending, divisor K - 1.
    eigenvectors_ : (N, N) orthonormal eigenvector columns; columns past the
        ensemble rank complete the basis and carry eigenvalue 0.
    n_retained_ : retained component count N'.
    n_output_ : output dimension N.
    """

    def __init__(self, epsilon_dr: float = 0.02, n_components: int | None = None):
        self.epsilon_dr = epsilon_dr
        self.n_components = n_components

    def fit(self, Y, y=None):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        K, N = Y.shape
        if K < 2:
            raise InsufficientSamples(f"need at least 2 ensemble rows, got {K}")
        mean = Y.mean(axis=0)
        Yc = Y - mean
        total_var = float(np.sum(Yc**2)) / (K - 1)
        if total_var <= 1e-14 * float(np.mean(mean**2)) * N or total_var == 0.0:
            raise DegenerateData("ensemble variance is zero up to rounding")

        if N > _GRAM_RATIO * K:
            lam, vectors = self._eig_via_gram(Yc, K, N)
        else:
            lam, vectors = np.linalg.eigh(Yc.T @ Yc / (K - 1))
            lam = lam[::-1]
            vectors = vectors[:, ::-1]
        lam = np.maximum(lam, 0.0)

        self.mean_ = mean
        self.eigenvalues_ = lam
        self.eigenvectors_ = _fix_signs(vectors)
        self.n_output_ = N
        if self.n_components is not None:
            if not 1 <= self.n_components <= N:
                raise DimensionMismatch(
                    f"n_components must be in [1, {N}], got {self.n_components}"
                )
            self.n_retained_ = int(self.n_components)
        else:
            self.n_retained_ = select_components(lam, self.epsilon_dr)
        return self

    @staticmethod
    def _eig_via_gram(Yc: np.ndarray, K: int, N: int):
        # Duality trick: nonzero eigenpairs of Yc'Yc/(K-1) come from the
        # K x K Gram matrix; the basis is completed orthonormally by QR.
        gram_lam, gram_vec = np.linalg.eigh(Yc @ Yc.T / (K - 1))
        gram_lam = gram_lam[::-1]
        gram_vec = gram_vec[:, ::-1]
        keep = gram_lam > max(gram_lam[0], 0.0) * 1e-12
        gram_lam = gram_lam[keep]
        gram_vec = gram_vec[:, keep]
        data_vectors = (Yc.T @ gram_vec) / np.sqrt(gram_lam * (K - 1))
        r = data_vectors.shape[1]
        q, _ = np.linalg.qr(np.hstack([data_vectors, np.eye(N)]))
        vectors = np.hstack([data_vectors, q[:, r:N]])
        lam = np.concatenate([gram_lam, np.zeros(N - r)])
        return lam, vectors

    def transform(self, Y) -> np.ndarray:
        """Project rows onto the retained components: Z = (Y - mean) Phi_N'."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.n_output_:
            raise DimensionMismatch(
                f"rows have {Y.shape[1]} columns, basis expects {self.n_output_}"
            )
        return (Y - self.mean_) @ self.eigenvectors_[:, : self.n_retained_]

    def inverse_transform(self, Z) -> np.ndarray:
        """Reconstruct rows from scores: Y = mean + Z Phi_N'^T."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.n_retained_:
            raise DimensionMismatch(
                f"scores have {Z.shape[1]} columns, basis retains {self.n_retained_}"
            )
        return self.mean_ + Z @ self.eigenvectors_[:, : self.n_retained_].T
