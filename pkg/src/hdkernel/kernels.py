"""Gaussian, PCA-Mahalanobis and HDDA-Mahalanobis kernels.

All three families share one form::

    k(x, z) = exp(-1/2 * sum_l w_l * D_l(x, z))

where the squared-distance components ``D_l`` are the projections
``(q_l^T (x - z))**2`` on a class signal basis followed, for the Gaussian and
HDDA families, by the full squared Euclidean distance. Weights are stored as
inverse variances ``w = 1/sigma^2`` so that ``w = 0`` encodes an infinite
bandwidth exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, DimensionMismatchError
from .hdda import HddaClassModel

GAUSSIAN = "gaussian"
PCA_MAHALANOBIS = "pca-mahalanobis"
HDDA_MAHALANOBIS = "hdda-mahalanobis"
FAMILIES = (GAUSSIAN, PCA_MAHALANOBIS, HDDA_MAHALANOBIS)

# Exponents below this are flushed to a kernel value of exactly 0.
MIN_EXPONENT = -700.0
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """An immutable kernel: family, inverse-variance weights, and class model.

    Weight layout: HDDA ``[w_1..w_p, w_noise]``, PCA ``[w_1..w_p]``,
    Gaussian ``[w]``.
    """

    family: str
    weights: np.ndarray
    model: HddaClassModel | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        w = np.array(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError("kernel weights must be finite and non-negative")
        if self.family == GAUSSIAN:
            expected = 1
        else:
            if self.model is None:
                raise ConfigError(f"{self.family} kernel needs an HDDA class model")
            expected = self.model.p_hat + (1 if self.family == HDDA_MAHALANOBIS else 0)
        if w.size != expected:
            raise ConfigError(f"{self.family} kernel needs {expected} weights, got {w.size}")
        if self.family != PCA_MAHALANOBIS and not w[-1] > 0:
            raise ConfigError("the isotropic (noise) weight must be strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def gaussian(cls, sigma2):
        return cls(GAUSSIAN, [1.0 / sigma2])

    @classmethod
    def hdda_mahalanobis(cls, model, sigma2):
        """``sigma2`` has ``p_hat + 1`` entries; ``np.inf`` switches a term off."""
        return cls(HDDA_MAHALANOBIS, 1.0 / np.asarray(sigma2, dtype=np.float64), model)

    @classmethod
    def pca_mahalanobis(cls, model, sigma2):
        return cls(PCA_MAHALANOBIS, 1.0 / np.asarray(sigma2, dtype=np.float64), model)

    @property
    def sigma2(self):
        with np.errstate(divide="ignore"):
            return 1.0 / self.weights

    @property
    def n_signal(self):
        return 0 if self.model is None else self.model.p_hat

    @property
    def has_isotropic_term(self):
        return self.family != PCA_MAHALANOBIS

    @property
    def d(self):
        return None if self.model is None else self.model.d

    def with_weights(self, weights):
        return KernelSpec(self.family, weights, self.model)

    def to_dict(self):
        from .dataio import encode_array

        return {
            "family": self.family,
            "weights": encode_array(self.weights),
            "model": None if self.model is None else self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj):
        from .dataio import decode_array

        model = None if obj["model"] is None else HddaClassModel.from_dict(obj["model"])
        return cls(obj["family"], decode_array(obj["weights"]).reshape(-1), model)


def _check_dims(spec, *arrays):
    d = spec.d
    for a in arrays:
        if d is not None and a.shape[-1] != d:
            raise DimensionMismatchError(f"kernel expects {d} features, got {a.shape[-1]}")


def _exp_of(exponent):
    exponent = np.asarray(exponent)
    out = np.exp(np.maximum(exponent, MIN_EXPONENT))
    return np.where(exponent < MIN_EXPONENT, 0.0, out)


def pair_components(spec, x, z):
    """Squared-distance components ``D_l(x, z)`` for one pair, in weight order."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise DimensionMismatchError(f"shape mismatch {x.shape} vs {z.shape}")
    _check_dims(spec, x)
    delta = x - z
    parts = []
    if spec.model is not None:
        parts.append((delta @ spec.model.basis) ** 2)
    if spec.has_isotropic_term:
        parts.append(np.atleast_1d(delta @ delta))
    return np.concatenate(parts)


def evaluate(spec, x, z):
    """Kernel value for a single pair of samples."""
    return float(_exp_of(-0.5 * (spec.weights @ pair_components(spec, x, z))))


def product_form(spec, x, z):
    """HDDA kernel as a product of one-dimensional and full Gaussian kernels.

    Used as an independent check of :func:`evaluate`.
    """
    if spec.family not in (HDDA_MAHALANOBIS, PCA_MAHALANOBIS):
        raise ConfigError("product form is defined for the Mahalanobis families")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    _check_dims(spec, x, z)
    Q = spec.model.basis
    value = 1.0
    if spec.has_isotropic_term:
        diff = x - z
        value = float(np.exp(-0.5 * spec.weights[-1] * (diff @ diff)))
    for i in range(spec.n_signal):
        t = Q[:, i] @ x - Q[:, i] @ z
        value *= float(np.exp(-0.5 * spec.weights[i] * t * t))
    return value


def _sq_norms(X):
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _sq_euclidean(X, Z, Xn=None, Zn=None):
    Xn = _sq_norms(X) if Xn is None else Xn
    Zn = _sq_norms(Z) if Zn is None else Zn
    cross = X @ Z.T
    if sp.issparse(cross):
        cross = cross.toarray()
    D = Xn[:, None] + Zn[None, :] - 2.0 * np.asarray(cross)
    np.maximum(D, 0.0, out=D)
    return D


def _as_matrix(X):
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def distance_components(spec, X, Z=None):
    """Stack of squared-distance components, shape ``(n_weights, n, m)``.

    With ``Z`` omitted the stack is computed for ``X`` against itself and each
    slice is exactly symmetric with a zero diagonal.
    """
    X = _as_matrix(X)
    symmetric = Z is None
    Z = X if symmetric else _as_matrix(Z)
    _check_dims(spec, X, Z)
    parts = []
    if spec.model is not None:
        PX = spec.model.project(X)
        PZ = PX if symmetric else spec.model.project(Z)
        diff = PX.T[:, :, None] - PZ.T[:, None, :]
        parts.append(diff * diff)
    if spec.has_isotropic_term:
        D = _sq_euclidean(X, Z)
        if symmetric:
            D = np.triu(D, 1)
            D = D + D.T
        parts.append(D[None])
    return np.concatenate(parts, axis=0)


def kernel_from_components(weights, components):
    """``exp(-1/2 * sum_l w_l D_l)`` for a precomputed component stack."""
    return _exp_of(-0.5 * np.tensordot(weights, components, axes=1))


def _gram_block(spec, X, Z, PX, PZ, Xn, Zn):
    E = np.zeros((X.shape[0], Z.shape[0]))
    if PX is not None:
        for ell in range(spec.n_signal):
            w = spec.weights[ell]
            if w == 0.0:
                continue
            diff = PX[:, ell][:, None] - PZ[:, ell][None, :]
            E += w * (diff * diff)
    if spec.has_isotropic_term:
        E += spec.weights[-1] * _sq_euclidean(X, Z, Xn, Zn)
    return _exp_of(-0.5 * E)


def gram(spec, X, Z=None):
    """Gram matrix ``K[i, j] = k(X[i], Z[j])``.

    Without ``Z`` the result is symmetric by construction (upper triangle
    mirrored) with a unit diagonal. Large ``Z`` is processed in row blocks.
    """
    X = _as_matrix(X)
    _check_dims(spec, X)
    PX = spec.model.project(X) if spec.model is not None else None
    Xn = _sq_norms(X)
    if Z is None:
        K = _gram_block(spec, X, X, PX, PX, Xn, Xn)
        K = np.triu(K, 1)
        K = K + K.T
        np.fill_diagonal(K, 1.0)
        return K
    Z = _as_matrix(Z)
    _check_dims(spec, Z)
    blocks = []
    for start in range(0, Z.shape[0], _CHUNK):
        Zb = Z[start : start + _CHUNK]
        PZ = spec.model.project(Zb) if spec.model is not None else None
        blocks.append(_gram_block(spec, X, Zb, PX, PZ, Xn, _sq_norms(Zb)))
    return np.concatenate(blocks, axis=1)


def gram_regularized(spec, X, C):
    """Gram matrix with ``1/C`` added to the diagonal."""
    if not C > 0:
        raise ConfigError(f"C must be positive, got {C}")
    K = gram(spec, X)
    K[np.diag_indices_from(K)] += 1.0 / C
    return K


def kernel_grad_sigma(spec, x_i, x_j, ell):
    """Derivative of ``k(x_i, x_j)`` with respect to ``sigma^2_ell`` (1-based).

    ``dk/dsigma^2 = D_ell / (2 sigma^4) * k``; zero when the term is switched
    off (``w = 0``) or the pair coincides.
    """
    L = spec.weights.size
    if not 1 <= ell <= L:
        raise ConfigError(f"ell must be in [1, {L}], got {ell}")
    comps = pair_components(spec, x_i, x_j)
    w = spec.weights[ell - 1]
    k = float(_exp_of(-0.5 * (spec.weights @ comps)))
    return 0.5 * comps[ell - 1] * w * w * k


def metric_tensor(spec, x=None):
    """Riemannian metric induced by the kernel; constant in ``x`` here.

    Gaussian gives ``w I``; HDDA gives ``sum_l w_l q_l q_l^T + w_noise I``.
    """
    if spec.family == GAUSSIAN:
        if x is None:
            raise ConfigError("the Gaussian metric needs x to know the dimension")
        d = np.asarray(x).shape[-1]
        return spec.weights[0] * np.eye(d)
    if spec.family != HDDA_MAHALANOBIS:
        raise ConfigError(f"metric tensor not provided for {spec.family}")
    Q = spec.model.basis
    return (Q * spec.weights[:-1]) @ Q.T + spec.weights[-1] * np.eye(spec.model.d)
