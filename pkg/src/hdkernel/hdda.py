"""Per-class parsimonious covariance model (signal subspace + isotropic noise).

A class covariance is approximated by its ``p`` leading eigenpairs and a
single noise level ``b`` shared by the remaining ``d - p`` directions, which
makes the inverse explicit::

    inv(Sigma) = sum_i (1/lambda_i - 1/b) q_i q_i^T + I / b

Only the leading eigenpairs are ever stored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .exceptions import ConfigError, DimensionMismatchError, InsufficientSamplesError

logger = logging.getLogger(__name__)

# Eigenvalues below this fraction of the largest are treated as exact zeros.
RANK_TOL = 1e-12


def _orient(basis):
    """Flip columns so the largest-magnitude component of each is positive."""
    if basis.size == 0:
        return basis
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


@dataclass(frozen=True)
class SpectrumEstimate:
    eigvals: np.ndarray
    basis: np.ndarray
    trace: float
    mean: np.ndarray
    n_samples: int


def _as_dense(samples):
    if sp.issparse(samples):
        return samples.toarray()
    return np.asarray(samples, dtype=np.float64)


def estimate_spectrum(samples, m=None):
    """Top eigenpairs of the sample covariance (normalized by ``1/n``).

    When ``d > n`` the decomposition goes through the ``n x n`` centered Gram
    matrix and the eigenvectors are mapped back with ``q = Xc^T u / |Xc^T u|``.

    Parameters
    ----------
    samples : array_like, shape (n, d)
    m : int, optional
        Number of eigenpairs to return; defaults to all available
        (``min(d, n)``).

    Returns
    -------
    SpectrumEstimate
    """
    X = _as_dense(samples)
    if X.ndim != 2:
        raise DimensionMismatchError("samples must be a 2-D array")
    n, d = X.shape
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {n}")
    m = min(d, n) if m is None else int(m)
    if m < 1:
        raise ConfigError("m must be >= 1")
    m = min(m, d, n)

    mean = X.mean(axis=0)
    Xc = X - mean
    trace = float(np.sum(Xc * Xc) / n)

    if d <= n:
        cov = (Xc.T @ Xc) / n
        vals, vecs = scipy.linalg.eigh(cov, subset_by_index=(d - m, d - 1))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        vals = np.where(vals < 0, 0.0, vals)
    else:
        gram = (Xc @ Xc.T) / n
        vals, vecs = scipy.linalg.eigh(gram, subset_by_index=(n - m, n - 1))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        vals = np.where(vals < 0, 0.0, vals)
        mapped = Xc.T @ vecs
        norms = np.linalg.norm(mapped, axis=0)
        good = vals > RANK_TOL * vals[0] if vals[0] > 0 else np.zeros(m, dtype=bool)
        good &= norms > 0
        basis = np.zeros((d, m))
        basis[:, good] = mapped[:, good] / norms[good]
        if not good.all():
            # null directions: complete to an orthonormal set
            k = int(good.sum())
            seed = np.eye(d)[:, : m - k]
            comp = seed - basis[:, :k] @ (basis[:, :k].T @ seed)
            comp, _ = np.linalg.qr(comp)
            basis[:, k:] = comp
            vals[k:] = 0.0
        vecs = basis

    return SpectrumEstimate(vals, _orient(vecs), trace, mean, n)


class ScreeResult(NamedTuple):
    p_hat: int
    gaps: np.ndarray
    threshold: float
    degenerate: bool


def scree_select(eigvals, s):
    """Cattell scree test on consecutive eigenvalue gaps.

    With ``gaps[i] = lambda_i - lambda_{i+1}`` and ``tau = s * max(gaps)``,
    returns the smallest (1-based) ``i`` such that every gap from ``i`` on is
    below ``tau``, clamped to ``[1, len - 1]``. Eigenvalues below
    ``1e-12 * lambda_1`` are dropped before the gaps are formed.

    Examples
    --------
    >>> scree_select([100, 50, 10, 1, 0.9, 0.8, 0.7], 0.1).p_hat
    4
    """
    if not 0.0 < s < 1.0:
        raise ConfigError(f"scree threshold must be in (0, 1), got {s}")
    lam = np.asarray(eigvals, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 2:
        raise ConfigError("scree test needs at least two eigenvalues")
    if np.any(np.diff(lam) > 0):
        raise ConfigError("eigenvalues must be sorted in descending order")
    if lam[0] > 0:
        lam = lam[lam > RANK_TOL * lam[0]]
    if lam.size < 2:
        return ScreeResult(1, np.zeros(0), 0.0, True)
    gaps = lam[:-1] - lam[1:]
    top = gaps.max()
    if top <= 0:
        return ScreeResult(1, gaps, 0.0, True)
    tau = s * top
    large = np.flatnonzero(gaps >= tau)
    p_hat = int(large[-1]) + 2  # 1-based index just after the last large gap
    p_hat = min(max(p_hat, 1), lam.size - 1)
    return ScreeResult(p_hat, gaps, float(tau), False)


@dataclass(frozen=True)
class HddaClassModel:
    """Fitted signal subspace and noise level for one class."""

    class_id: int
    d: int
    p_hat: int
    eigvals: np.ndarray
    basis: np.ndarray
    noise: float
    mean: np.ndarray
    n_samples: int
    noise_floored: bool = False
    scree: ScreeResult | None = field(default=None, compare=False)

    def __post_init__(self):
        # C order so that a decoded model reproduces BLAS results bit for bit
        for name in ("eigvals", "basis", "mean"):
            arr = np.array(getattr(self, name), dtype=np.float64, order="C")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.basis.shape != (self.d, self.p_hat):
            raise DimensionMismatchError(
                f"basis shape {self.basis.shape} does not match (d, p_hat)=({self.d}, {self.p_hat})"
            )
        if self.eigvals.shape != (self.p_hat,):
            raise DimensionMismatchError("eigvals length must equal p_hat")
        if not self.noise > 0:
            raise ConfigError("noise level must be positive")

    @classmethod
    def from_covariance_parts(cls, eigvals, basis, noise, mean=None, class_id=1, n_samples=0):
        """Build a model directly from known (lambda, Q, b)."""
        basis = np.asarray(basis, dtype=np.float64)
        d = basis.shape[0]
        mean = np.zeros(d) if mean is None else mean
        return cls(class_id, d, basis.shape[1], np.asarray(eigvals, float), basis, float(noise), mean, n_samples)

    def inverse_covariance(self):
        """Dense ``d x d`` inverse; for oracles and small ``d`` only."""
        Q = self.basis
        coef = 1.0 / self.eigvals - 1.0 / self.noise
        return (Q * coef) @ Q.T + np.eye(self.d) / self.noise

    def project(self, X):
        """Coordinates of the rows of ``X`` on the signal basis."""
        if sp.issparse(X):
            return np.asarray(X @ self.basis)
        return np.asarray(X, dtype=np.float64) @ self.basis

    def to_dict(self):
        from .dataio import encode_array

        return {
            "class_id": int(self.class_id),
            "d": int(self.d),
            "p_hat": int(self.p_hat),
            "eigvals": encode_array(self.eigvals),
            "basis": encode_array(self.basis),
            "noise": float(self.noise),
            "mean": encode_array(self.mean),
            "n_samples": int(self.n_samples),
            "noise_floored": bool(self.noise_floored),
        }

    @classmethod
    def from_dict(cls, obj):
        from .dataio import decode_array

        return cls(
            obj["class_id"],
            obj["d"],
            obj["p_hat"],
            decode_array(obj["eigvals"]).reshape(-1),
            decode_array(obj["basis"]).reshape(obj["d"], obj["p_hat"]),
            obj["noise"],
            decode_array(obj["mean"]),
            obj["n_samples"],
            obj["noise_floored"],
        )


def fit_hdda(samples, s=0.1, p_override=None, class_id=1):
    """Estimate the HDDA model of one class.

    The signal dimension comes from :func:`scree_select` on the positive part
    of the spectrum unless ``p_override`` is given. The noise level is
    ``(trace - sum(lambda_1..lambda_p)) / (d - p)``, floored at
    ``max(1e-12, 1e-8 * lambda_1)``.
    """
    X = _as_dense(samples)
    n, d = X.shape
    if n < 3:
        raise InsufficientSamplesError(f"class {class_id}: need at least 3 samples, got {n}")
    limit = min(d, n)
    if p_override is not None and not 1 <= p_override < limit:
        raise ConfigError(f"p_override must be in [1, {limit - 1}], got {p_override}")

    spec = estimate_spectrum(X)
    scree = None
    if p_override is None:
        positive = spec.eigvals[spec.eigvals > 0]
        if positive.size >= 2:
            scree = scree_select(positive, s)
            p_hat = scree.p_hat
        else:
            scree = ScreeResult(1, np.zeros(0), 0.0, True)
            p_hat = 1
        p_hat = min(p_hat, limit - 1)
    else:
        p_hat = int(p_override)

    lam = spec.eigvals[:p_hat].copy()
    lam1 = lam[0] if lam.size else 0.0
    floor = max(1e-12, 1e-8 * lam1)
    noise = (spec.trace - lam.sum()) / (d - p_hat)
    floored = False
    if noise < floor:
        noise = floor
        floored = True
    if np.any(lam <= floor):
        lam = np.maximum(lam, floor)
        floored = True
    if floored:
        logger.warning("class %s: degenerate spectrum, noise level floored at %g", class_id, floor)
    return HddaClassModel(
        class_id=class_id,
        d=d,
        p_hat=p_hat,
        eigvals=lam,
        basis=spec.basis[:, :p_hat],
        noise=float(noise),
        mean=spec.mean,
        n_samples=n,
        noise_floored=floored,
        scree=scree,
    )


def mahalanobis_sq(model, x, z):
    """Squared parsimonious Mahalanobis distance between ``x`` and ``z``.

    Accepts 1-D vectors or row-aligned 2-D arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape or x.shape[-1] != model.d:
        raise DimensionMismatchError(f"expected vectors of length {model.d}, got {x.shape} and {z.shape}")
    delta = x - z
    proj = delta @ model.basis
    coef = 1.0 / model.eigvals - 1.0 / model.noise
    return proj**2 @ coef + np.sum(delta * delta, axis=-1) / model.noise


def hdda_param_count(d, p):
    """Free parameters of the HDDA covariance model: ``d(p+1) + 1 - p(p-1)/2``."""
    if not 0 <= p < d:
        raise ConfigError("need 0 <= p < d")
    return d * (p + 1) + 1 - p * (p - 1) // 2


def full_param_count(d):
    """Mean plus full covariance: ``d(d+3)/2``."""
    return d * (d + 3) // 2
