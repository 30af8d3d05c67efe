"""Dual quadratic programs of the L2-SVM and of the minimal enclosing ball.

Both are instances of::

    min_a  1/2 a^T Q a + p^T a    s.t.  y^T a = delta,  a >= 0

with no upper bound on ``a`` (the L2 penalty lives in the regularized Gram
matrix). They are solved by the same two-coordinate (SMO) method with
second-order working-set selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .kernels import gram

DEFAULT_TOL = 1e-6
_TAU = 1e-12


@dataclass(frozen=True)
class SvmSolution:
    alpha: np.ndarray
    bias: float
    objective: float
    margin_sq: float
    kkt_residual: float
    iterations: int
    converged: bool

    @property
    def support_indices(self):
        return np.flatnonzero(self.alpha > 0)


@dataclass(frozen=True)
class RadiusSolution:
    beta: np.ndarray
    radius_sq: float
    kkt_residual: float
    iterations: int
    converged: bool


def _check_square(K):
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {K.shape}")
    if not np.array_equal(K, K.T):
        scale = max(np.abs(K).max(), 1.0)
        if np.abs(K - K.T).max() > 1e-12 * scale:
            raise ConfigError("kernel matrix is not symmetric")
    return K


def smo(Q, p, y, a0, tol, max_iter):
    """Two-coordinate descent for the generic problem in the module docstring.

    ``a0`` must be feasible. Returns ``(a, grad, gap, iterations, converged)``
    where ``gap`` is the maximal KKT violation ``m(a) - M(a)``.
    """
    n = Q.shape[0]
    a = np.array(a0, dtype=np.float64)
    G = Q @ a + p
    pos = y > 0
    neg = ~pos
    diagQ = np.diag(Q).copy()
    it = 0
    gap = np.inf
    while True:
        v = -y * G
        active = a > 0
        up = pos | active
        low = neg | active
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        m = v_up[i]
        v_low = np.where(low, v, np.inf)
        M = v_low.min()
        gap = m - M
        if gap <= tol:
            # refresh the incrementally updated gradient before accepting
            G_fresh = Q @ a + p
            if np.allclose(G_fresh, G, rtol=0.0, atol=0.1 * tol):
                return a, G_fresh, gap, it, True
            G = G_fresh
            continue
        if it >= max_iter:
            return a, G, gap, it, False

        # second-order choice of j among violating lower-set indices
        b = m - v
        cand = low & (b > 0)
        curv = diagQ[i] + diagQ - 2.0 * y[i] * y * Q[i]
        curv = np.where(curv > 0, curv, _TAU)
        score = np.where(cand, -(b * b) / curv, np.inf)
        j = int(np.argmin(score))

        ai, aj = a[i], a[j]
        Qi, Qj = Q[i], Q[j]
        if y[i] != y[j]:
            quad = diagQ[i] + diagQ[j] + 2.0 * Qi[j]
            quad = quad if quad > 0 else _TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            new_i, new_j = ai + delta, aj + delta
            if diff > 0:
                if new_j < 0:
                    new_j, new_i = 0.0, diff
            elif new_i < 0:
                new_i, new_j = 0.0, -diff
        else:
            quad = diagQ[i] + diagQ[j] - 2.0 * Qi[j]
            quad = quad if quad > 0 else _TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            new_i, new_j = ai - delta, aj + delta
            if new_j < 0:
                new_j, new_i = 0.0, total
            if new_i < 0:
                new_i, new_j = 0.0, total
        di, dj = new_i - ai, new_j - aj
        a[i], a[j] = new_i, new_j
        G += Qi * di + Qj * dj
        it += 1


def svm_objective(alpha, K_tilde, y):
    """Dual objective ``sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij``."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K_tilde @ ay)


def radius_objective(beta, K_tilde):
    return float(beta @ np.diag(K_tilde) - beta @ K_tilde @ beta)


def solve_svm_dual(K_tilde, y, tol=DEFAULT_TOL, max_iter=None, alpha0=None):
    """Solve the L2-SVM dual on a regularized Gram matrix.

    Parameters
    ----------
    K_tilde : ndarray, shape (n, n)
        ``K + I / C``.
    y : ndarray of {-1, +1}
    tol : float
        Stopping threshold on the maximal KKT violation.
    max_iter : int, optional
        Defaults to ``100 * n``. When reached, the current iterate is returned
        with ``converged=False``.
    alpha0 : ndarray, optional
        Feasible warm start (``alpha >= 0``, ``sum(alpha * y) = 0``).

    Returns
    -------
    SvmSolution
        ``margin_sq`` is ``2 sum(a) - a^T Y K Y a`` evaluated at the solution.
    """
    K = _check_square(K_tilde)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = K.shape[0]
    if y.shape[0] != n:
        raise ConfigError("label vector length does not match the kernel matrix")
    if not np.all(np.abs(y) == 1):
        raise ConfigError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ConfigError("both classes must be present")
    max_iter = 100 * n if max_iter is None else int(max_iter)
    if alpha0 is None:
        alpha0 = np.zeros(n)
    else:
        alpha0 = np.maximum(np.asarray(alpha0, dtype=np.float64), 0.0)
        if abs(alpha0 @ y) > 1e-10 * max(alpha0.sum(), 1.0):
            alpha0 = np.zeros(n)
    Q = (y[:, None] * y[None, :]) * K
    alpha, G, gap, it, ok = smo(Q, -np.ones(n), y, alpha0, tol, max_iter)

    sv = alpha > 0
    if sv.any():
        bias = float(np.mean(-y[sv] * G[sv]))
    else:
        # no support vectors yet: midpoint of the feasible bias interval
        v = -y * G
        bias = float(0.5 * (v[y > 0].max() + v[y < 0].min()))
    objective = svm_objective(alpha, K, y)
    return SvmSolution(alpha, bias, objective, 2.0 * objective, float(gap), it, ok)


def solve_radius(K_tilde, tol=DEFAULT_TOL, max_iter=None, beta0=None):
    """Squared radius of the smallest ball enclosing the feature-space images.

    Maximizes ``beta^T diag(K) - beta^T K beta`` over the simplex.
    """
    K = _check_square(K_tilde)
    n = K.shape[0]
    max_iter = 100 * n if max_iter is None else int(max_iter)
    if beta0 is None:
        beta0 = np.full(n, 1.0 / n)
    else:
        beta0 = np.maximum(np.asarray(beta0, dtype=np.float64), 0.0)
        total = beta0.sum()
        beta0 = beta0 / total if total > 0 else np.full(n, 1.0 / n)
    if n == 1:
        return RadiusSolution(np.ones(1), 0.0, 0.0, 0, True)
    beta, _, gap, it, ok = smo(2.0 * K, -np.diag(K).copy(), np.ones(n), beta0, tol, max_iter)
    return RadiusSolution(beta, radius_objective(beta, K), float(gap), it, ok)


def decision_function(solution, kernel_spec, train_X, y, z):
    """``f(z) = sum_i alpha_i y_i k(x_i, z) + b`` over the support vectors.

    Uses the unregularized kernel. ``z`` may be one sample or a 2-D batch.
    """
    z = np.asarray(z, dtype=np.float64) if not hasattr(z, "tocsr") else z
    single = getattr(z, "ndim", 2) == 1
    sv = solution.support_indices
    y = np.asarray(y, dtype=np.float64)
    coef = solution.alpha[sv] * y[sv]
    Z = z[None, :] if single else z
    if sv.size == 0:
        scores = np.full(Z.shape[0], solution.bias)
    else:
        scores = coef @ gram(kernel_spec, train_X[sv], Z) + solution.bias
    return float(scores[0]) if single else scores


def sign(scores):
    """Binary labels from decision values; ties go to ``+1``."""
    return np.where(np.asarray(scores) >= 0, 1, -1)
