"""Kernel hyperparameter selection by descent on the radius-margin bound.

The bound is ``T = R^2 * M^2`` where ``M^2`` comes from the L2-SVM dual
optimum and ``R^2`` from the enclosing-ball problem, both on the regularized
Gram matrix ``K + I/C``. By the envelope theorem the gradient needs only the
optimal dual variables, not their derivatives.

Descent runs in log coordinates ``(log C, log w_1, ..., log w_L)`` with
``w = 1/sigma^2``, which keeps every hyperparameter positive.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, NotConvergedError
from .kernels import (
    GAUSSIAN,
    HDDA_MAHALANOBIS,
    PCA_MAHALANOBIS,
    KernelSpec,
    distance_components,
    kernel_from_components,
)
from .qp import DEFAULT_TOL, RadiusSolution, SvmSolution, solve_radius, solve_svm_dual

logger = logging.getLogger(__name__)


class RadiusMargin(NamedTuple):
    T: float
    svm: SvmSolution
    radius: RadiusSolution


def radius_margin(K_tilde, y, tol=DEFAULT_TOL, max_iter=None, alpha0=None, beta0=None):
    """Solve both dual problems and return ``T = R^2 M^2`` with the solutions."""
    svm = solve_svm_dual(K_tilde, y, tol=tol, max_iter=max_iter, alpha0=alpha0)
    rad = solve_radius(K_tilde, tol=tol, max_iter=max_iter, beta0=beta0)
    return RadiusMargin(rad.radius_sq * svm.margin_sq, svm, rad)


def _weighted_sums(components, K, u, v=None):
    """``sum_ij u_i v_j K_ij D_l,ij`` for every component ``l``, restricted to the supports."""
    v = u if v is None else v
    iu = np.flatnonzero(u != 0)
    iv = np.flatnonzero(v != 0)
    S = np.outer(u[iu], v[iv]) * K[np.ix_(iu, iv)]
    return np.einsum("lij,ij->l", components[:, iu][:, :, iv], S)


def _bound_gradient(components, K, y, weights, C, svm, rad):
    """Gradient of T with respect to ``(C, w_1..w_L)``."""
    R2, M2 = rad.radius_sq, svm.margin_sq
    a, b = svm.alpha, rad.beta
    dR_dC = np.sum(b * (b - 1.0)) / C**2
    dM_dC = np.sum(a * a) / C**2
    # dK/dw_l = -1/2 D_l * K
    dR_dw = 0.5 * _weighted_sums(components, K, b)
    ay = a * y
    dM_dw = 0.5 * _weighted_sums(components, K, ay)
    dT_dC = dR_dC * M2 + R2 * dM_dC
    dT_dw = dR_dw * M2 + R2 * dM_dw
    return dT_dC, dT_dw


def grad_T(K_tilde, y, spec, C, svm, radius, train_X=None, components=None):
    """Gradient of the radius-margin bound over ``[C, sigma^2_1, ..., sigma^2_L]``.

    Parameters
    ----------
    K_tilde : ndarray, shape (n, n)
        Regularized Gram matrix at which ``svm`` and ``radius`` were solved.
    y : ndarray of {-1, +1}
    spec : KernelSpec
    C : float
    svm, radius : SvmSolution, RadiusSolution
        Converged solutions for ``K_tilde``.
    train_X : array_like, optional
        Training samples; needed unless ``components`` is given.
    components : ndarray, optional
        Precomputed :func:`~hdkernel.kernels.distance_components` of ``train_X``.

    Notes
    -----
    Entries for switched-off terms (``sigma^2 = inf``) are 0.
    """
    if not (svm.converged and radius.converged):
        raise NotConvergedError("gradient formulas need converged dual solutions")
    if components is None:
        if train_X is None:
            raise ConfigError("need train_X or precomputed components")
        components = distance_components(spec, train_X)
    y = np.asarray(y, dtype=np.float64)
    K = np.asarray(K_tilde) - np.eye(K_tilde.shape[0]) / C
    w = spec.weights
    dT_dC, dT_dw = _bound_gradient(components, K, y, w, C, svm, radius)
    # d/dsigma^2 = -w^2 d/dw
    return np.concatenate([[dT_dC], -(w * w) * dT_dw])


@dataclass(frozen=True)
class TuneConfig:
    """Descent settings. Step sizes act on log-hyperparameters."""

    step0: float = 1.0
    backtrack: float = 0.5
    max_halvings: int = 20
    max_log_step: float = 2.0
    rel_tol: float = 1e-4
    patience: int = 3
    grad_tol: float = 1e-5
    max_iter: int = 100
    multi_start: int = 1
    qp_tol: float = DEFAULT_TOL
    qp_max_iter: int | None = None
    seed: int = 0
    log_C_bounds: tuple = (math.log(1e-3), math.log(1e5))
    log_weight_bounds: tuple = (-40.0, 40.0)

    def __post_init__(self):
        if not 0 < self.backtrack < 1:
            raise ConfigError("backtrack factor must be in (0, 1)")
        if self.max_iter < 0 or self.multi_start < 1:
            raise ConfigError("max_iter must be >= 0 and multi_start >= 1")
        if not self.step0 > 0:
            raise ConfigError("step0 must be positive")


@dataclass(frozen=True)
class TuningVector:
    """Log-hyperparameters. ``-inf`` marks a kernel term that is switched off."""

    log_weights: np.ndarray
    log_C: float = 0.0

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=np.float64).ravel()
        if np.any(np.isnan(lw)) or np.any(lw == np.inf) or not math.isfinite(self.log_C):
            raise ConfigError("tuning vector entries must be finite (or -inf for a switched-off term)")
        object.__setattr__(self, "log_weights", lw)

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def C(self):
        return math.exp(self.log_C)

    @property
    def active(self):
        return np.isfinite(self.log_weights)

    @classmethod
    def from_sigma2(cls, sigma2, C=1.0):
        with np.errstate(divide="ignore"):
            return cls(-np.log(np.asarray(sigma2, dtype=np.float64)), math.log(C))


class TraceRecord(NamedTuple):
    iteration: int
    T: float
    R2: float
    M2: float
    step: float
    grad_norm: float
    log_C: float
    log_weights: tuple


@dataclass
class TuningTrace:
    records: list = field(default_factory=list)
    reason: str | None = None
    start: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def T(self):
        return np.array([r.T for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iteration,T,R2,M2,step,grad_norm,log_C\n")
        for r in self.records:
            buf.write(f"{r.iteration},{r.T!r},{r.R2!r},{r.M2!r},{r.step!r},{r.grad_norm!r},{r.log_C!r}\n")
        return buf.getvalue()

    def to_dict(self):
        return {
            "reason": self.reason,
            "start": self.start,
            "records": [list(r[:7]) + [list(r.log_weights)] for r in self.records],
        }

    @classmethod
    def from_dict(cls, obj):
        recs = [TraceRecord(int(r[0]), *map(float, r[1:7]), tuple(r[7])) for r in obj["records"]]
        return cls(recs, obj["reason"], obj.get("start", 0))


@dataclass
class TuningResult:
    spec: KernelSpec
    C: float
    trace: TuningTrace
    svm: SvmSolution
    radius: RadiusSolution

    def __iter__(self):
        return iter((self.spec, self.C, self.trace))


def template_spec(family, model=None):
    """A kernel of the given family with unit weights, for component layout."""
    if family == GAUSSIAN:
        return KernelSpec(GAUSSIAN, [1.0])
    if model is None:
        raise ConfigError(f"{family} kernel needs an HDDA class model")
    if family == HDDA_MAHALANOBIS:
        return KernelSpec(family, np.ones(model.p_hat + 1), model)
    if family == PCA_MAHALANOBIS:
        return KernelSpec(family, np.ones(model.p_hat), model)
    raise ConfigError(f"unknown kernel family {family!r}")


def _random_pairs(n, count, rng):
    i = rng.integers(0, n, size=4 * count)
    j = rng.integers(0, n, size=4 * count)
    keep = i != j
    return i[keep][:count], j[keep][:count]


def initial_vector(family, components, model=None, seed=0):
    """Starting point: ``C = 1`` and a bandwidth from the data.

    Gaussian uses the median pairwise squared distance. The Mahalanobis
    families set ``sigma^2_i = lambda_i * rho`` (and ``b * d * rho`` for the
    isotropic term), with ``rho`` making the mean exponent over 100 random
    training pairs equal to -1.
    """
    n = components.shape[1]
    if family == GAUSSIAN:
        D = components[-1][np.triu_indices(n, 1)]
        med = float(np.median(D)) if D.size else 1.0
        return TuningVector.from_sigma2([med if med > 0 else 1.0])
    lam = np.asarray(model.eigvals, dtype=np.float64)
    base = lam if family == PCA_MAHALANOBIS else np.append(lam, model.noise * model.d)
    if n < 2:
        return TuningVector.from_sigma2(base)
    rng = np.random.default_rng(seed)
    i, j = _random_pairs(n, 100, rng)
    expo = 0.5 * np.mean((1.0 / base) @ components[:, i, j])
    rho = expo if expo > 0 else 1.0
    return TuningVector.from_sigma2(base * rho)


class _BoundEvaluator:
    """Rebuilds the Gram matrix for a tuning vector and re-solves both QPs."""

    def __init__(self, components, y, config):
        self.components = components
        self.y = np.asarray(y, dtype=np.float64)
        self.config = config
        self.alpha = None
        self.beta = None
        self.n = components.shape[1]

    def __call__(self, tv, warm=True):
        w = tv.weights
        C = tv.C
        K = kernel_from_components(w, self.components)
        Kt = K.copy()
        Kt[np.diag_indices(self.n)] += 1.0 / C
        cfg = self.config
        rm = radius_margin(
            Kt,
            self.y,
            tol=cfg.qp_tol,
            max_iter=cfg.qp_max_iter,
            alpha0=self.alpha if warm else None,
            beta0=self.beta if warm else None,
        )
        if not (rm.svm.converged and rm.radius.converged) and warm:
            rm = radius_margin(Kt, self.y, tol=cfg.qp_tol, max_iter=10 * (cfg.qp_max_iter or 100 * self.n))
        return rm, K

    def gradient(self, tv, rm, K):
        """Gradient in log coordinates ``(log C, log w)``; 0 on switched-off terms."""
        w = tv.weights
        dT_dC, dT_dw = _bound_gradient(self.components, K, self.y, w, tv.C, rm.svm, rm.radius)
        return tv.C * dT_dC, w * dT_dw

    def remember(self, rm):
        self.alpha = rm.svm.alpha
        self.beta = rm.radius.beta


def _clip(tv, config):
    lw = tv.log_weights.copy()
    act = np.isfinite(lw)
    lw[act] = np.clip(lw[act], *config.log_weight_bounds)
    return TuningVector(lw, float(np.clip(tv.log_C, *config.log_C_bounds)))


def _descend(evaluator, init, config, template, start=0):
    trace = TuningTrace(start=start)
    tv = _clip(init, config)
    rm, K = evaluator(tv, warm=False)
    if not (rm.svm.converged and rm.radius.converged):
        raise NotConvergedError("QP solvers did not converge at the initial hyperparameters")
    evaluator.remember(rm)
    best = (tv, rm)
    active = tv.active
    gC, gw = evaluator.gradient(tv, rm, K)
    g = np.concatenate([[gC], np.where(active, gw, 0.0)])
    trace.records.append(
        TraceRecord(0, rm.T, rm.radius.radius_sq, rm.svm.margin_sq, 0.0, float(np.abs(g).max()), tv.log_C, tuple(tv.log_weights))
    )
    step = config.step0
    quiet = 0
    reason = "max-iter"
    for it in range(1, config.max_iter + 1):
        gnorm = float(np.abs(g).max())
        if gnorm < config.grad_tol:
            reason = "gradient-tol"
            break
        gamma = step
        accepted = None
        for _ in range(config.max_halvings + 1):
            delta = -gamma * g
            biggest = np.abs(delta).max()
            if biggest > config.max_log_step:
                delta *= config.max_log_step / biggest
            lw = tv.log_weights.copy()
            lw[active] += delta[1:][active]
            cand = _clip(TuningVector(lw, tv.log_C + delta[0]), config)
            cand_rm, cand_K = evaluator(cand)
            if cand_rm.svm.converged and cand_rm.radius.converged and cand_rm.T < rm.T:
                accepted = (cand, cand_rm, cand_K)
                break
            gamma *= config.backtrack
        if accepted is None:
            reason = "line-search-failure"
            break
        prev_T = rm.T
        tv, rm, K = accepted
        evaluator.remember(rm)
        best = (tv, rm)
        gC, gw = evaluator.gradient(tv, rm, K)
        g = np.concatenate([[gC], np.where(active, gw, 0.0)])
        trace.records.append(
            TraceRecord(it, rm.T, rm.radius.radius_sq, rm.svm.margin_sq, gamma, float(np.abs(g).max()), tv.log_C, tuple(tv.log_weights))
        )
        # next iteration starts one expansion above the accepted step
        step = min(config.step0, gamma / config.backtrack)
        if (prev_T - rm.T) / prev_T < config.rel_tol:
            quiet += 1
            if quiet >= config.patience:
                reason = "relative-T-tol"
                break
        else:
            quiet = 0
    trace.reason = reason
    tv, rm = best
    spec = template.with_weights(tv.weights)
    return TuningResult(spec, tv.C, trace, rm.svm, rm.radius)


def optimize(train_X, y, family, model=None, init=None, config=None, components=None):
    """Tune kernel weights and ``C`` by backtracking descent on ``T``.

    Parameters
    ----------
    train_X : array_like, shape (n, d)
    y : array_like of {-1, +1}
    family : str
        One of :data:`~hdkernel.kernels.FAMILIES`.
    model : HddaClassModel, optional
        Required for the Mahalanobis families.
    init : TuningVector, optional
        Defaults to :func:`initial_vector`.
    config : TuneConfig, optional
    components : ndarray, optional
        Precomputed distance components of ``train_X``.

    Returns
    -------
    TuningResult
        Unpacks as ``(spec, C, trace)``. Holds the lowest ``T`` seen; the
        dual solutions at that point are attached.
    """
    config = config or TuneConfig()
    template = template_spec(family, model)
    if components is None:
        components = distance_components(template, train_X)
    y = np.asarray(y, dtype=np.float64)
    if init is None:
        init = initial_vector(family, components, model, seed=config.seed)
    if init.log_weights.size != template.weights.size:
        raise ConfigError(f"{family} needs {template.weights.size} weights, init has {init.log_weights.size}")
    rng = np.random.default_rng(config.seed)
    best = None
    for start in range(config.multi_start):
        if start == 0:
            start_tv = init
        else:
            jitter = rng.standard_normal(init.log_weights.size + 1)
            start_tv = TuningVector(init.log_weights + jitter[1:], init.log_C + jitter[0])
        evaluator = _BoundEvaluator(components, y, config)
        result = _descend(evaluator, start_tv, config, template, start)
        logger.debug("start %d: T=%.6g after %d records (%s)", start, result.trace.T[-1], len(result.trace), result.trace.reason)
        if best is None or result.trace.T[-1] < best.trace.T[-1]:
            best = result
    return best


def with_config(config, **changes):
    return replace(config, **changes)
