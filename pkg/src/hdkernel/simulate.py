"""Synthetic spectra from a linear mixture of HDDA-distributed class signals.

Each sample is ``x = sum_i alpha_i s_i + noise`` where ``s_i`` is drawn from
class ``i``'s Gaussian with covariance ``Q_i Lambda_i Q_i^T + b_i (I - Q_i Q_i^T)``,
``alpha`` lies on the simplex, and the label is the index of the largest
mixture weight. Mean spectra are smooth sums of Gaussian bumps over a
normalized wavelength axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import Dataset
from .exceptions import ConfigError


def default_eigvals(p):
    """``10 * 0.8**k`` for ``k = 0..p-1``."""
    return 10.0 * 0.8 ** np.arange(p)


@dataclass(frozen=True)
class SimConfig:
    n_classes: int = 2
    d: int = 100
    p: int = 5
    snr: float = 1.0
    n_train: int = 200
    n_test: int = 500
    seed: int = 0
    eigvals: tuple | None = None
    noise_floor: float = 0.1

    def __post_init__(self):
        if self.n_classes < 1:
            raise ConfigError("n_classes must be >= 1")
        if not 1 <= self.p < self.d:
            raise ConfigError(f"need 1 <= p < d, got p={self.p}, d={self.d}")
        if not self.snr > 0:
            raise ConfigError("snr must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("sample counts must be >= 1")
        if not self.noise_floor > 0:
            raise ConfigError("noise floor must be positive")
        lam = self.signal_eigvals
        if lam.shape != (self.p,):
            raise ConfigError(f"need {self.p} signal eigenvalues, got {lam.size}")
        if np.any(np.diff(lam) >= 0) or lam[-1] <= self.noise_floor:
            raise ConfigError("signal eigenvalues must be strictly decreasing and above the noise floor")

    @property
    def signal_eigvals(self):
        if self.eigvals is None:
            return default_eigvals(self.p)
        return np.asarray(self.eigvals, dtype=np.float64)


@dataclass(frozen=True)
class GroundTruthModel:
    means: np.ndarray  # (n_classes, d)
    bases: np.ndarray  # (n_classes, d, p)
    eigvals: np.ndarray  # (n_classes, p)
    noise: np.ndarray  # (n_classes,)
    wavelength: np.ndarray = field(repr=False, default=None)

    @property
    def n_classes(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def covariance(self, c):
        """Dense covariance of class ``c`` (0-based)."""
        Q = self.bases[c]
        lam = self.eigvals[c]
        b = self.noise[c]
        return (Q * (lam - b)) @ Q.T + b * np.eye(self.d)


def _mean_spectrum(rng, grid):
    n_bumps = rng.integers(3, 7)
    centers = rng.uniform(0.0, 1.0, n_bumps)
    widths = rng.uniform(0.03, 0.2, n_bumps)
    amps = rng.uniform(0.2, 1.0, n_bumps)
    return np.sum(amps[:, None] * np.exp(-0.5 * ((grid[None, :] - centers[:, None]) / widths[:, None]) ** 2), axis=0)


def make_ground_truth(config, rng=None):
    """Draw per-class mean spectra and orthonormal signal bases."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    d, p, nc = config.d, config.p, config.n_classes
    grid = np.linspace(0.0, 1.0, d)
    means = np.empty((nc, d))
    bases = np.empty((nc, d, p))
    for c in range(nc):
        means[c] = _mean_spectrum(rng, grid)
        Q, R = np.linalg.qr(rng.standard_normal((d, p)))
        bases[c] = Q * np.sign(np.diag(R))
    eigvals = np.tile(config.signal_eigvals, (nc, 1))
    noise = np.full(nc, config.noise_floor)
    return GroundTruthModel(means, bases, eigvals, noise, grid)


def sample_signals(model, c, count, rng):
    """Pure class-``c`` (0-based) signals, shape ``(count, d)``."""
    Q = model.bases[c]
    b = model.noise[c]
    scale = np.sqrt(model.eigvals[c] - b)
    z_sig = rng.standard_normal((count, Q.shape[1]))
    z_iso = rng.standard_normal((count, model.d))
    return model.means[c] + (z_sig * scale) @ Q.T + np.sqrt(b) * z_iso


def signal_power(signal):
    """Mean per-coordinate power of a batch of signals around its mean."""
    centered = signal - signal.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1)) / signal.shape[1])


@dataclass(frozen=True)
class MixtureBatch:
    dataset: Dataset
    alpha: np.ndarray
    noise_var: float
    realized_snr: float


def sample_mixture(model, config, count, rng=None, alpha=None, noise_var=None):
    """Draw ``count`` mixed samples and their argmax-weight labels.

    Parameters
    ----------
    model : GroundTruthModel
    config : SimConfig
        Supplies the target SNR (and the seed when ``rng`` is omitted).
    count : int
    rng : numpy.random.Generator, optional
    alpha : array_like, optional
        Fixed mixture weights, either one vector for all samples or one row
        per sample. Defaults to flat-Dirichlet draws.
    noise_var : float, optional
        Additive noise variance. By default it is calibrated on the batch so
        that signal power over noise variance equals ``config.snr``.

    Returns
    -------
    MixtureBatch
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    nc, d = model.n_classes, model.d
    if alpha is None:
        alpha = rng.dirichlet(np.ones(nc), size=count)
    else:
        alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (count, nc)).copy()
    signal = np.zeros((count, d))
    for c in range(nc):
        signal += alpha[:, [c]] * sample_signals(model, c, count, rng)
    power = signal_power(signal) if count > 1 else float(np.mean(signal**2))
    if noise_var is None:
        noise_var = power / config.snr
    noise = rng.standard_normal((count, d)) * np.sqrt(noise_var)
    realized_noise = float(np.mean(noise * noise))
    realized = power / realized_noise if realized_noise > 0 else np.inf
    labels = np.argmax(alpha, axis=1) + 1  # argmax picks the lowest index on ties
    ds = Dataset(signal + noise, labels, {c: c for c in range(1, nc + 1)})
    return MixtureBatch(ds, alpha, float(noise_var), float(realized))


SCENARIOS = {
    "sim2": dict(n_classes=2, d=413, p=10, n_train=1000, n_test=1500),
    "sim3": dict(n_classes=3, d=413, p=10, n_train=1000, n_test=1500),
    "sim4": dict(n_classes=4, d=413, p=10, n_train=1000, n_test=1500),
    "sim-desk": dict(n_classes=2, d=100, p=5, n_train=200, n_test=500),
}


def scenario_config(name, seed=0, **overrides):
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return SimConfig(snr=1.0, seed=seed, **{**SCENARIOS[name], **overrides})


def generate(config):
    """Train and test datasets plus the ground truth, all from ``config.seed``."""
    model_ss, train_ss, test_ss = np.random.SeedSequence(config.seed).spawn(3)
    model = make_ground_truth(config, np.random.default_rng(model_ss))
    train = sample_mixture(model, config, config.n_train, np.random.default_rng(train_ss)).dataset
    test = sample_mixture(model, config, config.n_test, np.random.default_rng(test_ss)).dataset
    return train, test, model


def paper_scenario(name, seed=0):
    """Named configurations: ``sim2``/``sim3``/``sim4`` (d=413) and ``sim-desk``."""
    return generate(scenario_config(name, seed))


def with_seed(config, seed):
    return replace(config, seed=seed)
