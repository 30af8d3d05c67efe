"""One-vs-all training with class-specific kernels, prediction and scoring.

For the Mahalanobis families each binary problem "class c vs rest" uses a
kernel built from the HDDA model of class c alone, so the classifiers are
not interchangeable and one-vs-one decompositions are not offered.
"""

from __future__ import annotations

import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset, decode_array, encode_array
from .exceptions import ConfigError, DimensionMismatchError, EmptyInputError, InsufficientSamplesError
from .hdda import fit_hdda
from .kernels import FAMILIES, GAUSSIAN, KernelSpec, gram
from .qp import sign
from .tune import TuneConfig, TuningTrace, optimize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BinaryClassifier:
    """Trained "positive_class vs rest" L2-SVM.

    Only the support vectors are kept; ``coef`` holds ``alpha_i * y_i``.
    """

    positive_class: int
    spec: KernelSpec
    C: float
    coef: np.ndarray
    bias: float
    support_vectors: np.ndarray
    trace: TuningTrace | None = None
    n_train: int = 0

    def decision(self, X):
        X = _as_2d(X)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatchError(
                f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}"
            )
        if self.coef.size == 0:
            return np.full(X.shape[0], self.bias)
        return self.coef @ gram(self.spec, self.support_vectors, X) + self.bias

    @property
    def n_support(self):
        return self.coef.size

    def to_dict(self):
        return {
            "positive_class": int(self.positive_class),
            "spec": self.spec.to_dict(),
            "C": float(self.C),
            "coef": encode_array(self.coef),
            "bias": float(self.bias),
            "support_vectors": encode_array(self.support_vectors),
            "trace": None if self.trace is None else self.trace.to_dict(),
            "n_train": int(self.n_train),
        }

    @classmethod
    def from_dict(cls, obj):
        sv = decode_array(obj["support_vectors"])
        return cls(
            obj["positive_class"],
            KernelSpec.from_dict(obj["spec"]),
            obj["C"],
            decode_array(obj["coef"]).reshape(-1),
            obj["bias"],
            sv.reshape(obj["support_vectors"]["shape"]),
            None if obj["trace"] is None else TuningTrace.from_dict(obj["trace"]),
            obj["n_train"],
        )


def _as_2d(X):
    if sp.issparse(X):
        return X
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = X.toarray() if sp.issparse(X) else np.asarray(X)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(X.mean(axis=0), scale)

    def transform(self, X):
        X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        return (X - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class MulticlassModel:
    """One binary classifier per class, plus optional feature standardization."""

    classifiers: tuple
    family: str = GAUSSIAN
    standardizer: Standardizer | None = None
    n_features: int | None = None
    label_map: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict, compare=False)

    @property
    def classes(self):
        return [c.positive_class for c in self.classifiers]

    @property
    def hdda_models(self):
        return [c.spec.model for c in self.classifiers if c.spec.model is not None]

    def _prepare(self, X):
        X = _as_2d(X)
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"model expects d={self.n_features}, data has d={X.shape[1]}")
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return X

    def decision_values(self, X):
        """Scores, shape ``(n_samples, n_classes)``, columns ordered as :attr:`classes`."""
        X = self._prepare(X)
        if not self.classifiers:
            return np.zeros((X.shape[0], 0))
        return np.column_stack([clf.decision(X) for clf in self.classifiers])

    def predict_signs(self, X):
        return sign(self.decision_values(X))

    def predict_fused(self, X):
        """Argmax over one-vs-all scores. Not part of the per-class reports."""
        scores = self.decision_values(X)
        return np.asarray(self.classes)[np.argmax(scores, axis=1)]

    def to_dict(self):
        std = None
        if self.standardizer is not None:
            std = {"mean": encode_array(self.standardizer.mean), "scale": encode_array(self.standardizer.scale)}
        return {
            "family": self.family,
            "n_features": self.n_features,
            "label_map": [[int(k), int(v)] for k, v in sorted(self.label_map.items())],
            "standardizer": std,
            "classifiers": [c.to_dict() for c in self.classifiers],
        }

    @classmethod
    def from_dict(cls, obj):
        std = obj.get("standardizer")
        if std is not None:
            std = Standardizer(decode_array(std["mean"]), decode_array(std["scale"]))
        return cls(
            tuple(BinaryClassifier.from_dict(c) for c in obj["classifiers"]),
            obj["family"],
            std,
            obj["n_features"],
            {k: v for k, v in obj["label_map"]},
        )


def _worker_count(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("HDKERNEL_THREADS")
    return max(1, int(env)) if env else 1


def _train_binary(X, labels, c, family, scree_s, tune_config, p_override):
    yb = np.where(labels == c, 1.0, -1.0)
    model = None
    t0 = time.perf_counter()
    if family != GAUSSIAN:
        members = X[labels == c]
        if members.shape[0] < 3:
            raise InsufficientSamplesError(f"class {c} has {members.shape[0]} samples; need at least 3")
        model = fit_hdda(members, s=scree_s, p_override=p_override, class_id=int(c))
        if model.noise_floored:
            logger.warning("class %s: degenerate HDDA fit, continuing with floored noise", c)
    t_fit = time.perf_counter() - t0
    result = optimize(X, yb, family, model=model, config=tune_config)
    t_tune = time.perf_counter() - t0 - t_fit
    sv = result.svm.support_indices
    clf = BinaryClassifier(
        positive_class=int(c),
        spec=result.spec,
        C=result.C,
        coef=result.svm.alpha[sv] * yb[sv],
        bias=result.svm.bias,
        support_vectors=np.ascontiguousarray(X[sv].toarray() if sp.issparse(X) else X[sv]),
        trace=result.trace,
        n_train=X.shape[0],
    )
    return clf, {"hdda_fit": t_fit, "tuning": t_tune}


def train_one_vs_all(
    train,
    family,
    scree_s=0.1,
    tune_config=None,
    p_override=None,
    standardize=False,
    n_jobs=None,
):
    """Fit one tuned binary classifier per class.

    Parameters
    ----------
    train : Dataset
    family : str
        Kernel family; the Mahalanobis families fit an HDDA model on the
        positive-class samples of each binary problem.
    scree_s : float
        Scree-test threshold (fraction of the largest eigenvalue gap).
    tune_config : TuneConfig, optional
    p_override : int or dict, optional
        Fixed signal dimension, for all classes or per class id.
    standardize : bool
        Zero-mean, unit-variance features using training-set constants.
    n_jobs : int, optional
        Worker threads; defaults to ``$HDKERNEL_THREADS`` or 1.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown kernel family {family!r}")
    if train.n_classes < 2:
        raise InsufficientSamplesError("one-vs-all training needs at least two classes")
    tune_config = tune_config or TuneConfig()
    X = train.features
    standardizer = None
    if standardize:
        standardizer = Standardizer.fit(X)
        X = standardizer.transform(X)
    elif sp.issparse(X) and family != GAUSSIAN:
        X = X.toarray()
    labels = train.labels

    def task(c):
        p = p_override.get(int(c)) if isinstance(p_override, dict) else p_override
        return _train_binary(X, labels, c, family, scree_s, tune_config, p)

    classes = [int(c) for c in train.classes]
    workers = _worker_count(n_jobs)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(task, classes))
    else:
        results = [task(c) for c in classes]
    timing = {c: t for c, (_, t) in zip(classes, results)}
    return MulticlassModel(
        tuple(clf for clf, _ in results),
        family,
        standardizer,
        train.n_features,
        dict(train.label_map),
        timing,
    )


def predict_binary(classifier, X):
    """``(signs, scores)`` of one binary classifier; ties map to ``+1``."""
    scores = classifier.decision(X)
    return sign(scores), scores


@dataclass
class EvaluationReport:
    """Per-class one-vs-all accuracies in percent, plus a fused argmax view."""

    family: str
    classes: list
    per_class_accuracy: dict
    mean_accuracy: float
    confusion: np.ndarray
    fused_accuracy: float
    n_test: int
    timing: dict = field(default_factory=dict)
    p_hat: dict = field(default_factory=dict)

    def render_table(self):
        width = max(len(self.family), 8)
        head = f"{'kernel':<{width}}" + "".join(f" {'class ' + str(c):>9}" for c in self.classes) + f" {'mean':>9}"
        row = f"{self.family:<{width}}" + "".join(f" {self.per_class_accuracy[c]:9.1f}" for c in self.classes)
        row += f" {self.mean_accuracy:9.1f}"
        lines = [head, row]
        if self.p_hat:
            lines.append("p_hat: " + ", ".join(f"{c}={p}" for c, p in self.p_hat.items()))
        if self.timing:
            lines.append("time [s]: " + ", ".join(f"{k}={v:.2f}" for k, v in self.timing.items()))
        lines.append(f"fused argmax accuracy (not a per-class figure): {self.fused_accuracy:.1f}")
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("kernel," + ",".join(f"class_{c}" for c in self.classes) + ",mean\n")
        buf.write(self.family + "," + ",".join(repr(self.per_class_accuracy[c]) for c in self.classes))
        buf.write(f",{self.mean_accuracy!r}\n")
        return buf.getvalue()


def evaluate(model, test):
    """Score each "c vs rest" classifier against the matching binary ground truth."""
    if test.n_samples == 0:
        raise EmptyInputError("empty test set")
    t0 = time.perf_counter()
    scores = model.decision_values(test.features)
    t_pred = time.perf_counter() - t0
    signs = sign(scores)
    classes = model.classes
    per_class = {}
    for k, c in enumerate(classes):
        truth = np.where(test.labels == c, 1, -1)
        per_class[c] = 100.0 * float(np.mean(signs[:, k] == truth))
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    index = {c: k for k, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    fused_ok = 0
    if classes:
        fused = np.asarray(classes)[np.argmax(scores, axis=1)]
        for t, f in zip(test.labels, fused):
            if int(t) in index:
                confusion[index[int(t)], index[int(f)]] += 1
        fused_ok = int(np.sum(fused == test.labels))
    timing = {"predict": t_pred}
    for c, t in model.timing.items():
        for k, v in t.items():
            timing[k] = timing.get(k, 0.0) + v
    p_hat = {clf.positive_class: clf.spec.model.p_hat for clf in model.classifiers if clf.spec.model is not None}
    return EvaluationReport(
        model.family,
        list(classes),
        per_class,
        mean,
        confusion,
        100.0 * fused_ok / test.n_samples,
        test.n_samples,
        timing,
        p_hat,
    )
