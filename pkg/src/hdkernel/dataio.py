"""Datasets: loading, writing, splitting, and model-bundle serialization.

Two on-disk tabular formats are supported:

* dense CSV, one sample per row, the label in a selectable column;
* SVM-light, ``<label> <idx>:<value> ...`` with strictly increasing
  1-based indices.

Labels are canonicalized on load: the sorted distinct original labels are
mapped onto ``1..n_classes``, and the mapping is kept on the dataset so the
original values can be written back.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    ConfigError,
    EmptyInputError,
    FormatError,
    IntegrityError,
    ParseError,
    UnsupportedVersionError,
)

MODEL_FORMAT = "hdkernel-model/1"


def _parse_label(token):
    try:
        return int(token)
    except ValueError:
        value = float(token)
        if not value.is_integer():
            raise ValueError(f"label {token!r} is not an integer") from None
        return int(value)


def canonicalize_labels(raw_labels):
    """Map arbitrary integer labels onto ``1..N`` in ascending order.

    Returns
    -------
    labels : ndarray of int
    label_map : dict
        original label -> canonical id.
    """
    raw = np.asarray(raw_labels, dtype=np.int64)
    originals = np.unique(raw)
    label_map = {int(v): i + 1 for i, v in enumerate(originals)}
    labels = np.searchsorted(originals, raw) + 1
    return labels.astype(np.int64), label_map


@dataclass(frozen=True)
class Dataset:
    """Labeled samples, dense or sparse.

    ``labels`` are canonical class ids (``1..n_classes``). ``label_map``
    records the original label of each canonical id.
    """

    features: np.ndarray | sp.csr_matrix
    labels: np.ndarray
    label_map: dict = field(default_factory=dict)
    feature_names: tuple | None = None

    def __post_init__(self):
        X = self.features
        if sp.issparse(X):
            X = sp.csr_matrix(X, dtype=np.float64)
        else:
            X = np.array(X, dtype=np.float64)
            if X.ndim != 2:
                raise FormatError(f"features must be 2-D, got shape {X.shape}")
            X.setflags(write=False)
        y = np.array(self.labels, dtype=np.int64).ravel()
        y.setflags(write=False)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise EmptyInputError("dataset needs at least one sample and one feature")
        if y.shape[0] != X.shape[0]:
            raise FormatError(f"{X.shape[0]} samples but {y.shape[0]} labels")
        label_map = dict(self.label_map) or {int(c): int(c) for c in np.unique(y)}
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "label_map", label_map)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != X.shape[1]:
                raise FormatError("feature_names length does not match feature count")
            object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def classes(self):
        return np.unique(self.labels)

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def is_sparse(self):
        return sp.issparse(self.features)

    def dense(self):
        """Features as a dense ndarray."""
        if self.is_sparse:
            return self.features.toarray()
        return self.features

    def original_labels(self):
        inverse = {v: k for k, v in self.label_map.items()}
        return np.array([inverse.get(int(c), int(c)) for c in self.labels], dtype=np.int64)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.label_map,
            self.feature_names,
        )


def _read_lines(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise EmptyInputError(f"{path}: file is empty")
    return lines


def load_dense_csv(path, label_column=0, header=False, delimiter=","):
    """Read a dense table with one label column.

    Parameters
    ----------
    path : str or Path
    label_column : int
        Index of the label column; negative values count from the end.
    header : bool
        Skip the first line and use it as feature names.
    delimiter : str or None
        Field separator; ``None`` splits on runs of whitespace.
    """
    lines = _read_lines(path)
    names = None
    start = 0
    if header:
        start = 1
        names = _split(lines[0], delimiter)
    rows = []
    width = None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        fields = _split(line, delimiter)
        if width is None:
            width = len(fields)
            if width < 2:
                raise FormatError("need a label column and at least one feature", line=lineno)
        elif len(fields) != width:
            raise FormatError(f"expected {width} fields, found {len(fields)}", line=lineno)
        rows.append((lineno, fields))
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")

    col = label_column if label_column >= 0 else width + label_column
    if not 0 <= col < width:
        raise ConfigError(f"label column {label_column} out of range for {width} fields")

    X = np.empty((len(rows), width - 1))
    raw = np.empty(len(rows), dtype=np.int64)
    for r, (lineno, fields) in enumerate(rows):
        try:
            raw[r] = _parse_label(fields[col])
        except ValueError:
            raise ParseError(f"bad label {fields[col]!r}", line=lineno, column=col + 1) from None
        k = 0
        for c, tok in enumerate(fields):
            if c == col:
                continue
            try:
                X[r, k] = float(tok)
            except ValueError:
                raise ParseError(f"non-numeric value {tok!r}", line=lineno, column=c + 1) from None
            k += 1
    labels, label_map = canonicalize_labels(raw)
    if names is not None:
        names = [n for c, n in enumerate(names) if c != col]
        if len(names) != X.shape[1]:
            raise FormatError("header width does not match data", line=1)
    return Dataset(X, labels, label_map, names)


def _split(line, delimiter):
    if delimiter is None:
        return line.split()
    return [f.strip() for f in next(csv.reader([line], delimiter=delimiter))]


def load_sparse_svmlight(path, n_features=None):
    """Read an SVM-light file into a CSR-backed dataset.

    ``n_features`` overrides the inferred dimension (largest index seen).
    """
    lines = _read_lines(path)
    data, indices, indptr, raw = [], [], [0], []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw.append(_parse_label(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", line=lineno, column=1) from None
        prev = 0
        for pos, tok in enumerate(tokens[1:], start=2):
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise FormatError(f"expected idx:value, got {tok!r}", line=lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad entry {tok!r}", line=lineno, column=pos) from None
            if idx < 1:
                raise FormatError(f"index {idx} < 1", line=lineno)
            if idx <= prev:
                raise FormatError(f"indices not strictly increasing ({prev} then {idx})", line=lineno)
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))
    if not raw:
        raise EmptyInputError(f"{path}: no data rows")
    d = max_index if n_features is None else int(n_features)
    if d < max_index:
        raise FormatError(f"index {max_index} exceeds n_features={d}")
    X = sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(raw), max(d, 1)),
    )
    labels, label_map = canonicalize_labels(raw)
    return Dataset(X, labels, label_map)


def load_feature_table(data_path, labels_path, delimiter=None):
    """Read features and labels stored in two files (NIPS challenge layout).

    The data file holds one whitespace- (or ``delimiter``-) separated row per
    sample, the labels file one integer per line.
    """
    lines = _read_lines(data_path)
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = _split(line, delimiter)
        if rows and len(fields) != len(rows[0]):
            raise FormatError(f"expected {len(rows[0])} fields, found {len(fields)}", line=lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            bad = next(c for c, f in enumerate(fields) if not _is_float(f))
            raise ParseError(f"non-numeric value {fields[bad]!r}", line=lineno, column=bad + 1) from None
    raw = []
    for lineno, line in enumerate(_read_lines(labels_path), start=1):
        if line.strip():
            try:
                raw.append(_parse_label(line.strip()))
            except ValueError:
                raise ParseError(f"bad label {line.strip()!r}", line=lineno, column=1) from None
    if len(raw) != len(rows):
        raise FormatError(f"{len(rows)} data rows but {len(raw)} labels")
    labels, label_map = canonicalize_labels(raw)
    return Dataset(np.array(rows), labels, label_map)


def _is_float(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_dataset(path, label_column=0, header=False, n_features=None):
    """Dispatch on file extension: ``.svm``/``.svmlight``/``.libsvm``/``.txt`` are sparse."""
    suffix = Path(path).suffix.lower()
    if suffix in {".svm", ".svmlight", ".libsvm"}:
        return load_sparse_svmlight(path, n_features=n_features)
    return load_dense_csv(path, label_column=label_column, header=header)


def atomic_write_text(path, text):
    """Write to a temporary sibling and rename, so no partial file survives a failure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dense_csv(dataset, path, header=False):
    """Write label first, then features, at full (round-trip) precision."""
    X = dataset.dense()
    original = dataset.original_labels()
    out = []
    if header:
        names = dataset.feature_names or tuple(f"f{j + 1}" for j in range(X.shape[1]))
        out.append(",".join(("label",) + tuple(names)))
    for label, row in zip(original, X):
        out.append(",".join([str(int(label))] + [repr(float(v)) for v in row]))
    atomic_write_text(path, "\n".join(out) + "\n")


def write_svmlight(dataset, path):
    X = sp.csr_matrix(dataset.features)
    original = dataset.original_labels()
    out = []
    for r in range(X.shape[0]):
        start, stop = X.indptr[r], X.indptr[r + 1]
        cols = X.indices[start:stop]
        vals = X.data[start:stop]
        order = np.argsort(cols)
        parts = [str(int(original[r]))]
        parts += [f"{c + 1}:{float(v)!r}" for c, v in zip(cols[order], vals[order]) if v != 0]
        out.append(" ".join(parts))
    atomic_write_text(path, "\n".join(out) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    """How to split a dataset.

    Either ``train_fraction`` or both explicit index lists must be given.
    """

    train_fraction: float | None = 0.5
    seed: int = 0
    stratified: bool = False
    train_indices: tuple | None = None
    test_indices: tuple | None = None


def split(dataset, spec=None):
    """Split into (train, test) according to ``spec``; deterministic given the seed."""
    spec = spec or SplitSpec()
    n = dataset.n_samples
    if spec.train_indices is not None or spec.test_indices is not None:
        if spec.train_indices is None or spec.test_indices is None:
            raise ConfigError("explicit splits need both train and test indices")
        train = np.asarray(spec.train_indices, dtype=np.int64)
        test = np.asarray(spec.test_indices, dtype=np.int64)
        if np.intersect1d(train, test).size:
            raise ConfigError("train and test indices overlap")
        if train.size and (train.min() < 0 or train.max() >= n) or test.size and (
            test.min() < 0 or test.max() >= n
        ):
            raise ConfigError("split index out of range")
    else:
        frac = spec.train_fraction
        if frac is None or not 0.0 < frac < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {frac}")
        rng = np.random.default_rng(spec.seed)
        if spec.stratified:
            train_parts, test_parts = [], []
            for c in dataset.classes:
                idx = np.flatnonzero(dataset.labels == c)
                idx = idx[rng.permutation(idx.size)]
                k = int(np.floor(frac * idx.size + 0.5))
                train_parts.append(idx[:k])
                test_parts.append(idx[k:])
            train = np.sort(np.concatenate(train_parts))
            test = np.sort(np.concatenate(test_parts))
        else:
            perm = rng.permutation(n)
            k = int(np.floor(frac * n + 0.5))
            train, test = np.sort(perm[:k]), np.sort(perm[k:])
    if train.size == 0 or test.size == 0:
        raise ConfigError("split leaves one side empty")
    return dataset.subset(train), dataset.subset(test)


# -- array / model serialization -------------------------------------------


def encode_array(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "dtype": str(a.dtype), "data": a.ravel().tolist()}


def decode_array(obj):
    return np.array(obj["data"], dtype=obj.get("dtype", "float64")).reshape(obj["shape"])


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_model(bundle, path):
    """Serialize a model bundle (anything with ``to_dict``) as checksummed JSON."""
    payload = bundle.to_dict()
    body = _canonical(payload)
    doc = {
        "format": MODEL_FORMAT,
        "length": len(body),
        "sha256": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        "payload": payload,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True))


def load_model(path):
    """Inverse of :func:`save_model`; returns a :class:`~hdkernel.classify.MulticlassModel`."""
    from .classify import MulticlassModel

    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: not a complete model document ({exc.msg})") from None
    if not isinstance(doc, dict) or "format" not in doc:
        raise IntegrityError(f"{path}: missing format field")
    if doc["format"] != MODEL_FORMAT:
        raise UnsupportedVersionError(f"{path}: unsupported model format {doc['format']!r}")
    try:
        payload = doc["payload"]
        body = _canonical(payload)
        if len(body) != doc["length"]:
            raise IntegrityError(f"{path}: length mismatch")
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != doc["sha256"]:
            raise IntegrityError(f"{path}: checksum mismatch")
    except KeyError as exc:
        raise IntegrityError(f"{path}: missing field {exc}") from None
    return MulticlassModel.from_dict(payload)
