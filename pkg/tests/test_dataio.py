import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hdkernel.classify import MulticlassModel, train_one_vs_all
from hdkernel.dataio import (
    MODEL_FORMAT,
    Dataset,
    SplitSpec,
    atomic_write_text,
    canonicalize_labels,
    load_dataset,
    load_dense_csv,
    load_feature_table,
    load_model,
    load_sparse_svmlight,
    save_model,
    split,
    write_dense_csv,
    write_svmlight,
)
from hdkernel.exceptions import (
    ConfigError,
    EmptyInputError,
    FormatError,
    IntegrityError,
    ParseError,
    UnsupportedVersionError,
)
from hdkernel.tune import TuneConfig

from conftest import toy_binary


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestDenseCsv:
    def test_small_file(self, tmp_path):
        ds = load_dense_csv(write(tmp_path, "a.csv", "1,0.5,0.5\n2,1.0,0.0\n1,0.0,1.0\n"))
        assert (ds.n_samples, ds.n_features) == (3, 2)
        assert ds.labels.tolist() == [1, 2, 1]
        np.testing.assert_array_equal(ds.features, [[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]])

    def test_ragged_row_names_line(self, tmp_path):
        with pytest.raises(FormatError) as err:
            load_dense_csv(write(tmp_path, "a.csv", "1,0.5,0.5\n2,1.0\n1,0.0,1.0\n"))
        assert err.value.line == 2
        assert "line 2" in str(err.value)

    def test_non_numeric_cell_coordinates(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_dense_csv(write(tmp_path, "a.csv", "1,0.5,0.5\n2,abc,0.0\n"))
        assert (err.value.line, err.value.column) == (2, 2)

    def test_bad_label(self, tmp_path):
        with pytest.raises(ParseError):
            load_dense_csv(write(tmp_path, "a.csv", "1.5,0.5\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyInputError):
            load_dense_csv(write(tmp_path, "a.csv", "\n\n"))

    def test_label_column_and_canonical_ids(self, tmp_path):
        ds = load_dense_csv(write(tmp_path, "a.csv", "0.1,7\n0.2,-1\n0.3,7\n"), label_column=-1)
        assert ds.labels.tolist() == [2, 1, 2]
        assert ds.label_map == {-1: 1, 7: 2}
        assert ds.original_labels().tolist() == [7, -1, 7]

    def test_header(self, tmp_path):
        ds = load_dense_csv(write(tmp_path, "a.csv", "y,a,b\n1,2,3\n"), header=True)
        assert ds.feature_names == ("a", "b")

    def test_label_column_out_of_range(self, tmp_path):
        with pytest.raises(ConfigError):
            load_dense_csv(write(tmp_path, "a.csv", "1,2\n"), label_column=5)


class TestSvmlight:
    def test_single_entry(self, tmp_path):
        ds = load_sparse_svmlight(write(tmp_path, "a.svm", "+1 3:2.5\n"))
        assert ds.is_sparse
        np.testing.assert_array_equal(ds.dense(), [[0.0, 0.0, 2.5]])
        assert ds.labels.tolist() == [1]

    def test_two_lines(self, tmp_path):
        ds = load_sparse_svmlight(write(tmp_path, "a.svm", "1 1:1\n-1 2:1\n"))
        np.testing.assert_array_equal(ds.dense(), [[1, 0], [0, 1]])
        assert ds.labels.tolist() == [2, 1]

    def test_decreasing_indices(self, tmp_path):
        with pytest.raises(FormatError):
            load_sparse_svmlight(write(tmp_path, "a.svm", "1 3:1 2:1\n"))

    def test_index_below_one(self, tmp_path):
        with pytest.raises(FormatError):
            load_sparse_svmlight(write(tmp_path, "a.svm", "1 0:1\n"))

    def test_feature_override(self, tmp_path):
        ds = load_sparse_svmlight(write(tmp_path, "a.svm", "1 2:1\n"), n_features=5)
        assert ds.n_features == 5
        with pytest.raises(FormatError):
            load_sparse_svmlight(write(tmp_path, "b.svm", "1 7:1\n"), n_features=5)

    def test_comments_and_dispatch(self, tmp_path):
        ds = load_dataset(write(tmp_path, "a.svm", "# header\n2 1:0.5 # tail\n"))
        assert ds.is_sparse and ds.n_samples == 1

    def test_matches_dense_loader(self, tmp_path):
        dense = load_dense_csv(write(tmp_path, "a.csv", "1,0,2.5\n-1,1,0\n"))
        sparse = load_sparse_svmlight(write(tmp_path, "a.svm", "1 2:2.5\n-1 1:1\n"))
        np.testing.assert_array_equal(dense.features, sparse.dense())
        np.testing.assert_array_equal(dense.labels, sparse.labels)
        assert dense.label_map == sparse.label_map


class TestFeatureTable:
    def test_two_file_layout(self, tmp_path):
        data = write(tmp_path, "x.data", "1 2 3\n4 5 6\n")
        labels = write(tmp_path, "x.labels", "1\n-1\n")
        ds = load_feature_table(data, labels)
        assert (ds.n_samples, ds.n_features) == (2, 3)
        assert ds.labels.tolist() == [2, 1]

    def test_count_mismatch(self, tmp_path):
        data = write(tmp_path, "x.data", "1 2\n4 5\n")
        labels = write(tmp_path, "x.labels", "1\n")
        with pytest.raises(FormatError):
            load_feature_table(data, labels)


class TestRoundTrip:
    def test_dense(self, tmp_path, rng):
        ds = Dataset(rng.standard_normal((6, 4)) * 1e-7, [3, 1, 3, 2, 1, 2], {10: 1, 20: 2, 30: 3})
        write_dense_csv(ds, tmp_path / "o.csv")
        back = load_dense_csv(tmp_path / "o.csv")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.label_map == ds.label_map

    def test_svmlight(self, tmp_path, rng):
        X = rng.standard_normal((5, 6)) * (rng.uniform(size=(5, 6)) < 0.4)
        ds = Dataset(sp.csr_matrix(X), [1, 2, 1, 2, 2])
        write_svmlight(ds, tmp_path / "o.svm")
        back = load_sparse_svmlight(tmp_path / "o.svm", n_features=6)
        np.testing.assert_array_equal(back.dense(), X)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=st.floats(-1e6, 1e6, allow_subnormal=False)))
    def test_dense_property(self, tmp_path_factory, X):
        path = tmp_path_factory.mktemp("rt") / "p.csv"
        ds = Dataset(X, [1, 2, 2, 1])
        write_dense_csv(ds, path)
        np.testing.assert_array_equal(load_dense_csv(path).features, X)

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write_text(tmp_path / "f.txt", "ok")
        assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


class TestCanonicalLabels:
    def test_sorted_order(self):
        labels, mapping = canonicalize_labels([5, -3, 5, 0])
        assert labels.tolist() == [3, 1, 3, 2]
        assert mapping == {-3: 1, 0: 2, 5: 3}

    def test_permutation_stable(self):
        a = canonicalize_labels([4, 9, 4])[1]
        b = canonicalize_labels([9, 4, 9])[1]
        assert a == b


class TestDataset:
    def test_immutable(self, rng):
        ds = Dataset(rng.standard_normal((3, 2)), [1, 2, 1])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_shape_checks(self):
        with pytest.raises(FormatError):
            Dataset(np.zeros((3, 2)), [1, 2])
        with pytest.raises(EmptyInputError):
            Dataset(np.zeros((0, 2)), [])


class TestSplit:
    def test_half(self, rng):
        ds = Dataset(rng.standard_normal((10, 2)), [1] * 5 + [2] * 5)
        tr, te = split(ds, SplitSpec(0.5, seed=0))
        assert tr.n_samples == 5 and te.n_samples == 5
        rows = {tuple(r) for r in tr.features} & {tuple(r) for r in te.features}
        assert not rows

    def test_stratified(self, rng):
        ds = Dataset(rng.standard_normal((10, 2)), [1] * 6 + [2] * 4)
        tr, _ = split(ds, SplitSpec(0.5, seed=3, stratified=True))
        assert np.sum(tr.labels == 1) == 3 and np.sum(tr.labels == 2) == 2

    def test_deterministic(self, rng):
        ds = Dataset(rng.standard_normal((20, 2)), [1, 2] * 10)
        a, _ = split(ds, SplitSpec(0.3, seed=9))
        b, _ = split(ds, SplitSpec(0.3, seed=9))
        np.testing.assert_array_equal(a.features, b.features)

    def test_empty_side(self, rng):
        ds = Dataset(rng.standard_normal((3, 2)), [1, 2, 1])
        with pytest.raises(ConfigError):
            split(ds, SplitSpec(0.05))

    def test_explicit_indices(self, rng):
        ds = Dataset(rng.standard_normal((5, 2)), [1, 2, 1, 2, 1])
        tr, te = split(ds, SplitSpec(None, train_indices=(0, 1), test_indices=(2, 3, 4)))
        assert tr.n_samples == 2 and te.n_samples == 3
        with pytest.raises(ConfigError):
            split(ds, SplitSpec(None, train_indices=(0, 1), test_indices=(1, 2)))


@pytest.fixture
def trained(rng):
    X, y = toy_binary(rng, n=40, d=4)
    ds = Dataset(X, np.where(y > 0, 2, 1))
    return train_one_vs_all(ds, "hdda-mahalanobis", tune_config=TuneConfig(max_iter=5), p_override=2), X


class TestModelFile:
    def test_roundtrip_bit_identical(self, tmp_path, trained, rng):
        model, _ = trained
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        probes = rng.standard_normal((100, 4))
        np.testing.assert_array_equal(back.decision_values(probes), model.decision_values(probes))
        assert back.classes == model.classes

    def test_tampered_payload(self, tmp_path, trained):
        model, _ = trained
        path = tmp_path / "m.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        doc["payload"]["classifiers"][0]["bias"] += 1.0
        path.write_text(json.dumps(doc))
        with pytest.raises(IntegrityError):
            load_model(path)

    def test_truncated(self, tmp_path, trained):
        model, _ = trained
        path = tmp_path / "m.json"
        save_model(model, path)
        path.write_text(path.read_text()[:-50])
        with pytest.raises(IntegrityError):
            load_model(path)

    def test_version_mismatch(self, tmp_path, trained):
        model, _ = trained
        path = tmp_path / "m.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        assert doc["format"] == MODEL_FORMAT
        doc["format"] = "hdkernel-model/99"
        path.write_text(json.dumps(doc))
        with pytest.raises(UnsupportedVersionError):
            load_model(path)

    def test_empty_bundle(self, tmp_path):
        save_model(MulticlassModel(()), tmp_path / "e.json")
        back = load_model(tmp_path / "e.json")
        assert back.classifiers == ()
