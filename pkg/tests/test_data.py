import numpy as np
import pytest

from ppadmm import data
from ppadmm.errors import EmptyAfterFiltering, TooManyNodes, UnknownLabelValue

from conftest import FIXTURES


def _schema():
    return data.Schema.load(FIXTURES / "hand5_schema.json")


def test_missing_rows_dropped_and_columns_named():
    raw = data.RawTable.read_csv(FIXTURES / "hand5.csv", _schema())
    assert len(raw.rows) == 5
    ds, cols = data.preprocess(raw, return_columns=True)
    assert ds.B == 4
    assert cols == ["age", "sex=Female", "sex=Male", "hours"]


def test_all_missing_and_unknown_label():
    sch = _schema()
    with pytest.raises(EmptyAfterFiltering):
        data.preprocess(data.RawTable([["?", "Male", "1", ">50K"]], sch))
    with pytest.raises(UnknownLabelValue):
        data.preprocess(data.RawTable([["1", "Male", "1", "maybe"]], sch))


def test_schema_needs_one_label():
    with pytest.raises(ValueError):
        data.Schema(["a", "b"], ["numeric", "numeric"])


def test_reference_comparison_never_raises():
    ds = data.synthetic(1, 3, 5, 0)[0]
    rep = data.compare_with_reference(ds)
    assert rep["samples_match"] is False and rep["reference_samples"] == 45_223


def test_dataset_roundtrip(tmp_path):
    ds = data.synthetic(1, 3, 7, 2)[0]
    data.write_dataset(ds, tmp_path / "d.csv")
    back = data.read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_partitions():
    full = data.pool(data.synthetic(1, 2, 100, 0))
    even = data.partition(full, 4, "even", 1)
    assert [d.B for d in even] == [25] * 4
    uneven = data.partition(full, 4, "uneven", 1)
    sizes = [d.B for d in uneven]
    assert sum(sizes) == 100 and sizes == sorted(sizes, reverse=True) and min(sizes) >= 1
    with pytest.raises(TooManyNodes):
        data.partition(full, 101)


def test_holdout_sizes():
    full = data.pool(data.synthetic(1, 2, 50, 0))
    train, test = data.holdout(full, 0.2, 0)
    assert (train.B, test.B) == (40, 10)
