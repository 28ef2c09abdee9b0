import numpy as np
import pandas as pd
import pytest

from sbamdt.data import Dataset


def test_round_trip_csv(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(7, 2)), rng.normal(size=(7, 3)),
                 y=rng.normal(size=7), f_true=rng.normal(size=7))
    path = tmp_path / "d.csv"
    ds.to_csv(path)
    back = Dataset.from_csv(path)
    assert np.allclose(back.structured, ds.structured)
    assert np.allclose(back.unstructured, ds.unstructured)
    assert np.allclose(back.y, ds.y)
    assert np.allclose(back.f_true, ds.f_true)
    assert (back.n, back.d_m, back.p) == (7, 2, 3)


def test_column_order_is_not_positional(tmp_path):
    frame = pd.DataFrame({"x_2": [1.0, 2.0], "y": [0.0, 1.0],
                          "s_1": [5.0, 6.0], "x_1": [3.0, 4.0]})
    ds = Dataset.from_frame(frame)
    assert np.array_equal(ds.unstructured, [[3.0, 1.0], [4.0, 2.0]])
    assert np.array_equal(ds.structured, [[5.0], [6.0]])


def test_shape_coercion_and_validation():
    ds2 = Dataset(np.zeros((4, 1)), np.arange(4.0))
    assert ds2.unstructured.shape == (4, 1)
    ds3 = Dataset(np.zeros((4, 2)), np.empty((0,)))
    assert ds3.unstructured.shape == (4, 0) and ds3.p == 0
    with pytest.raises(ValueError):
        Dataset(np.zeros((4, 2)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((4, 2)), np.zeros((4, 1)), y=np.zeros(5))
    with pytest.raises(ValueError):
        Dataset(np.zeros((4, 2)), np.zeros((4, 1)), f_true=np.zeros(2))


def test_missing_columns_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    pd.DataFrame({"x_1": [1.0], "y": [2.0]}).to_csv(p, index=False)
    with pytest.raises(ValueError, match="structured"):
        Dataset.from_csv(p)
    p2 = tmp_path / "noy.csv"
    pd.DataFrame({"s_1": [1.0]}).to_csv(p2, index=False)
    with pytest.raises(ValueError, match="'y'"):
        Dataset.from_csv(p2)
    ds = Dataset.from_csv(p2, require_y=False)
    assert ds.y is None


def test_gapped_numbering_rejected():
    frame = pd.DataFrame({"s_1": [0.0], "s_3": [0.0], "y": [0.0]})
    with pytest.raises(ValueError, match="contiguous"):
        Dataset.from_frame(frame)


def test_non_finite_rejected(tmp_path):
    p = tmp_path / "nan.csv"
    pd.DataFrame({"s_1": [1.0, np.nan], "y": [0.0, 1.0]}).to_csv(p, index=False)
    with pytest.raises(ValueError, match="non-finite"):
        Dataset.from_csv(p)
    p2 = tmp_path / "ynan.csv"
    pd.DataFrame({"s_1": [1.0, 2.0], "y": [0.0, np.inf]}).to_csv(p2, index=False)
    with pytest.raises(ValueError, match="non-finite"):
        Dataset.from_csv(p2)


def test_malformed_file_message(tmp_path):
    p = tmp_path / "broken.csv"
    p.write_text('s_1,y\n1.0,"unterminated\n')
    with pytest.raises(ValueError, match="malformed"):
        Dataset.from_csv(p)
