from __future__ import annotations

import numpy as np
import pytest

from learnfam.data import Dataset, read_binned_csv, read_raw_csv, read_sample, write_raw_csv
from learnfam.errors import EmptyData, NonFiniteInput, ParseError


def test_raw_round_trip(tmp_path):
    data = Dataset.from_groups([[1.5, -2.25], [0.1]], labels=("a", "b"))
    path = tmp_path / "d.csv"
    write_raw_csv(data, path)
    back = read_raw_csv(path)
    assert back.labels == ("a", "b")
    assert np.array_equal(back.values, data.values)
    assert np.array_equal(back.group, data.group)


def test_raw_without_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("g1,1.0\ng2,2.0\ng1,3.0\n")
    data = read_raw_csv(path)
    assert data.labels == ("g1", "g2")
    assert data.group_values(0).tolist() == [1.0, 3.0]


def test_parse_error_has_line_number(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("group_id,value\na,1\na,oops\n")
    with pytest.raises(ParseError) as info:
        read_raw_csv(path)
    assert info.value.line == 3


def test_non_finite_value_is_parse_error(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,1\na,nan\n")
    with pytest.raises(ParseError):
        read_raw_csv(path)


def test_empty_file(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("")
    with pytest.raises(EmptyData):
        read_raw_csv(path)


def test_binned_format(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("group_id,bin_left,bin_right,count\na,0,1,3\na,1,3,2\nb,0,1,4\n")
    data = read_binned_csv(path)
    assert data.n_total == 9
    assert data.group_values(0).tolist() == [0.5, 0.5, 0.5, 2.0, 2.0]


def test_binned_bad_count(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("a,0,1,-3\n")
    with pytest.raises(ParseError):
        read_binned_csv(path)


def test_read_sample_formats(tmp_path):
    one = tmp_path / "one.csv"
    one.write_text("value\n1\n2.5\n")
    two = tmp_path / "two.csv"
    two.write_text("x,1\nx,2.5\n")
    assert read_sample(one).tolist() == [1.0, 2.5]
    assert read_sample(two).tolist() == [1.0, 2.5]


def test_dataset_rejects_non_finite():
    with pytest.raises(NonFiniteInput):
        Dataset(np.array([1.0, np.inf]), np.array([0, 0]), ("a",))


def test_split_and_subset():
    data = Dataset.from_groups([[1.0, 2.0], [3.0], [4.0, 5.0, 6.0]])
    parts = data.split()
    assert [p.tolist() for p in parts] == [[1.0, 2.0], [3.0], [4.0, 5.0, 6.0]]
    sub = data.subset([2, 0])
    assert sub.labels == ("2", "0")
    assert sub.group_values(0).tolist() == [4.0, 5.0, 6.0]
