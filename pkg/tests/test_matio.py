#!/usr/bin/env python3
"""Tests for matrix and report I/O"""

import json

import numpy as np
import pytest

from matio import load_matrix, load_report, parse_delimited, save_matrix, save_report, save_table
from mcd import fast_mcd, robust_distances
from models import (
    DenseMatrix,
    EmptyMatrixError,
    MatrixFormatError,
    MatrixParseError,
    MissingValueError,
    ReportFormatError,
    RunConfig,
    ScrubReport,
    ThresholdEstimate,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ============================================
# DELIMITED
# ============================================
def test_header_and_values(tmp_path):
    m = load_matrix(_write(tmp_path, 'm.csv', "a,b\n1,2\n3,4\n"))
    assert m.col_labels == ['a', 'b']
    assert m.shape == (2, 2)
    np.testing.assert_array_equal(m.values, [[1.0, 2.0], [3.0, 4.0]])


def test_headerless_tab_delimited(tmp_path):
    m = load_matrix(_write(tmp_path, 'm.tsv', "1\t2\t3\n4\t5\t6\n"))
    assert m.col_labels is None
    assert m.shape == (2, 3)


def test_row_labels(tmp_path):
    m = load_matrix(_write(tmp_path, 'm.csv', "id,x\nv1,1.5\nv2,2.5\n"), row_labels=True)
    assert m.row_labels == ['v1', 'v2']
    assert m.col_labels == ['x']
    np.testing.assert_array_equal(m.values[:, 0], [1.5, 2.5])


def test_ragged_row_reports_position():
    with pytest.raises(MatrixParseError) as exc:
        parse_delimited("1,2,3\n4,5\n")
    assert exc.value.row == 2
    assert 'ragged' in str(exc.value)


def test_interior_blank_line_is_ragged():
    with pytest.raises(MatrixParseError):
        parse_delimited("1,2\n\n3,4\n")


def test_trailing_blank_lines_ignored():
    assert parse_delimited("1,2\n3,4\n\n\n").rows == 2


@pytest.mark.parametrize('token', ['NA', 'nan', '', '?'])
def test_missing_values_rejected(token):
    with pytest.raises(MissingValueError) as exc:
        parse_delimited(f"1,2\n3,{token}\n")
    assert (exc.value.row, exc.value.col) == (2, 2)


def test_non_numeric_cell():
    with pytest.raises(MatrixParseError) as exc:
        parse_delimited("1,2\nabc,4\n")
    assert not isinstance(exc.value, MissingValueError)
    assert (exc.value.row, exc.value.col) == (2, 1)


def test_infinite_value_rejected():
    with pytest.raises(MatrixParseError):
        parse_delimited("1,inf\n")


def test_empty_file(tmp_path):
    with pytest.raises(EmptyMatrixError):
        load_matrix(_write(tmp_path, 'empty.csv', ""))
    with pytest.raises(EmptyMatrixError):
        load_matrix(_write(tmp_path, 'header.csv', "a,b\n"))


def test_toy_dataset_shape(toy_path):
    m = load_matrix(toy_path)
    assert m.shape == (145, 8)
    assert m.col_labels[0] == 'IC1'


# ============================================
# BINARY / ROUND TRIPS
# ============================================
def test_binary_round_trip(tmp_path, rng):
    original = DenseMatrix(rng.standard_normal((7, 3)))
    path = str(tmp_path / 'm.bin')
    save_matrix(original, path, format='binary')
    np.testing.assert_array_equal(load_matrix(path, format='binary').values, original.values)


def test_delimited_round_trip_exact(tmp_path, rng):
    original = DenseMatrix(rng.standard_normal((5, 2)) * 1e-7, col_labels=['x', 'y'])
    path = str(tmp_path / 'm.csv')
    save_matrix(original, path)
    loaded = load_matrix(path)
    np.testing.assert_array_equal(loaded.values, original.values)
    assert loaded.col_labels == ['x', 'y']


def test_binary_bad_magic(tmp_path):
    path = tmp_path / 'bad.bin'
    path.write_bytes(b'NOTMAGIC' + b'\x00' * 32)
    with pytest.raises(MatrixFormatError):
        load_matrix(str(path), format='binary')


def test_binary_truncated_payload(tmp_path):
    original = DenseMatrix(np.ones((3, 3)))
    path = tmp_path / 'm.bin'
    save_matrix(original, str(path), format='binary')
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(MatrixFormatError):
        load_matrix(str(path), format='binary')


def test_save_table(tmp_path):
    path = tmp_path / 't.csv'
    save_table(str(path), {'i': [0, 1], 'rd': [0.5, 1.25], 'flag': [False, True]})
    assert path.read_text() == "i,rd,flag\n0,0.5,false\n1,1.25,true\n"


def test_save_table_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        save_table(str(tmp_path / 't.csv'), {'a': [1], 'b': [1, 2]})


# ============================================
# REPORTS
# ============================================
def _report(rng, X=None):
    X = rng.standard_normal((60, 2)) if X is None else X
    fit = fast_mcd(X, n_starts=20, seed=1)
    rds = robust_distances(X, fit)
    t = ThresholdEstimate(cutoff=2.5, method='empirical', alpha=0.01)
    return ScrubReport(
        flags=rds.distances > 2.5,
        rds=rds,
        thresholds=[t],
        active_method='empirical',
        selected_components=list(range(X.shape[1])),
        kurtosis_values=np.array([0.1, np.nan] + [0.0] * (X.shape[1] - 2)),
        config=RunConfig(),
    )


def test_report_round_trip(tmp_path, rng):
    report = _report(rng)
    path = str(tmp_path / 'report.json')
    save_report(report, path)
    loaded = load_report(path)
    np.testing.assert_array_equal(loaded.flags, report.flags)
    np.testing.assert_array_equal(loaded.rds.distances, report.rds.distances)
    np.testing.assert_array_equal(loaded.rds.fit.included, report.rds.fit.included)
    assert loaded.threshold().cutoff == 2.5
    assert loaded.config == report.config
    assert np.isnan(loaded.kurtosis_values[1])


def test_report_bytes_are_stable(tmp_path, rng):
    report = _report(rng)
    a, b = tmp_path / 'a.json', tmp_path / 'b.json'
    save_report(report, str(a))
    save_report(report, str(b))
    assert a.read_bytes() == b.read_bytes()


def test_report_incomplete(tmp_path, rng):
    report = _report(rng)
    report.flags = report.flags[:-1]
    with pytest.raises(ValueError):
        save_report(report, str(tmp_path / 'r.json'))


def test_report_missing_directory(tmp_path, rng):
    with pytest.raises(OSError):
        save_report(_report(rng), str(tmp_path / 'nope' / 'r.json'))


def test_report_unknown_schema(tmp_path, rng):
    path = tmp_path / 'r.json'
    save_report(_report(rng), str(path))
    document = json.loads(path.read_text())
    document['schema'] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(ReportFormatError):
        load_report(str(path))


def test_report_with_overflowing_determinant(tmp_path, rng):
    X = 1e10 * rng.standard_normal((100, 40))
    report = _report(rng, X)
    assert report.rds.fit.determinant == np.inf
    path = str(tmp_path / 'wide.json')
    save_report(report, path)
    loaded = load_report(path)
    assert np.isfinite(loaded.rds.fit.log_determinant)
    assert loaded.rds.fit.log_determinant == pytest.approx(report.rds.fit.log_determinant, rel=1e-12)
