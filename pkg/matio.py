#!/usr/bin/env python3
"""
rscrub Matrix I/O
Delimited and binary matrix files, JSON scrub reports, plot-ready tables
"""

import csv
import io
import json
import logging
import os
import struct

import numpy as np

from config import Config
from models import (
    DenseMatrix,
    EmptyMatrixError,
    MatrixFormatError,
    MatrixParseError,
    MissingValueError,
    McdFit,
    RdSeries,
    ReportFormatError,
    RunConfig,
    ScrubReport,
    ThresholdEstimate,
)

logger = logging.getLogger(__name__)

FORMATS = ('delimited', 'binary')
_DIMS = struct.Struct('<QQ')


# ============================================
# LOAD
# ============================================
def load_matrix(path, format='delimited', row_labels=False):
    """
    Load a DenseMatrix from disk

    Delimited files use comma or tab separators (taken from the first
    line) with an optional single header row: the first line is a header
    when none of its cells parses as a number. With row_labels=True the
    first column holds observation ids.

    Raises:
        EmptyMatrixError: file has no data rows
        MatrixParseError: ragged row or non-numeric cell (1-based row/col)
        MissingValueError: a missing-value token such as NA or an empty cell
        MatrixFormatError: malformed binary file
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")

    if format == 'binary':
        with open(path, 'rb') as f:
            return _parse_binary(f.read())

    with open(path, 'r', encoding='utf-8', newline='') as f:
        text = f.read()
    return parse_delimited(text, row_labels=row_labels)


def parse_delimited(text, row_labels=False):
    """Parse delimited text into a DenseMatrix (see load_matrix)"""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyMatrixError("matrix file is empty")

    delimiter = '\t' if '\t' in lines[0] else ','
    records = list(csv.reader(io.StringIO('\n'.join(lines)), delimiter=delimiter))

    start = 0
    header = None
    first = records[0][1:] if row_labels else records[0]
    if first and not any(_is_number(cell) for cell in first):
        header = [cell.strip() for cell in first]
        start = 1

    body = records[start:]
    if not body:
        raise EmptyMatrixError("matrix file has a header but no data rows")

    width = len(body[0]) - (1 if row_labels else 0)
    if header is not None and len(header) != width:
        raise MatrixParseError(
            f"header has {len(header)} columns but data has {width}", row=1
        )

    values = np.empty((len(body), width), dtype=np.float64)
    labels = [] if row_labels else None
    for i, record in enumerate(body):
        line_no = i + start + 1
        cells = record
        if row_labels:
            labels.append(record[0].strip())
            cells = record[1:]
        if len(cells) != width:
            raise MatrixParseError(
                f"ragged row: expected {width} columns, found {len(cells)}", row=line_no
            )
        for j, cell in enumerate(cells):
            values[i, j] = _parse_cell(cell, line_no, j + 1 + (1 if row_labels else 0))

    logger.info(f"Parsed delimited matrix {values.shape[0]}x{values.shape[1]}")
    return DenseMatrix(values, row_labels=labels, col_labels=header)


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_cell(cell, row, col):
    token = cell.strip()
    if token.lower() in Config.MISSING_TOKENS:
        raise MissingValueError(f"missing value {token!r} is unsupported", row=row, col=col)
    try:
        value = float(token)
    except ValueError:
        raise MatrixParseError(f"non-numeric cell {token!r}", row=row, col=col) from None
    if not np.isfinite(value):
        raise MatrixParseError(f"non-finite value {token!r}", row=row, col=col)
    return value


def _parse_binary(blob):
    magic = Config.BINARY_MAGIC
    if not blob:
        raise EmptyMatrixError("matrix file is empty")
    if len(blob) < len(magic) + _DIMS.size or blob[:len(magic)] != magic:
        raise MatrixFormatError("not an RSCRUB1 binary matrix")

    rows, cols = _DIMS.unpack_from(blob, len(magic))
    offset = len(magic) + _DIMS.size
    expected = rows * cols * 8
    if len(blob) - offset != expected:
        raise MatrixFormatError(
            f"payload has {len(blob) - offset} bytes, expected {expected} for {rows}x{cols}"
        )
    if rows == 0 or cols == 0:
        raise EmptyMatrixError("binary matrix has zero rows or columns")

    values = np.frombuffer(blob, dtype='<f8', count=rows * cols, offset=offset)
    values = values.reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise MissingValueError("binary matrix holds non-finite values")
    return DenseMatrix(values)


# ============================================
# SAVE
# ============================================
def save_matrix(matrix, path, format='delimited'):
    """
    Write a DenseMatrix; load_matrix(save_matrix(m)) reproduces m

    Delimited output uses repr() floats, so values round-trip exactly.
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")

    if format == 'binary':
        payload = np.ascontiguousarray(matrix.values, dtype='<f8').tobytes()
        with open(path, 'wb') as f:
            f.write(Config.BINARY_MAGIC)
            f.write(_DIMS.pack(matrix.rows, matrix.cols))
            f.write(payload)
        return

    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        if matrix.col_labels is not None:
            head = (['id'] if matrix.row_labels is not None else []) + list(matrix.col_labels)
            writer.writerow(head)
        for i, row in enumerate(matrix.values):
            cells = [repr(float(v)) for v in row]
            if matrix.row_labels is not None:
                cells = [matrix.row_labels[i]] + cells
            writer.writerow(cells)


def save_table(path, columns):
    """
    Write a plot-ready delimited table

    Args:
        columns: mapping of column name -> sequence, all the same length
    """
    names = list(columns)
    lengths = {len(columns[name]) for name in names}
    if len(lengths) > 1:
        raise ValueError(f"table columns differ in length: {sorted(lengths)}")

    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(names)
        for row in zip(*(columns[name] for name in names)):
            writer.writerow([_format_cell(v) for v in row])


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


# ============================================
# REPORTS
# ============================================
def save_report(report, path):
    """
    Write a ScrubReport as a versioned JSON document

    Keys are sorted and floats written with repr(), so identical reports
    produce byte-identical files.

    Raises:
        ValueError: flags length differs from the number of RDs
        OSError: path not writable
    """
    if len(report.flags) != len(report.rds.distances):
        raise ValueError(
            f"report is incomplete: {len(report.flags)} flags for {len(report.rds.distances)} RDs"
        )

    document = report_to_dict(report)
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise OSError(f"directory does not exist: {directory}")

    with open(path, 'w', encoding='utf-8') as f:
        json.dump(document, f, indent=2, sort_keys=True, allow_nan=False)
        f.write('\n')
    logger.info(f"Report written to {path} ({report.n_observations} observations)")


def load_report(path):
    """Read a report written by save_report"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ReportFormatError(f"report is not valid JSON: {e}") from e
    return report_from_dict(document)


def report_to_dict(report):
    fit = report.rds.fit
    return {
        'schema': Config.REPORT_SCHEMA,
        'version': Config.VERSION,
        'config': report.config.to_dict(),
        'n_observations': report.n_observations,
        'selected_components': list(report.selected_components),
        'kurtosis_values': _floats(report.kurtosis_values),
        'rd': _floats(report.rds.distances),
        'flags': [bool(f) for f in report.flags],
        'active_method': report.active_method,
        'thresholds': [
            {
                'method': t.method,
                'label': t.label,
                'cutoff': float(t.cutoff),
                'alpha': float(t.alpha),
                'detail': _jsonable(t.detail),
            }
            for t in report.thresholds
        ],
        'fit': {
            'n': int(fit.n),
            'p': int(fit.p),
            'h': int(fit.h),
            'included': [int(i) for i in fit.included],
            'mean': _floats(fit.mean),
            'covariance': [_floats(row) for row in fit.covariance],
            'log_determinant': float(fit.log_determinant),
            'consistency_factor': float(fit.consistency_factor),
        },
        'diagnostics': _jsonable(report.diagnostics),
        'artifact_map': None if report.artifact_map is None else _floats(report.artifact_map),
    }


def report_from_dict(document):
    if not isinstance(document, dict) or 'schema' not in document:
        raise ReportFormatError("report has no schema field")
    if document['schema'] != Config.REPORT_SCHEMA:
        raise ReportFormatError(f"unsupported report schema {document['schema']!r}")

    try:
        f = document['fit']
        fit = McdFit(
            mean=np.array(f['mean'], dtype=np.float64),
            covariance=np.array(f['covariance'], dtype=np.float64),
            included=np.array(f['included'], dtype=np.intp),
            log_determinant=f['log_determinant'],
            n=f['n'],
            h=f['h'],
            consistency_factor=f['consistency_factor'],
        )
        thresholds = [
            ThresholdEstimate(
                cutoff=t['cutoff'],
                method=t['method'],
                alpha=t['alpha'],
                detail=_restore_detail(t.get('detail', {})),
            )
            for t in document['thresholds']
        ]
        artifact = document.get('artifact_map')
        return ScrubReport(
            flags=np.array(document['flags'], dtype=bool),
            rds=RdSeries(np.array(document['rd'], dtype=np.float64), fit),
            thresholds=thresholds,
            active_method=document['active_method'],
            selected_components=document['selected_components'],
            kurtosis_values=np.array(document['kurtosis_values'], dtype=np.float64),
            config=RunConfig.from_dict(document['config']),
            diagnostics=document.get('diagnostics', []),
            artifact_map=None if artifact is None else np.array(artifact, dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ReportFormatError(f"malformed report: {e}") from e


def _floats(values):
    # non-finite entries (kurtosis of a constant column) become null
    return [float(v) if np.isfinite(v) else None for v in np.asarray(values, dtype=np.float64).ravel()]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _restore_detail(detail):
    detail = dict(detail)
    if 'replicates' in detail:
        detail['replicates'] = np.array(detail['replicates'], dtype=np.float64)
    return detail
