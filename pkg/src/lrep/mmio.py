"""Matrix Market coordinate files (real/integer, general/symmetric)."""
from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .errors import IngestionError

__all__ = ["read_matrix_market", "write_matrix_market"]

_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric")


def _parse_header(line, lineno):
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
        raise IngestionError("missing '%%MatrixMarket' banner", lineno)
    obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise IngestionError(f"unsupported object {obj!r}", lineno)
    if fmt != "coordinate":
        raise IngestionError(f"unsupported format {fmt!r}, need 'coordinate'",
                             lineno)
    if fld == "pattern":
        raise IngestionError("pattern-only files carry no values", lineno)
    if fld not in _FIELDS:
        raise IngestionError(f"non-real field {fld!r}", lineno)
    if sym not in _SYMMETRIES:
        raise IngestionError(f"unsupported symmetry {sym!r}", lineno)
    return sym


def read_matrix_market(path) -> sp.csr_matrix:
    """Read a coordinate Matrix Market file into canonical CSR.

    Symmetric files store one triangle (either one is accepted); off-diagonal
    entries are mirrored here.  Repeated
    coordinates are summed.  Any malformed line raises
    :class:`~lrep.errors.IngestionError` carrying its line number.
    """
    path = os.fspath(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise IngestionError("empty file", 1)
    symmetry = _parse_header(lines[0], 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if text and not text.startswith("%"):
            size = text
            break
    if size is None:
        raise IngestionError("missing size line", lineno)
    try:
        nrows, ncols, nnz = (int(t) for t in size.split())
    except ValueError:
        raise IngestionError(f"bad size line {size!r}", lineno) from None
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise IngestionError("negative dimension in size line", lineno)
    if symmetry == "symmetric" and nrows != ncols:
        raise IngestionError("symmetric matrix must be square", lineno)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        if k == nnz:
            raise IngestionError(f"more than the declared {nnz} entries", lineno)
        parts = text.split()
        if len(parts) != 3:
            raise IngestionError(f"expected 'row col value', got {text!r}",
                                 lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise IngestionError(f"cannot parse entry {text!r}", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise IngestionError(f"index ({i}, {j}) outside {nrows}x{ncols}",
                                 lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise IngestionError(f"found {k} entries, header declares {nnz}",
                             len(lines))

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_matrix_market(path, A, symmetric=False, comment=None):
    """Write ``A`` in coordinate real format (lower triangle if symmetric)."""
    A = sp.coo_matrix(A)
    rows, cols, vals = A.row, A.col, A.data
    if symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    order = np.lexsort((rows, cols))
    with open(os.fspath(path), "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real "
                 f"{'symmetric' if symmetric else 'general'}\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
        for k in order:
            fh.write(f"{rows[k] + 1} {cols[k] + 1} {float(vals[k])!r}\n")
