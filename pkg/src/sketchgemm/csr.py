"""Compressed sparse row matrices and Matrix Market I/O.

A CsrMatrix is canonical: row offsets are non-decreasing, column indices
are strictly increasing within each row, and values are float64. All
higher-level stages assume (and preserve) this form, so construction
goes through ``from_triplets`` which sorts entries and sums duplicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Column indices are stored as int32; anything at or past 2^31 would break
# the packed sort-key layout, so oversized inputs are rejected up front.
MAX_INDEX = 2**31


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input. Message names the offending line."""


@dataclass
class CsrMatrix:
    nrows: int
    ncols: int
    row_ptr: np.ndarray  # int64, length nrows + 1
    col_idx: np.ndarray  # int32, length nnz
    values: np.ndarray   # float64, length nnz

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column-index and value views of row ``i``."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def to_dense(self) -> np.ndarray:
        """Dense ndarray copy; intended for small test matrices only."""
        out = np.zeros((self.nrows, self.ncols))
        rows = np.repeat(np.arange(self.nrows), self.row_nnz())
        out[rows, self.col_idx] = self.values
        return out


def from_triplets(nrows: int, ncols: int, rows, cols, vals) -> CsrMatrix:
    """Build a canonical CSR matrix from (row, col, value) triplets.

    Duplicate coordinates are summed. Entries may arrive in any order.
    """
    if nrows >= MAX_INDEX or ncols >= MAX_INDEX:
        raise ValueError(f"matrix dimensions {nrows}x{ncols} exceed the 32-bit index limit")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if len(rows) >= MAX_INDEX:
        raise ValueError("nnz exceeds the 32-bit index limit")
    if len(rows) == 0:
        return CsrMatrix(nrows, ncols,
                         np.zeros(nrows + 1, dtype=np.int64),
                         np.empty(0, dtype=np.int32),
                         np.empty(0, dtype=np.float64))
    key = rows * ncols + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    starts = np.flatnonzero(np.concatenate(([True], key[1:] != key[:-1])))
    ukey = key[starts]
    uvals = np.add.reduceat(vals, starts)
    urows = ukey // ncols
    ucols = (ukey % ncols).astype(np.int32)
    row_ptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(urows, minlength=nrows), out=row_ptr[1:])
    return CsrMatrix(nrows, ncols, row_ptr, ucols, uvals)


def identity(n: int) -> CsrMatrix:
    return CsrMatrix(n, n,
                     np.arange(n + 1, dtype=np.int64),
                     np.arange(n, dtype=np.int32),
                     np.ones(n, dtype=np.float64))


def transpose(a: CsrMatrix) -> CsrMatrix:
    """Exact transpose; canonical in, canonical out."""
    rows = np.repeat(np.arange(a.nrows, dtype=np.int64), a.row_nnz())
    order = np.argsort(a.col_idx, kind="stable")  # stable keeps rows sorted per column
    t_ptr = np.zeros(a.ncols + 1, dtype=np.int64)
    np.cumsum(np.bincount(a.col_idx, minlength=a.ncols), out=t_ptr[1:])
    return CsrMatrix(a.ncols, a.nrows, t_ptr,
                     rows[order].astype(np.int32), a.values[order])


def validate(a: CsrMatrix) -> list[str]:
    """Check the canonical-form invariants; return one message per violation."""
    problems: list[str] = []
    ptr = np.asarray(a.row_ptr)
    if len(ptr) != a.nrows + 1:
        problems.append(f"row_ptr length {len(ptr)} != nrows + 1")
        return problems
    if ptr[0] != 0:
        problems.append("row_ptr[0] != 0")
    bad = np.flatnonzero(np.diff(ptr) < 0)
    for i in bad:
        problems.append(f"row_ptr not non-decreasing at {i + 1}")
    if problems:
        return problems
    if ptr[-1] != len(a.col_idx):
        problems.append(f"row_ptr[-1]={ptr[-1]} != nnz={len(a.col_idx)}")
    if len(a.values) != len(a.col_idx):
        problems.append(f"values length {len(a.values)} != col_idx length {len(a.col_idx)}")
    if problems:
        return problems
    if len(a.col_idx) and (a.col_idx.min() < 0 or a.col_idx.max() >= a.ncols):
        rows = np.repeat(np.arange(a.nrows), np.diff(ptr))
        for i in np.unique(rows[(a.col_idx < 0) | (a.col_idx >= a.ncols)]):
            problems.append(f"column out of range in row {i}")
    if len(a.col_idx) > 1:
        nondec = np.flatnonzero(np.diff(a.col_idx.astype(np.int64)) <= 0)
        if len(nondec):
            row_starts = ptr[1:-1]  # positions where a new row begins
            interior = nondec[~np.isin(nondec + 1, row_starts)]
            if len(interior):
                rows = np.searchsorted(ptr, interior, side="right") - 1
                for i in np.unique(rows):
                    problems.append(f"duplicate/unsorted column in row {i}")
    return problems


def parse_matrix_market(data: bytes | str) -> CsrMatrix:
    """Parse Matrix Market ``coordinate`` text into a canonical CsrMatrix.

    Supports real, integer and pattern fields with general or symmetric
    symmetry. Symmetric inputs are expanded to both triangles (diagonal
    entries are not duplicated); pattern entries get value 1.0; duplicate
    coordinates are summed.
    """
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="replace")
    lines = data.splitlines()
    if not lines:
        raise MatrixMarketError("line 1: empty input")
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("line 1: missing %%MatrixMarket banner")
    _, obj, fmt, field, symmetry = (tok.lower() for tok in banner)
    if obj != "matrix":
        raise MatrixMarketError(f"line 1: unsupported object '{obj}'")
    if fmt != "coordinate":
        raise MatrixMarketError(f"line 1: unsupported format '{fmt}'")
    if field not in ("real", "integer", "pattern"):
        raise MatrixMarketError(f"line 1: unsupported field '{field}'")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"line 1: unsupported symmetry '{symmetry}'")
    pattern = field == "pattern"
    symmetric = symmetry == "symmetric"

    lineno = 1
    n_lines = len(lines)
    # size line: first non-comment, non-blank line after the banner
    size = None
    while lineno < n_lines:
        text = lines[lineno].strip()
        lineno += 1
        if not text or text.startswith("%"):
            continue
        size = text.split()
        break
    if size is None:
        raise MatrixMarketError(f"line {lineno}: missing size line")
    if len(size) != 3:
        raise MatrixMarketError(f"line {lineno}: size line needs 'rows cols nnz'")
    try:
        nrows, ncols, nnz = (int(tok) for tok in size)
    except ValueError:
        raise MatrixMarketError(f"line {lineno}: non-integer size entry") from None
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise MatrixMarketError(f"line {lineno}: negative dimension")
    if nrows >= MAX_INDEX or ncols >= MAX_INDEX or nnz >= MAX_INDEX:
        raise MatrixMarketError(f"line {lineno}: dimensions exceed the 32-bit index limit")

    want = 3 - pattern
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    seen = 0
    while lineno < n_lines:
        text = lines[lineno].strip()
        lineno += 1
        if not text or text.startswith("%"):
            continue
        if seen >= nnz:
            raise MatrixMarketError(f"line {lineno}: more entries than declared nnz={nnz}")
        toks = text.split()
        if len(toks) != want:
            raise MatrixMarketError(f"line {lineno}: expected {want} fields, got {len(toks)}")
        try:
            r = int(toks[0])
            c = int(toks[1])
            v = 1.0 if pattern else float(toks[2])
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: malformed entry") from None
        if not (1 <= r <= nrows and 1 <= c <= ncols):
            raise MatrixMarketError(f"line {lineno}: index ({r}, {c}) outside {nrows}x{ncols}")
        rows[seen] = r - 1
        cols[seen] = c - 1
        vals[seen] = v
        seen += 1
    if seen != nnz:
        raise MatrixMarketError(f"line {lineno}: expected {nnz} entries, found {seen}")

    if symmetric:
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return from_triplets(nrows, ncols, rows, cols, vals)


def write_matrix_market(a: CsrMatrix) -> str:
    """Serialize as ``coordinate real general``, row-major and column-sorted.

    Values use shortest round-trip float formatting, so parse(write(a))
    reproduces the values bit for bit.
    """
    out = ["%%MatrixMarket matrix coordinate real general",
           f"{a.nrows} {a.ncols} {a.nnz}"]
    rows = np.repeat(np.arange(a.nrows), a.row_nnz())
    for r, c, v in zip(rows, a.col_idx, a.values):
        out.append(f"{r + 1} {c + 1} {float(v)!r}")
    return "\n".join(out) + "\n"


def load_matrix_market(path: str) -> CsrMatrix:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh.read())


def save_matrix_market(a: CsrMatrix, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(write_matrix_market(a))
