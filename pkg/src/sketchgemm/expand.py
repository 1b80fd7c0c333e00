"""Vectorized expansion of Gustavson intermediate products.

Row-wise accumulation repeatedly walks, for each nonzero (i, k) of A,
the k-th row of B. These helpers materialize that product stream as
flat arrays so the accumulation kernels can run as batch numpy passes
instead of per-product Python loops. Stream order is preserved: A rows
ascending, nonzeros within an A row in storage order, B rows in storage
order, which fixes the per-column value summation order.
"""

from __future__ import annotations

import numpy as np

from .csr import CsrMatrix


def concat_ranges(starts: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Indices covering [starts[i], starts[i] + lens[i]) for every i, in order."""
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lens)[:-1]))
    return (np.arange(total, dtype=np.int64)
            - np.repeat(offsets, lens)
            + np.repeat(starts.astype(np.int64), lens))


def product_stream(a: CsrMatrix, b: CsrMatrix, rows: np.ndarray | None = None,
                   with_values: bool = True):
    """Expand the intermediate products of the selected rows of A.

    Returns (local_row, col, val) where local_row indexes into ``rows``
    (or A's rows when rows is None). ``val`` is None when with_values is
    False, which the symbolic counting path uses to skip the multiply.
    """
    if rows is None:
        a_sel = np.arange(a.nnz, dtype=np.int64)
        a_lens = a.row_nnz()
    else:
        starts = a.row_ptr[rows]
        a_lens = a.row_ptr[rows + 1] - starts
        a_sel = concat_ranges(starts, a_lens)
    local = np.repeat(np.arange(len(a_lens), dtype=np.int64), a_lens)

    k = a.col_idx[a_sel]
    b_starts = b.row_ptr[k]
    b_lens = b.row_ptr[k + 1] - b_starts
    b_sel = concat_ranges(b_starts, b_lens)

    prow = np.repeat(local, b_lens)
    pcol = b.col_idx[b_sel].astype(np.int64)
    if not with_values:
        return prow, pcol, None
    pval = np.repeat(a.values[a_sel], b_lens) * b.values[b_sel]
    return prow, pcol, pval


def reduce_by_row_col(prow: np.ndarray, pcol: np.ndarray, pval: np.ndarray | None,
                      ncols: int):
    """Collapse a product stream to distinct (row, col) cells.

    Returns (row, col, summed value or None) sorted by (row, col). The
    stable sort keeps each cell's contributions in stream order before
    they are summed.
    """
    if len(prow) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, (None if pval is None else np.empty(0, dtype=np.float64))
    key = prow * np.int64(ncols) + pcol
    order = np.argsort(key, kind="stable")
    key = key[order]
    starts = np.flatnonzero(np.concatenate(([True], key[1:] != key[:-1])))
    ukey = key[starts]
    urow = ukey // ncols
    ucol = ukey % ncols
    uval = None if pval is None else np.add.reduceat(pval[order], starts)
    return urow, ucol, uval
