"""Brute-force reference implementations for testing.

Everything here is written the slow, obvious way in plain Python and
shares no accumulation code with the engine or the accumulators, so
equivalence tests against it are meaningful. Performance is explicitly
a non-goal.
"""

from __future__ import annotations

import numpy as np

from .csr import CsrMatrix


def reference_spgemm(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Exact product A @ B via a per-row column-to-sum map.

    Contributions to each output cell accumulate in ascending order of
    the A column index k, i.e. the order the nested Gustavson loops
    visit them. Rows are emitted in ascending column order.
    """
    if a.ncols != b.nrows:
        raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.nrows}x{b.ncols}")
    row_ptr = [0]
    out_cols: list[int] = []
    out_vals: list[float] = []
    for i in range(a.nrows):
        acc: dict[int, float] = {}
        for t in range(a.row_ptr[i], a.row_ptr[i + 1]):
            k = int(a.col_idx[t])
            av = float(a.values[t])
            for u in range(b.row_ptr[k], b.row_ptr[k + 1]):
                c = int(b.col_idx[u])
                acc[c] = acc.get(c, 0.0) + av * float(b.values[u])
        for c in sorted(acc):
            out_cols.append(c)
            out_vals.append(acc[c])
        row_ptr.append(len(out_cols))
    return CsrMatrix(a.nrows, b.ncols,
                     np.asarray(row_ptr, dtype=np.int64),
                     np.asarray(out_cols, dtype=np.int32),
                     np.asarray(out_vals, dtype=np.float64))


def reference_row_nnz(a: CsrMatrix, b: CsrMatrix) -> list[int]:
    """Exact distinct-column count of every output row."""
    if a.ncols != b.nrows:
        raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.nrows}x{b.ncols}")
    counts = []
    for i in range(a.nrows):
        seen: set[int] = set()
        for t in range(a.row_ptr[i], a.row_ptr[i + 1]):
            k = int(a.col_idx[t])
            seen.update(int(c) for c in b.col_idx[b.row_ptr[k]:b.row_ptr[k + 1]])
        counts.append(len(seen))
    return counts


def exact_distinct_count(keys) -> int:
    """Cardinality of a key multiset."""
    return len(set(int(k) for k in keys))
