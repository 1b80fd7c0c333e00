"""Seeded matrix generators shared by the test suite.

Values are drawn from [0.5, 1.5] so per-cell sums never suffer
catastrophic cancellation; relative tolerances against the reference
implementation then stay meaningful regardless of summation order.
"""

from __future__ import annotations

import numpy as np

from sketchgemm import CsrMatrix, from_triplets, identity, transpose


def random_csr(rng: np.random.Generator, nrows: int, ncols: int,
               density: float) -> CsrMatrix:
    """Uniform random matrix with approximately the given density."""
    nnz = int(round(nrows * ncols * density))
    rows = rng.integers(0, nrows, nnz) if nrows else np.empty(0, int)
    cols = rng.integers(0, ncols, nnz) if ncols else np.empty(0, int)
    vals = rng.uniform(0.5, 1.5, len(rows))
    return from_triplets(nrows, ncols, rows, cols, vals)


def random_by_row_lens(rng: np.random.Generator, ncols: int,
                       row_lens: np.ndarray) -> CsrMatrix:
    """Matrix with exactly the requested number of distinct entries per row."""
    row_lens = np.minimum(np.asarray(row_lens, dtype=np.int64), ncols)
    rows = np.repeat(np.arange(len(row_lens)), row_lens)
    cols = np.concatenate([rng.choice(ncols, n, replace=False) for n in row_lens]
                          ) if row_lens.sum() else np.empty(0, int)
    vals = rng.uniform(0.5, 1.5, len(rows))
    return from_triplets(len(row_lens), ncols, rows, cols, vals)


def banded(rng: np.random.Generator, n: int, bandwidth: int) -> CsrMatrix:
    rows, cols = [], []
    for i in range(n):
        lo, hi = max(0, i - bandwidth), min(n, i + bandwidth + 1)
        for j in range(lo, hi):
            rows.append(i)
            cols.append(j)
    vals = rng.uniform(0.5, 1.5, len(rows))
    return from_triplets(n, n, rows, cols, vals)


def powerlaw(rng: np.random.Generator, nrows: int, ncols: int,
             mean_len: float) -> CsrMatrix:
    lens = np.minimum(((rng.pareto(1.6, nrows) + 1) * mean_len * 0.45).astype(int),
                      int(ncols * 0.8))
    return random_by_row_lens(rng, ncols, np.maximum(lens, 0))


def with_empty_rows_cols(rng: np.random.Generator, nrows: int, ncols: int,
                         density: float) -> CsrMatrix:
    """Random matrix with a block of guaranteed-empty rows and columns."""
    a = random_csr(rng, nrows, ncols, density)
    kill_rows = rng.choice(nrows, max(1, nrows // 5), replace=False)
    kill_cols = rng.choice(ncols, max(1, ncols // 5), replace=False)
    keep = ~np.isin(np.repeat(np.arange(nrows), a.row_nnz()), kill_rows)
    keep &= ~np.isin(a.col_idx, kill_cols)
    rows = np.repeat(np.arange(nrows), a.row_nnz())[keep]
    return from_triplets(nrows, ncols, rows, a.col_idx[keep], a.values[keep])


def pair_for_case(seed: int, case: int) -> tuple[CsrMatrix, CsrMatrix]:
    """One (A, B) pair from the mixed end-to-end corpus.

    Cycles through plain random, banded, power-law, B = I, empty
    rows/cols, and rectangular shapes. Dims stay at or under 500 and
    density at or under 5 percent.
    """
    rng = np.random.default_rng(seed)
    kind = case % 6
    if kind == 0:
        n, k, m = rng.integers(20, 500, 3)
        return (random_csr(rng, n, k, rng.uniform(0.002, 0.05)),
                random_csr(rng, k, m, rng.uniform(0.002, 0.05)))
    if kind == 1:
        n = int(rng.integers(50, 400))
        return banded(rng, n, int(rng.integers(1, 6))), banded(rng, n, int(rng.integers(1, 6)))
    if kind == 2:
        n, k, m = rng.integers(50, 500, 3)
        return (powerlaw(rng, n, k, rng.uniform(2, 8)),
                powerlaw(rng, k, m, rng.uniform(2, 8)))
    if kind == 3:
        n, k = rng.integers(20, 500, 2)
        return random_csr(rng, n, k, rng.uniform(0.005, 0.05)), identity(int(k))
    if kind == 4:
        n, k, m = rng.integers(40, 400, 3)
        return (with_empty_rows_cols(rng, n, k, rng.uniform(0.005, 0.05)),
                with_empty_rows_cols(rng, k, m, rng.uniform(0.005, 0.05)))
    a = random_csr(rng, int(rng.integers(20, 200)), int(rng.integers(200, 500)),
                   rng.uniform(0.005, 0.05))
    return a, transpose(a)


def corpus_matrix(seed: int) -> tuple[CsrMatrix, CsrMatrix]:
    """One (A, B) pair from the estimation-quality corpus (ER >= 8).

    B rows are long enough that the expansion ratio clears the
    estimation threshold, with diverse output row sizes per matrix.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(500, 1500))
    k = int(rng.integers(400, 1200))
    m = int(rng.integers(600, 2600))
    if seed % 2:
        a = powerlaw(rng, n, k, float(rng.integers(4, 40)))
    else:
        a = random_by_row_lens(rng, k, rng.integers(2, int(rng.integers(8, 80)), n))
    b = random_by_row_lens(rng, m, rng.integers(4, int(rng.integers(24, 120)), k))
    return a, b


def controlled_cv_pair(rng: np.random.Generator, cv: float, n_rows: int = 20000,
                       products_per_row: int = 64, n_groups: int = 256,
                       group_size: int = 64):
    """(A, B, c) where products per A row are constant and the output row
    sizes c have the requested coefficient of variation.

    Every B row holds one entry; B rows are partitioned into groups that
    share an output column, so an A row touching c distinct groups
    yields exactly c output nonzeros from a fixed product count.
    """
    shape = 1.0 / (cv * cv)
    c = np.clip(np.round(rng.gamma(shape, 16.0 / shape, n_rows)), 1,
                products_per_row).astype(np.int64)
    k = n_groups * group_size
    b = CsrMatrix(k, n_groups, np.arange(k + 1, dtype=np.int64),
                  (np.arange(k) // group_size).astype(np.int32),
                  np.ones(k, dtype=np.float64))
    cols = np.empty(n_rows * products_per_row, dtype=np.int64)
    at = 0
    for ci in c:
        groups = rng.choice(n_groups, ci, replace=False)
        members = groups * group_size
        extra = products_per_row - ci
        if extra:
            pick_g = groups[rng.integers(0, ci, extra)]
            offs = rng.choice(np.arange(1, group_size), extra, replace=False)
            members = np.concatenate([members, pick_g * group_size + offs])
        cols[at:at + products_per_row] = np.sort(members)
        at += products_per_row
    a = CsrMatrix(n_rows, k,
                  np.arange(n_rows + 1, dtype=np.int64) * products_per_row,
                  cols.astype(np.int32), np.ones(len(cols), dtype=np.float64))
    return a, b, c


def assert_same_product(c: CsrMatrix, ref: CsrMatrix, rtol: float = 1e-12):
    """Structure must match exactly; values within rtol relative."""
    assert c.nrows == ref.nrows and c.ncols == ref.ncols
    np.testing.assert_array_equal(c.row_ptr, ref.row_ptr)
    np.testing.assert_array_equal(c.col_idx, ref.col_idx)
    np.testing.assert_allclose(c.values, ref.values, rtol=rtol, atol=0.0)
