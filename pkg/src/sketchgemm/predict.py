"""Per-row output size prediction.

Three interchangeable paths produce the per-row nonzero counts that
drive accumulator binning and output staging: an exact symbolic pass
(distinct-column counting without values), a sketch-based estimation
pass (merge the per-B-row sketches selected by each A row), and a
trivial upper bound (the intermediate-product counts themselves).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .analysis import RowSketchTable, RowStats, SampledCr, merged_row_estimates
from .csr import CsrMatrix
from .expand import product_stream, reduce_by_row_col

# Rows whose output span fits the largest dense tier are counted with a
# span-indexed occupancy array; wider rows fall back to sort-based
# distinct counting. Both are exact.
DEFAULT_BITMAP_SPAN_LIMIT = 16384


class PredictionKind(enum.Enum):
    EXACT = "exact"
    ESTIMATED = "estimated"
    UPPER_BOUND = "upper_bound"


@dataclass
class SizePrediction:
    per_row: np.ndarray  # int64 for EXACT/UPPER_BOUND, float64 for ESTIMATED
    kind: PredictionKind


def symbolic_pass(a: CsrMatrix, b: CsrMatrix, stats: RowStats,
                  bitmap_span_limit: int = DEFAULT_BITMAP_SPAN_LIMIT) -> SizePrediction:
    """Exact distinct-column count per output row (no values computed).

    Narrow-span rows are counted through a bitmap over their column
    range [span_lo, span_hi]; the rest go through a sort-based distinct
    count. The two agree exactly, the split only bounds memory.
    """
    counts = np.zeros(a.nrows, dtype=np.int64)
    spans = stats.spans()
    live = stats.products > 0
    narrow = live & (spans <= bitmap_span_limit)
    wide = live & ~narrow

    narrow_rows = np.flatnonzero(narrow)
    if len(narrow_rows):
        # Chunk so the occupancy array stays small.
        budget = 1 << 24
        done = 0
        while done < len(narrow_rows):
            take = done
            width = 0
            while take < len(narrow_rows) and (width == 0 or width + spans[narrow_rows[take]] <= budget):
                width += spans[narrow_rows[take]]
                take += 1
            chunk = narrow_rows[done:take]
            counts[chunk] = _bitmap_counts(a, b, chunk, stats)
            done = take
    wide_rows = np.flatnonzero(wide)
    if len(wide_rows):
        prow, pcol, _ = product_stream(a, b, wide_rows, with_values=False)
        urow, _, _ = reduce_by_row_col(prow, pcol, None, b.ncols)
        counts[wide_rows] = np.bincount(urow, minlength=len(wide_rows))
    return SizePrediction(counts, PredictionKind.EXACT)


def _bitmap_counts(a: CsrMatrix, b: CsrMatrix, rows: np.ndarray,
                   stats: RowStats) -> np.ndarray:
    """Distinct columns per row via one shared occupancy bitmap."""
    spans = stats.spans()[rows]
    offsets = np.concatenate(([0], np.cumsum(spans)))
    prow, pcol, _ = product_stream(a, b, rows, with_values=False)
    pos = offsets[prow] + (pcol - stats.span_lo[rows][prow])
    occupied = np.bincount(pos, minlength=offsets[-1]) > 0
    cum = np.concatenate(([0], np.cumsum(occupied)))
    return cum[offsets[1:]] - cum[offsets[:-1]]


def estimate_pass(a: CsrMatrix, b_sketches: RowSketchTable,
                  block_nnz: int = 1 << 22) -> SizePrediction:
    """Sketch-merge estimate of each output row's nonzero count.

    Processes row blocks bounded by nnz so the expanded register gather
    stays within a fixed memory budget.
    """
    est = np.zeros(a.nrows, dtype=np.float64)
    if a.nrows == 0:
        return SizePrediction(est, PredictionKind.ESTIMATED)
    cuts = np.searchsorted(a.row_ptr, np.arange(0, a.nnz + block_nnz, block_nnz))
    cuts[-1] = a.nrows
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            rows = np.arange(lo, hi, dtype=np.int64)
            est[rows] = merged_row_estimates(a, b_sketches, rows)
    return SizePrediction(est, PredictionKind.ESTIMATED)


def upper_bound_pass(stats: RowStats) -> SizePrediction:
    """Intermediate-product counts as a safe per-row upper bound."""
    return SizePrediction(stats.products.copy(), PredictionKind.UPPER_BOUND)


def conservative_cr(sampled: SampledCr, margin: float = 2.0) -> float:
    """Compression ratio discounted by ``margin`` sample standard deviations.

    Used where an underestimate of CR must stay safe (assisted binning
    of symbolic rows); clamped at 1 since output never exceeds the
    product count.
    """
    return max(1.0, sampled.mean_row_cr - margin * sampled.std_row_cr)
