"""Numeric accumulation: tiered accumulators, binning, and row sorting.

Each output row is assigned to the cheapest accumulator configuration
that fits its predicted size: open-addressed hash tables in a ladder of
power-of-two capacities, an oversized hash tier whose value storage is
modeled as a separate slab (covering rows up to 3x longer than the
largest normal tier), dense span-indexed arrays for rows with a narrow
output range, expand-sort-compact for very short rows, and a dense
full-width fallback that cannot overflow.

The per-row functions in this module are the reference semantics and
are written plainly; the engine drives the same math through the batch
kernels at the bottom of the file, which process whole bins with numpy
passes. Equivalence between the two is part of the test suite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .analysis import RowStats, WorkflowChoice, WorkflowKind
from .csr import CsrMatrix
from .expand import concat_ranges, product_stream, reduce_by_row_col
from .hll import hash64
from .predict import PredictionKind, SizePrediction

# A hash row is declared overflowing once its distinct-key count would
# push the table past this load factor; insertion stops there and the
# row reruns through the fallback kernel.
HASH_LOAD_LIMIT = 0.8

PACKED_MAX_COL = 1 << 18   # column must fit 18 bits for the packed sort key
PACKED_MAX_COUNT = 1 << 14  # slot index must fit the remaining 14 bits


class PlanKind(enum.IntEnum):
    HASH = 0
    ENHANCED_HASH = 1
    DENSE = 2
    ESC = 3
    FALLBACK = 4


@dataclass
class TierConfig:
    """Accumulator capacity ladder and binning knobs.

    Capacities halve downward from the largest tier; the enhanced hash
    tier is 3x the largest normal one. Sizes are configuration rather
    than hardware constants, but the defaults keep the published ratios.
    """

    hash_capacities: tuple[int, ...] = (256, 512, 1024, 2048, 4096)
    enhanced_hash_capacity: int = 12288
    dense_spans: tuple[int, ...] = (1024, 2048, 4096, 8192, 16384)
    esc_max_products: int = 64
    expansion_coef: float = 1.5
    bitmap_query_threshold: float = 2.0

    def __post_init__(self):
        caps = list(self.hash_capacities)
        spans = list(self.dense_spans)
        if caps != sorted(caps) or spans != sorted(spans):
            raise ValueError("tier lists must be ascending")
        if any(c & (c - 1) for c in caps):
            raise ValueError("hash capacities must be powers of two")
        if self.expansion_coef < 1.0:
            raise ValueError("expansion_coef must be >= 1")


@dataclass
class RowPlan:
    kind: PlanKind
    capacity_or_span: int
    alloc: int


class RowPlanTable:
    """Per-row plans in column form; indexable as RowPlan for inspection."""

    def __init__(self, kind: np.ndarray, capacity: np.ndarray, alloc: np.ndarray):
        self.kind = kind          # int8 PlanKind codes
        self.capacity = capacity  # int64: hash capacity or dense tier span
        self.alloc = alloc        # int64 output slots reserved per row

    def __len__(self) -> int:
        return len(self.kind)

    def __getitem__(self, i: int) -> RowPlan:
        return RowPlan(PlanKind(int(self.kind[i])), int(self.capacity[i]), int(self.alloc[i]))


@dataclass
class RowResult:
    cols: np.ndarray
    vals: np.ndarray
    count: int
    overflowed: bool = False


def plan_rows(pred: SizePrediction, stats: RowStats, workflow: WorkflowChoice,
              tiers: TierConfig) -> RowPlanTable:
    """Assign every row to its accumulator tier and output allocation.

    Sizing target is ceil(pred * expansion_coef) for exact and estimated
    predictions and the raw product count for the upper-bound workflow.
    The smallest tier that fits wins; when a dense tier and a normal
    hash tier tie on rank the dense one is taken, while ties against the
    oversized hash tier go to the hash side. Allocation is the tier's
    nominal output size for estimates (rounding up absorbs estimation
    error), the exact count for exact predictions, and the product count
    for upper-bound and fallback rows.
    """
    n = len(stats.products)
    caps = np.asarray(tiers.hash_capacities, dtype=np.int64)
    spans_cfg = np.asarray(tiers.dense_spans, dtype=np.int64)
    products = stats.products
    kind = np.empty(n, dtype=np.int8)
    capacity = np.zeros(n, dtype=np.int64)
    alloc = np.zeros(n, dtype=np.int64)

    if workflow.kind is WorkflowKind.UPPER_BOUND:
        target = products.astype(np.int64)
    else:
        target = np.ceil(np.asarray(pred.per_row, dtype=np.float64)
                         * tiers.expansion_coef).astype(np.int64)
    target = np.maximum(target, 1)

    live = products > 0
    span = stats.spans()

    hj = np.searchsorted(caps, target)
    hash_fits = hj < len(caps)
    enh_fits = target <= tiers.enhanced_hash_capacity
    # The oversized tier shares the largest normal tier's resource rank.
    hash_rank = np.where(hash_fits, hj, np.where(enh_fits, len(caps) - 1, np.iinfo(np.int64).max))
    hash_is_enhanced = ~hash_fits & enh_fits
    have_hash = hash_fits | enh_fits

    dj = np.searchsorted(spans_cfg, span)
    dense_fits = (dj < len(spans_cfg)) & live
    dense_rank = np.where(dense_fits, dj, np.iinfo(np.int64).max)

    use_dense = dense_fits & (~have_hash
                              | (dense_rank < hash_rank)
                              | ((dense_rank == hash_rank) & ~hash_is_enhanced))
    use_hash = live & ~use_dense & have_hash
    use_fallback = live & ~use_dense & ~use_hash

    kind[use_hash & ~hash_is_enhanced] = PlanKind.HASH
    kind[use_hash & hash_is_enhanced] = PlanKind.ENHANCED_HASH
    kind[use_dense] = PlanKind.DENSE
    kind[use_fallback] = PlanKind.FALLBACK
    capacity[use_hash] = np.where(hash_is_enhanced, tiers.enhanced_hash_capacity,
                                  caps[np.minimum(hj, len(caps) - 1)])[use_hash]
    capacity[use_dense] = spans_cfg[np.minimum(dj, len(spans_cfg) - 1)][use_dense]

    if workflow.kind is WorkflowKind.UPPER_BOUND:
        esc = live & (products < tiers.esc_max_products)
        kind[esc] = PlanKind.ESC
        capacity[esc] = products[esc]
        alloc[live] = products[live]
    elif pred.kind is PredictionKind.EXACT:
        alloc[live] = np.asarray(pred.per_row, dtype=np.int64)[live]
        alloc[use_fallback] = products[use_fallback]
    else:
        # Estimated: round the prediction up to the tier's nominal size.
        alloc[use_hash] = capacity[use_hash]
        p2 = np.int64(1) << np.ceil(np.log2(target)).astype(np.int64)
        alloc[use_dense] = np.minimum(capacity[use_dense],
                                      np.maximum(p2, caps[0])[use_dense])
        alloc[use_fallback] = products[use_fallback]

    # Rows without products keep a zero allocation on the smallest tier.
    kind[~live] = PlanKind.HASH
    capacity[~live] = caps[0]
    alloc[~live] = 0
    return RowPlanTable(kind, capacity, alloc)


# ---------------------------------------------------------------------------
# Per-row reference accumulators


def hash_accumulate(a_row: tuple[np.ndarray, np.ndarray], b: CsrMatrix,
                    capacity: int) -> RowResult:
    """Open-addressed accumulation of one row; unsorted slot-order output.

    Slot = hash64(col) & (capacity - 1) with linear probing. A repeated
    column adds into its slot; a new column inserts while the table
    holds fewer than floor(0.8 * capacity) keys, otherwise the row is
    flagged overflowed and partial results are discarded.
    """
    if capacity & (capacity - 1):
        raise ValueError("capacity must be a power of two")
    limit = int(HASH_LOAD_LIMIT * capacity)
    keys = np.full(capacity, -1, dtype=np.int64)
    sums = np.zeros(capacity, dtype=np.float64)
    mask = capacity - 1
    occupancy = 0
    a_cols, a_vals = a_row
    for k, av in zip(a_cols, a_vals):
        lo, hi = b.row_ptr[k], b.row_ptr[k + 1]
        for j in range(lo, hi):
            col = int(b.col_idx[j])
            slot = hash64(col) & mask
            while keys[slot] != -1 and keys[slot] != col:
                slot = (slot + 1) & mask
            if keys[slot] == -1:
                if occupancy >= limit:
                    return RowResult(np.empty(0, np.int64), np.empty(0, np.float64),
                                     0, overflowed=True)
                keys[slot] = col
                occupancy += 1
            sums[slot] += av * b.values[j]
    occupied = keys != -1
    return RowResult(keys[occupied], sums[occupied], int(occupancy))


def dense_accumulate(a_row: tuple[np.ndarray, np.ndarray], b: CsrMatrix,
                     span_lo: int, span_hi: int, bitmap_query: bool,
                     alloc: int) -> RowResult:
    """Dense accumulation over [span_lo, span_hi]; sorted output.

    Maintains a value array plus an occupancy bitmap. With bitmap_query
    the bit is read first and the set-write skipped when already set
    (same results, fewer writes). Overflow means the compacted count
    exceeds the reserved output slots, which only estimated predictions
    can cause.
    """
    width = span_hi - span_lo + 1
    sums = np.zeros(width, dtype=np.float64)
    bitmap = np.zeros(width, dtype=bool)
    a_cols, a_vals = a_row
    for k, av in zip(a_cols, a_vals):
        lo, hi = b.row_ptr[k], b.row_ptr[k + 1]
        for j in range(lo, hi):
            pos = int(b.col_idx[j]) - span_lo
            if bitmap_query:
                if not bitmap[pos]:
                    bitmap[pos] = True
            else:
                bitmap[pos] = True
            sums[pos] += av * b.values[j]
    occupied = np.flatnonzero(bitmap)
    count = len(occupied)
    return RowResult((occupied + span_lo).astype(np.int64), sums[occupied],
                     count, overflowed=count > alloc)


def esc_accumulate(a_row: tuple[np.ndarray, np.ndarray], b: CsrMatrix) -> RowResult:
    """Expand, sort, compact one short row; sorted output, never overflows."""
    a_cols, a_vals = a_row
    cols: list[int] = []
    vals: list[float] = []
    for k, av in zip(a_cols, a_vals):
        lo, hi = b.row_ptr[k], b.row_ptr[k + 1]
        cols.extend(int(c) for c in b.col_idx[lo:hi])
        vals.extend(av * float(v) for v in b.values[lo:hi])
    if not cols:
        return RowResult(np.empty(0, np.int64), np.empty(0, np.float64), 0)
    cols_a = np.asarray(cols, dtype=np.int64)
    vals_a = np.asarray(vals, dtype=np.float64)
    order = np.argsort(cols_a, kind="stable")
    cols_a = cols_a[order]
    vals_a = vals_a[order]
    starts = np.flatnonzero(np.concatenate(([True], cols_a[1:] != cols_a[:-1])))
    return RowResult(cols_a[starts], np.add.reduceat(vals_a, starts), len(starts))


def fallback_accumulate(a_row: tuple[np.ndarray, np.ndarray], b: CsrMatrix,
                        ncols: int) -> RowResult:
    """Dense accumulation over the full column range; exact, never overflows."""
    return dense_accumulate(a_row, b, 0, ncols - 1, bitmap_query=False,
                            alloc=ncols) if ncols else RowResult(
        np.empty(0, np.int64), np.empty(0, np.float64), 0)


# ---------------------------------------------------------------------------
# Output row sorting


def sort_row(cols: np.ndarray, vals: np.ndarray, max_col: int):
    """Sort one row's (col, val) pairs by column.

    When the column fits 18 bits and the row holds at most 2^14 entries,
    column and slot index are packed into one 32-bit key and sorted with
    numpy's stable integer sort (an LSD radix sort); values are gathered
    afterward through the slot index recovered from the low bits. Wider
    rows sort (col, slot) pairs directly. Input columns must be distinct.
    """
    if len(cols) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    if len(cols) <= PACKED_MAX_COUNT and max_col < PACKED_MAX_COL:
        return _sort_packed(cols, vals)
    return _sort_pairs(cols, vals)


def _sort_packed(cols: np.ndarray, vals: np.ndarray):
    if len(cols) == 0:
        return cols.astype(np.int64), vals.astype(np.float64)
    keys = (np.asarray(cols, dtype=np.uint32) << np.uint32(14)) | np.arange(
        len(cols), dtype=np.uint32)
    keys = np.sort(keys, kind="stable")
    out_cols = (keys >> np.uint32(14)).astype(np.int64)
    if np.any(out_cols[1:] == out_cols[:-1]):
        raise ValueError("duplicate columns in row")
    slots = (keys & np.uint32(PACKED_MAX_COUNT - 1)).astype(np.int64)
    return out_cols, np.asarray(vals, dtype=np.float64)[slots]


def _sort_pairs(cols: np.ndarray, vals: np.ndarray):
    order = np.argsort(cols, kind="stable")
    out_cols = np.asarray(cols, dtype=np.int64)[order]
    if np.any(out_cols[1:] == out_cols[:-1]):
        raise ValueError("duplicate columns in row")
    return out_cols, np.asarray(vals, dtype=np.float64)[order]


# ---------------------------------------------------------------------------
# Batch kernels (engine path)


@dataclass
class BinOutcome:
    """Result of one batch accumulation pass over a set of rows."""

    counts: np.ndarray      # per selected row; 0 for overflowed rows
    overflowed: np.ndarray  # bool per selected row


def accumulate_hash_like(a: CsrMatrix, b: CsrMatrix, rows: np.ndarray,
                         capacity: np.ndarray, out_cols: np.ndarray,
                         out_vals: np.ndarray, offsets: np.ndarray) -> BinOutcome:
    """Hash and oversized-hash bins for a batch of rows.

    Produces, for every non-overflowing row, its distinct columns and
    per-column sums written at offsets[i], emitted in table slot order
    (sorted later by post-processing). Overflow follows the 0.8 load
    limit against the row's tier capacity.
    """
    prow, pcol, pval = product_stream(a, b, rows)
    urow, ucol, uval = reduce_by_row_col(prow, pcol, pval, b.ncols)
    counts = np.bincount(urow, minlength=len(rows)).astype(np.int64)
    limit = (HASH_LOAD_LIMIT * capacity).astype(np.int64)
    overflowed = counts > limit
    keep = ~overflowed[urow]
    urow, ucol, uval = urow[keep], ucol[keep], uval[keep]

    # Emission order: ascending initial probe slot, ties by column. This
    # mirrors iterating the open-addressed table, so rows come out
    # unsorted by column and post-processing must sort them.
    tsize = np.int64(1) << np.int64(np.ceil(np.log2(np.maximum(capacity, 2))))
    slot = (hash64(ucol.astype(np.uint64)) & (tsize[urow] - 1).astype(np.uint64)).astype(np.int64)
    order = np.lexsort((ucol, slot, urow))
    urow, ucol, uval = urow[order], ucol[order], uval[order]

    counts_kept = np.where(overflowed, 0, counts)
    dest = concat_ranges(offsets, counts_kept)
    out_cols[dest] = ucol.astype(np.int32)
    out_vals[dest] = uval
    return BinOutcome(counts_kept, overflowed)


def accumulate_esc(a: CsrMatrix, b: CsrMatrix, rows: np.ndarray,
                   out_cols: np.ndarray, out_vals: np.ndarray,
                   offsets: np.ndarray) -> BinOutcome:
    """Expand-sort-compact bin: sorted output, no overflow possible."""
    prow, pcol, pval = product_stream(a, b, rows)
    urow, ucol, uval = reduce_by_row_col(prow, pcol, pval, b.ncols)
    counts = np.bincount(urow, minlength=len(rows)).astype(np.int64)
    dest = concat_ranges(offsets, counts)
    out_cols[dest] = ucol.astype(np.int32)
    out_vals[dest] = uval
    return BinOutcome(counts, np.zeros(len(rows), dtype=bool))


def accumulate_dense(a: CsrMatrix, b: CsrMatrix, rows: np.ndarray,
                     span_lo: np.ndarray, span_width: np.ndarray,
                     alloc: np.ndarray, out_cols: np.ndarray,
                     out_vals: np.ndarray, offsets: np.ndarray,
                     chunk_width: int = 1 << 24) -> BinOutcome:
    """Dense bins: scatter-add into span-indexed arrays, emit sorted.

    Rows are processed in groups whose combined span stays under
    chunk_width. A row overflows when its occupied count exceeds its
    reserved output slots.
    """
    n = len(rows)
    counts = np.zeros(n, dtype=np.int64)
    overflowed = np.zeros(n, dtype=bool)
    done = 0
    while done < n:
        take = done
        width = 0
        while take < n and (width == 0 or width + span_width[take] <= chunk_width):
            width += int(span_width[take])
            take += 1
        sel = slice(done, take)
        _dense_chunk(a, b, rows[sel], span_lo[sel], span_width[sel], alloc[sel],
                     out_cols, out_vals, offsets[sel], counts[sel], overflowed[sel])
        done = take
    return BinOutcome(counts, overflowed)


def _dense_chunk(a, b, rows, lo, width, alloc, out_cols, out_vals, offsets,
                 counts_out, overflow_out):
    seg = np.concatenate(([0], np.cumsum(width)))
    prow, pcol, pval = product_stream(a, b, rows)
    pos = seg[prow] + (pcol - lo[prow])
    sums = np.bincount(pos, weights=pval, minlength=seg[-1])
    occupied = np.bincount(pos, minlength=seg[-1]).astype(bool)

    occ_idx = np.flatnonzero(occupied)
    row_of = np.searchsorted(seg, occ_idx, side="right") - 1
    counts = np.bincount(row_of, minlength=len(rows)).astype(np.int64)
    overflow = counts > alloc
    keep = ~overflow[row_of]
    occ_idx = occ_idx[keep]
    row_of = row_of[keep]

    kept_counts = np.where(overflow, 0, counts)
    dest = concat_ranges(offsets, kept_counts)
    out_cols[dest] = (occ_idx - seg[row_of] + lo[row_of]).astype(np.int32)
    out_vals[dest] = sums[occ_idx]
    counts_out[:] = kept_counts
    overflow_out[:] = overflow
