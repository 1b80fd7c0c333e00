"""Lightweight pre-multiplication analysis and workflow selection.

Before any accumulation runs, a single O(nnz_A) pass over A (plus
O(nnz_B) per-row metadata for B) yields per-row intermediate-product
counts, the input expansion ratio ER, and output column span bounds.
Building one sketch per row of B and merging sketches for a small
random sample of A rows then gives a sampled output compression ratio.
Those three signals drive the choice between the upper-bound,
estimation-based and exact symbolic size-prediction workflows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import hll
from .csr import CsrMatrix

# Workflow selection thresholds. Estimation pays off only when rows are
# long enough to amortize sketch merging (ER) and when compaction of the
# over-allocated output is cheap relative to its size (CR). Very short
# rows skip size prediction entirely.
UPPER_BOUND_AVG_PRODUCTS = 64.0
ER_THRESHOLD = 8.0
CR_THRESHOLD = 8.0
REGISTER_ER_THRESHOLD = 48.0

DEFAULT_SAMPLE_RATIO = 0.03
DEFAULT_SAMPLE_MIN = 600
DEFAULT_SAMPLE_MAX = 10_000


class WorkflowKind(enum.Enum):
    UPPER_BOUND = "upper"
    HLL_ESTIMATION = "estimate"
    SYMBOLIC = "symbolic"


@dataclass
class WorkflowChoice:
    kind: WorkflowKind
    registers: int  # 32 or 64 from auto-selection; 128 allowed via override


@dataclass
class RowStats:
    """Per-row product counts and output-span bounds for one A, B pair."""

    products: np.ndarray   # int64, one entry per row of A
    total_products: int
    er: float              # total_products / nnz_A (0 when A is empty)
    span_lo: np.ndarray    # int64; ncols(B) sentinel when products == 0
    span_hi: np.ndarray    # int64; -1 sentinel when products == 0

    def spans(self) -> np.ndarray:
        """Output index range width per row; 0 where no products exist."""
        return np.where(self.products > 0, self.span_hi - self.span_lo + 1, 0)

    def avg_products(self, nrows: int | None = None) -> float:
        n = len(self.products) if nrows is None else nrows
        return self.total_products / n if n else 0.0


@dataclass
class SampledCr:
    """Compression-ratio statistics from a random row sample."""

    cr_hat: float        # ratio estimator: sum(products) / sum(estimates)
    mean_row_cr: float
    std_row_cr: float    # population std of the per-row ratios
    n_sampled: int
    seed: int


class RowSketchTable:
    """One HLL sketch per row of B, stored as a (nrows, m) register matrix."""

    def __init__(self, p: int, registers: np.ndarray):
        self.p = p
        self.registers = registers

    def __len__(self) -> int:
        return self.registers.shape[0]

    def __getitem__(self, i: int) -> hll.HllSketch:
        return hll.HllSketch(self.p, self.registers[i])

    @property
    def m(self) -> int:
        return 1 << self.p


def compute_row_stats(a: CsrMatrix, b: CsrMatrix) -> RowStats:
    """Products per row, ER, and output span bounds, all in one pass."""
    if a.ncols != b.nrows:
        raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.nrows}x{b.ncols}")
    b_nnz = b.row_nnz()
    per_nz = b_nnz[a.col_idx]
    cum = np.concatenate(([0], np.cumsum(per_nz)))
    products = cum[a.row_ptr[1:]] - cum[a.row_ptr[:-1]]
    total = int(products.sum())

    # First/last stored column per B row; sentinels keep empty B rows neutral
    # under min/max reduction.
    b_first = np.full(b.nrows, b.ncols, dtype=np.int64)
    b_last = np.full(b.nrows, -1, dtype=np.int64)
    has = b_nnz > 0
    b_first[has] = b.col_idx[b.row_ptr[:-1][has]]
    b_last[has] = b.col_idx[b.row_ptr[1:][has] - 1]

    span_lo = np.full(a.nrows, b.ncols, dtype=np.int64)
    span_hi = np.full(a.nrows, -1, dtype=np.int64)
    nonempty = np.flatnonzero(a.row_nnz() > 0)
    if len(nonempty):
        starts = a.row_ptr[nonempty]
        span_lo[nonempty] = np.minimum.reduceat(b_first[a.col_idx], starts)
        span_hi[nonempty] = np.maximum.reduceat(b_last[a.col_idx], starts)
    # Rows whose selected B rows are all empty have no products and keep
    # the sentinels.
    none = products == 0
    span_lo[none] = b.ncols
    span_hi[none] = -1

    er = total / a.nnz if a.nnz else 0.0
    return RowStats(products, total, er, span_lo, span_hi)


def build_b_sketches(b: CsrMatrix, p: int) -> RowSketchTable:
    """Sketch the column set of every row of B at precision p."""
    if p not in hll.VALID_PRECISIONS:
        raise ValueError(f"precision must be one of {hll.VALID_PRECISIONS}, got {p}")
    m = 1 << p
    regs = np.zeros((b.nrows, m), dtype=np.uint8)
    if b.nnz:
        idx, rank = hll.hash_ranks(b.col_idx, p)
        rowid = np.repeat(np.arange(b.nrows, dtype=np.int64), b.row_nnz())
        key = rowid * m + idx
        order = np.argsort(key, kind="stable")
        key = key[order]
        rank = rank[order]
        starts = np.flatnonzero(np.concatenate(([True], key[1:] != key[:-1])))
        regs.reshape(-1)[key[starts]] = np.maximum.reduceat(rank, starts)
    return RowSketchTable(p, regs)


def merged_row_estimates(a: CsrMatrix, sketches: RowSketchTable,
                         rows: np.ndarray) -> np.ndarray:
    """Estimate per-row output cardinality for the given A rows.

    Merges the sketches of the B rows each A row selects (element-wise
    max over registers) and estimates the merged sketch. Rows with no
    selected nonzeros estimate 0.
    """
    from .expand import concat_ranges

    lens = a.row_ptr[rows + 1] - a.row_ptr[rows]
    est = np.zeros(len(rows), dtype=np.float64)
    live = np.flatnonzero(lens > 0)
    if len(live) == 0:
        return est
    sel = concat_ranges(a.row_ptr[rows[live]], lens[live])
    expanded = sketches.registers[a.col_idx[sel]]
    starts = np.concatenate(([0], np.cumsum(lens[live])[:-1]))
    merged = np.maximum.reduceat(expanded, starts, axis=0)
    est[live] = hll.estimate_registers(merged)
    return est


def sample_cr(a: CsrMatrix, b_sketches: RowSketchTable, stats: RowStats,
              ratio: float = DEFAULT_SAMPLE_RATIO, min_n: int = DEFAULT_SAMPLE_MIN,
              max_n: int = DEFAULT_SAMPLE_MAX, seed: int = 0) -> SampledCr:
    """Estimate the output compression ratio from a uniform row sample.

    Samples n = clamp(round(ratio * nrows), min_n, max_n) distinct rows
    (all rows when nrows <= min_n), merges each sampled row's B sketches,
    and forms the ratio-of-sums estimator cr_hat along with per-row
    compression statistics. Deterministic for a fixed seed.
    """
    nrows = a.nrows
    n = int(np.clip(round(ratio * nrows), min(min_n, nrows), min(max_n, nrows)))
    if nrows == 0:
        return SampledCr(1.0, 1.0, 0.0, 0, seed)
    rng = np.random.default_rng(seed)
    if n >= nrows:
        rows = np.arange(nrows, dtype=np.int64)
    else:
        rows = np.sort(rng.choice(nrows, size=n, replace=False)).astype(np.int64)
    est = merged_row_estimates(a, b_sketches, rows)
    prods = stats.products[rows].astype(np.float64)

    cr_hat = float(prods.sum() / max(1.0, est.sum()))
    row_cr = np.where(prods > 0, prods / np.maximum(est, 1.0), 1.0)
    return SampledCr(cr_hat, float(row_cr.mean()), float(row_cr.std()), len(rows), seed)


def select_registers(er: float) -> int:
    """32 registers per sketch for sparse expansions (ER < 48), else 64."""
    if er < 0:
        raise ValueError("ER must be non-negative")
    return 32 if er < REGISTER_ER_THRESHOLD else 64


def select_workflow(avg_products: float, er: float, cr_hat: float) -> WorkflowKind:
    """Pick the size-prediction workflow from the analysis metrics.

    Upper-bound when rows are on average too short to bother predicting;
    HLL estimation when both ER and the sampled CR clear their
    thresholds; the exact symbolic pass otherwise.
    """
    if avg_products < UPPER_BOUND_AVG_PRODUCTS:
        return WorkflowKind.UPPER_BOUND
    if er >= ER_THRESHOLD and cr_hat >= CR_THRESHOLD:
        return WorkflowKind.HLL_ESTIMATION
    return WorkflowKind.SYMBOLIC


def cr_variance_bound(cv: float, m: int, n_sampled: int) -> float:
    """Relative variance of 1/CR for the sampled estimator.

    (1/n) * (eps^2 + CV^2 * (1 + eps^2)) with eps = 1.04 / sqrt(m),
    where CV is the coefficient of variation of the output row sizes.
    """
    if n_sampled <= 0:
        raise ValueError("n_sampled must be positive")
    eps2 = (1.04 / np.sqrt(m)) ** 2
    return (eps2 + cv * cv * (1.0 + eps2)) / n_sampled
