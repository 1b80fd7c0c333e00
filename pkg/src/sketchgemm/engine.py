"""SpGEMM pipeline: analysis, size prediction, binning, numeric, fallback,
compaction.

The pipeline is a sequence of barrier-separated row-parallel phases.
Analysis gathers row statistics; depending on those (or an override) the
size prediction runs as an exact symbolic pass, a sketch-based
estimation pass, or a product-count upper bound. Rows are then binned
into accumulator tiers, numeric accumulation writes into over-allocated
per-row slabs, rows that overflowed their tier rerun through a dense
fallback, and a final pass sorts hash-bin rows and compacts the slabs
into a canonical CSR matrix.

Per-row results depend only on the row, never on chunking, so output is
bitwise identical for any worker count.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import accumulate as acc
from .analysis import (DEFAULT_SAMPLE_MAX, DEFAULT_SAMPLE_MIN, DEFAULT_SAMPLE_RATIO,
                       RowSketchTable, SampledCr, WorkflowChoice, WorkflowKind,
                       build_b_sketches, compute_row_stats, sample_cr,
                       select_registers, select_workflow)
from .csr import CsrMatrix, transpose
from .expand import concat_ranges
from .predict import (PredictionKind, conservative_cr, estimate_pass,
                      symbolic_pass, upper_bound_pass)

_PRECISION_FOR = {32: 5, 64: 6, 128: 7}


class ResourceLimitError(RuntimeError):
    """Staged output would exceed the configured memory budget."""


class DeadlineExceeded(RuntimeError):
    """Cooperative per-run timeout hit between pipeline stages."""


class WorkflowOverride(enum.Enum):
    AUTO = "auto"
    FORCE_SYMBOLIC = "symbolic"
    FORCE_ESTIMATE = "estimate"
    FORCE_UPPER_BOUND = "upper"


@dataclass
class EngineConfig:
    workflow: WorkflowOverride = WorkflowOverride.AUTO
    registers: int | None = None        # 32, 64 or 128; None = auto (32/64)
    tiers: acc.TierConfig = field(default_factory=acc.TierConfig)
    coef: float | None = None           # None = tier default, bumped to 2.0 at 32 registers
    sample_ratio: float = DEFAULT_SAMPLE_RATIO
    sample_min: int = DEFAULT_SAMPLE_MIN
    sample_max: int = DEFAULT_SAMPLE_MAX
    seed: int = 0
    workers: int = 1
    staging_limit_bytes: int | None = None
    compute_estimation_errors: bool = False  # also run the symbolic pass, report error stats

    def __post_init__(self):
        if self.registers is not None and self.registers not in _PRECISION_FOR:
            raise ValueError(f"registers must be one of {sorted(_PRECISION_FOR)}")
        if self.sample_ratio <= 0 or self.sample_min <= 0 or self.sample_max <= 0:
            raise ValueError("sampling parameters must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class StagedOutput:
    """Over-allocated per-row output slabs plus the fallback side-slab."""

    alloc_ptr: np.ndarray   # int64 per-row offsets into the main slabs
    counts: np.ndarray      # int64 actual entries per row
    cols: np.ndarray        # int32 main slab
    vals: np.ndarray        # float64 main slab
    fb_rows: np.ndarray     # rows resolved by the fallback pass
    fb_ptr: np.ndarray      # offsets into the fallback slabs, len(fb_rows) + 1
    fb_cols: np.ndarray
    fb_vals: np.ndarray


@dataclass
class RunReport:
    workflow: str
    registers: int
    er: float
    cr_hat: float | None
    cr_true: float | None
    analysis_ms: float
    sketch_ms: float
    predict_ms: float
    numeric_ms: float
    fallback_ms: float
    compact_ms: float
    total_ms: float
    overflow_row_count: int
    nnz_c: int
    total_products: int
    bitmap_query: bool
    est_mean_rel_err: float | None = None
    est_std_rel_err: float | None = None


def multiply_mode(a: CsrMatrix, mode: str, b: CsrMatrix | None = None):
    """Resolve the operand pair for one of the supported products."""
    mode = mode.lower()
    if mode == "aa":
        if a.nrows != a.ncols:
            raise ValueError(f"AA requires a square matrix, got {a.nrows}x{a.ncols}")
        return a, a
    if mode == "aat":
        return a, transpose(a)
    if mode == "ab":
        if b is None:
            raise ValueError("AB mode requires a second matrix")
        if a.ncols != b.nrows:
            raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.nrows}x{b.ncols}")
        return a, b
    raise ValueError(f"unknown mode '{mode}' (expected aa, aat or ab)")


def _check_deadline(deadline: float | None):
    if deadline is not None and time.perf_counter() > deadline:
        raise DeadlineExceeded("run exceeded its deadline")


def spgemm(a: CsrMatrix, b: CsrMatrix, cfg: EngineConfig | None = None,
           deadline: float | None = None) -> tuple[CsrMatrix, RunReport]:
    """Multiply two CSR matrices; returns (C, run report).

    Deterministic for fixed inputs and cfg.seed at any worker count.
    ``deadline`` is an absolute time.perf_counter() value checked
    between stages.
    """
    cfg = cfg or EngineConfig()
    if a.ncols != b.nrows:
        raise ValueError(f"dimension mismatch: A is {a.nrows}x{a.ncols}, B is {b.nrows}x{b.ncols}")
    t0 = time.perf_counter()

    # analysis
    stats = compute_row_stats(a, b)
    avg = stats.avg_products()
    t1 = time.perf_counter()
    _check_deadline(deadline)

    # sketch construction and CR sampling (skipped whenever the workflow
    # cannot use them: forced symbolic/upper-bound or short-row auto runs)
    registers = cfg.registers if cfg.registers is not None else select_registers(stats.er)
    sketches: RowSketchTable | None = None
    sampled: SampledCr | None = None
    if cfg.workflow is WorkflowOverride.FORCE_SYMBOLIC:
        choice = WorkflowChoice(WorkflowKind.SYMBOLIC, registers)
    elif cfg.workflow is WorkflowOverride.FORCE_UPPER_BOUND:
        choice = WorkflowChoice(WorkflowKind.UPPER_BOUND, registers)
    elif cfg.workflow is WorkflowOverride.AUTO and avg < 64:
        choice = WorkflowChoice(WorkflowKind.UPPER_BOUND, registers)
    else:
        sketches = build_b_sketches(b, _PRECISION_FOR[registers])
        sampled = sample_cr(a, sketches, stats, cfg.sample_ratio,
                            cfg.sample_min, cfg.sample_max, cfg.seed)
        if cfg.workflow is WorkflowOverride.FORCE_ESTIMATE:
            choice = WorkflowChoice(WorkflowKind.HLL_ESTIMATION, registers)
        else:
            choice = WorkflowChoice(select_workflow(avg, stats.er, sampled.cr_hat),
                                    registers)
    t2 = time.perf_counter()
    _check_deadline(deadline)

    # size prediction
    if choice.kind is WorkflowKind.SYMBOLIC:
        pred = symbolic_pass(a, b, stats,
                             bitmap_span_limit=cfg.tiers.dense_spans[-1])
    elif choice.kind is WorkflowKind.HLL_ESTIMATION:
        pred = estimate_pass(a, sketches)
    else:
        pred = upper_bound_pass(stats)
    t3 = time.perf_counter()
    _check_deadline(deadline)

    # binning + numeric accumulation into staged slabs
    coef = cfg.coef
    if coef is None:
        coef = 2.0 if registers == 32 else cfg.tiers.expansion_coef
    tiers = replace(cfg.tiers, expansion_coef=coef)
    bitmap_query = (sampled is not None
                    and conservative_cr(sampled) >= tiers.bitmap_query_threshold)
    plans = acc.plan_rows(pred, stats, choice, tiers)
    staged, overflow = _numeric_phase(a, b, stats, plans, cfg)
    t4 = time.perf_counter()
    _check_deadline(deadline)

    # fallback: rerun planned-fallback rows and runtime overflows
    fb_rows = np.flatnonzero(overflow | ((plans.kind == acc.PlanKind.FALLBACK)
                                         & (stats.products > 0)))
    _fallback_phase(a, b, stats, fb_rows, staged)
    t5 = time.perf_counter()
    _check_deadline(deadline)

    # post-processing: sort hash-bin rows, compact slabs into the CSR
    hash_kind = np.isin(plans.kind, (acc.PlanKind.HASH, acc.PlanKind.ENHANCED_HASH))
    fb_mask = np.zeros(a.nrows, dtype=bool)
    fb_mask[fb_rows] = True
    sort_rows = np.flatnonzero(hash_kind & (staged.counts > 0) & ~fb_mask)
    _sort_hash_rows(staged, sort_rows, b.ncols)
    row_ptr, out_cols, out_vals = compact(staged)
    c = CsrMatrix(a.nrows, b.ncols, row_ptr, out_cols, out_vals)
    t6 = time.perf_counter()

    est_mean = est_std = None
    if cfg.compute_estimation_errors and pred.kind is PredictionKind.ESTIMATED:
        truth = np.diff(row_ptr)
        live = truth > 0
        if live.any():
            rel = np.abs(pred.per_row[live] - truth[live]) / truth[live]
            est_mean, est_std = float(rel.mean()), float(rel.std())
        else:
            est_mean, est_std = 0.0, 0.0

    nnz_c = int(row_ptr[-1])
    report = RunReport(
        workflow=choice.kind.value,
        registers=registers,
        er=stats.er,
        cr_hat=None if sampled is None else sampled.cr_hat,
        cr_true=(stats.total_products / nnz_c) if nnz_c else None,
        analysis_ms=(t1 - t0) * 1e3,
        sketch_ms=(t2 - t1) * 1e3 if sketches is not None else 0.0,
        predict_ms=(t3 - t2) * 1e3,
        numeric_ms=(t4 - t3) * 1e3,
        fallback_ms=(t5 - t4) * 1e3,
        compact_ms=(t6 - t5) * 1e3,
        total_ms=(time.perf_counter() - t0) * 1e3,
        overflow_row_count=int(len(fb_rows)),
        nnz_c=nnz_c,
        total_products=stats.total_products,
        bitmap_query=bool(bitmap_query),
        est_mean_rel_err=est_mean,
        est_std_rel_err=est_std,
    )
    return c, report


def _numeric_phase(a: CsrMatrix, b: CsrMatrix, stats, plans: acc.RowPlanTable,
                   cfg: EngineConfig):
    """Run the normal accumulation kernels; returns (StagedOutput, overflow)."""
    nrows = a.nrows
    alloc_ptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(plans.alloc, out=alloc_ptr[1:])
    total = int(alloc_ptr[-1])
    staging_bytes = total * 12  # 4-byte column + 8-byte value per slot
    if cfg.staging_limit_bytes is not None and staging_bytes > cfg.staging_limit_bytes:
        raise ResourceLimitError(
            f"staged output needs {staging_bytes} bytes, over the "
            f"{cfg.staging_limit_bytes} byte limit; the symbolic workflow "
            f"(workflow='symbolic') stages exact-sized rows")
    try:
        out_cols = np.empty(total, dtype=np.int32)
        out_vals = np.empty(total, dtype=np.float64)
    except MemoryError as exc:
        raise ResourceLimitError(
            "staged output allocation failed; the symbolic workflow "
            "(workflow='symbolic') needs less memory") from exc
    counts = np.zeros(nrows, dtype=np.int64)
    overflow = np.zeros(nrows, dtype=bool)
    staged = StagedOutput(alloc_ptr[:-1], counts, out_cols, out_vals,
                          np.empty(0, np.int64), np.zeros(1, np.int64),
                          np.empty(0, np.int32), np.empty(0, np.float64))

    def run_chunk(rows: np.ndarray):
        kinds = plans.kind[rows]
        hl = rows[np.isin(kinds, (acc.PlanKind.HASH, acc.PlanKind.ENHANCED_HASH))
                  & (stats.products[rows] > 0)]
        if len(hl):
            out = acc.accumulate_hash_like(a, b, hl, plans.capacity[hl],
                                           out_cols, out_vals, staged.alloc_ptr[hl])
            counts[hl] = out.counts
            overflow[hl] = out.overflowed
        esc = rows[kinds == acc.PlanKind.ESC]
        if len(esc):
            out = acc.accumulate_esc(a, b, esc, out_cols, out_vals,
                                     staged.alloc_ptr[esc])
            counts[esc] = out.counts
        dn = rows[kinds == acc.PlanKind.DENSE]
        if len(dn):
            out = acc.accumulate_dense(a, b, dn, stats.span_lo[dn],
                                       stats.spans()[dn], plans.alloc[dn],
                                       out_cols, out_vals, staged.alloc_ptr[dn])
            counts[dn] = out.counts
            overflow[dn] = out.overflowed

    chunks = [c for c in np.array_split(np.arange(nrows, dtype=np.int64),
                                        max(1, min(cfg.workers, max(nrows, 1))))
              if len(c)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(run_chunk, chunks))
    else:
        for chunk in chunks:
            run_chunk(chunk)
    return staged, overflow


def _fallback_phase(a: CsrMatrix, b: CsrMatrix, stats, fb_rows: np.ndarray,
                    staged: StagedOutput):
    """Dense full-width rerun of overflowed and planned-fallback rows."""
    staged.fb_rows = fb_rows
    if len(fb_rows) == 0:
        return
    fb_alloc = stats.products[fb_rows]
    fb_ptr = np.zeros(len(fb_rows) + 1, dtype=np.int64)
    np.cumsum(fb_alloc, out=fb_ptr[1:])
    staged.fb_ptr = fb_ptr
    staged.fb_cols = np.empty(int(fb_ptr[-1]), dtype=np.int32)
    staged.fb_vals = np.empty(int(fb_ptr[-1]), dtype=np.float64)
    full_lo = np.zeros(len(fb_rows), dtype=np.int64)
    full_width = np.full(len(fb_rows), b.ncols, dtype=np.int64)
    out = acc.accumulate_dense(a, b, fb_rows, full_lo, full_width, fb_alloc,
                               staged.fb_cols, staged.fb_vals, fb_ptr[:-1])
    staged.counts[fb_rows] = out.counts


def _sort_hash_rows(staged: StagedOutput, rows: np.ndarray, ncols: int):
    """Column-sort the slab segments of hash-accumulated rows in place."""
    if len(rows) == 0:
        return
    counts = staged.counts[rows]
    src = concat_ranges(staged.alloc_ptr[rows], counts)
    if len(src) == 0:
        return
    seq = np.repeat(np.arange(len(rows), dtype=np.int64), counts)
    key = seq * np.int64(ncols) + staged.cols[src]
    order = np.argsort(key, kind="stable")
    staged.cols[src] = staged.cols[src][order]
    staged.vals[src] = staged.vals[src][order]


def compact(staged: StagedOutput) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Prefix-sum the per-row counts and copy slab segments contiguously."""
    nrows = len(staged.counts)
    row_ptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(staged.counts, out=row_ptr[1:])
    out_cols = np.empty(int(row_ptr[-1]), dtype=np.int32)
    out_vals = np.empty(int(row_ptr[-1]), dtype=np.float64)

    is_fb = np.zeros(nrows, dtype=bool)
    is_fb[staged.fb_rows] = True
    main_rows = np.flatnonzero(~is_fb & (staged.counts > 0))
    if len(main_rows):
        src = concat_ranges(staged.alloc_ptr[main_rows], staged.counts[main_rows])
        dst = concat_ranges(row_ptr[main_rows], staged.counts[main_rows])
        out_cols[dst] = staged.cols[src]
        out_vals[dst] = staged.vals[src]
    if len(staged.fb_rows):
        counts = staged.counts[staged.fb_rows]
        src = concat_ranges(staged.fb_ptr[:-1], counts)
        dst = concat_ranges(row_ptr[staged.fb_rows], counts)
        out_cols[dst] = staged.fb_cols[src]
        out_vals[dst] = staged.fb_vals[src]
    return row_ptr, out_cols, out_vals
