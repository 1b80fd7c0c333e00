"""CPU-parallel SpGEMM with sketch-based output size estimation.

Multiplies sparse CSR matrices row-wise, replacing the exact symbolic
sizing pass with per-row cardinality sketches when the input statistics
say that pays off, and falling back to exact or upper-bound sizing
otherwise. See the README for the workflow details and CLI usage.
"""

from .analysis import (RowStats, SampledCr, WorkflowChoice, WorkflowKind,
                       build_b_sketches, compute_row_stats, cr_variance_bound,
                       sample_cr, select_registers, select_workflow)
from .accumulate import (PlanKind, RowPlan, RowResult, TierConfig,
                         dense_accumulate, esc_accumulate, fallback_accumulate,
                         hash_accumulate, plan_rows, sort_row)
from .csr import (CsrMatrix, MatrixMarketError, from_triplets, identity,
                  load_matrix_market, parse_matrix_market, save_matrix_market,
                  transpose, validate, write_matrix_market)
from .engine import (DeadlineExceeded, EngineConfig, ResourceLimitError,
                     RunReport, StagedOutput, WorkflowOverride, compact,
                     multiply_mode, spgemm)
from .hll import HllSketch, hash64
from .oracle import exact_distinct_count, reference_row_nnz, reference_spgemm
from .predict import (PredictionKind, SizePrediction, conservative_cr,
                      estimate_pass, symbolic_pass, upper_bound_pass)

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix", "MatrixMarketError", "from_triplets", "identity",
    "parse_matrix_market", "write_matrix_market", "load_matrix_market",
    "save_matrix_market", "transpose", "validate",
    "HllSketch", "hash64",
    "RowStats", "SampledCr", "WorkflowChoice", "WorkflowKind",
    "compute_row_stats", "build_b_sketches", "sample_cr",
    "select_registers", "select_workflow", "cr_variance_bound",
    "PredictionKind", "SizePrediction", "symbolic_pass", "estimate_pass",
    "upper_bound_pass", "conservative_cr",
    "TierConfig", "PlanKind", "RowPlan", "RowResult", "plan_rows",
    "hash_accumulate", "dense_accumulate", "esc_accumulate",
    "fallback_accumulate", "sort_row",
    "EngineConfig", "WorkflowOverride", "RunReport", "StagedOutput",
    "spgemm", "compact", "multiply_mode",
    "ResourceLimitError", "DeadlineExceeded",
    "reference_spgemm", "reference_row_nnz", "exact_distinct_count",
]
