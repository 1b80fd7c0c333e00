"""Command-line front end.

Four subcommands: ``multiply`` runs one product and writes the result
and/or a JSON run report; ``analyze`` prints the pre-multiplication
metrics and the workflow the selector would pick; ``bench`` runs the
warmup/measured-runs protocol over one matrix or a list and appends CSV
records; ``est-eval`` measures estimation quality (per-row error,
overflow ratio under the binning rules, sampled-CR error) per register
count.

All non-timing output is deterministic for a fixed --seed. Exit codes:
1 for usage, parse and dimension errors; 2 for resource errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time

import numpy as np

from .csr import CsrMatrix, MatrixMarketError, load_matrix_market, save_matrix_market
from .engine import (DeadlineExceeded, EngineConfig, ResourceLimitError, RunReport,
                     WorkflowOverride, multiply_mode, spgemm)

CSV_COLUMNS = ["matrix", "op", "workflow", "registers", "coef", "seed", "warmup",
               "runs", "status", "analysis_ms", "sketch_ms", "predict_ms",
               "numeric_ms", "fallback_ms", "compact_ms", "total_ms", "nnz_a",
               "nnz_c", "products", "flops", "gflops", "overflow_rows",
               "mean_rel_err", "std_rel_err", "overflow_ratio", "cr_true",
               "cr_sampled"]

_STAGES = ["analysis_ms", "sketch_ms", "predict_ms", "numeric_ms",
           "fallback_ms", "compact_ms", "total_ms"]


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _add_common(p: argparse.ArgumentParser, multi_registers: bool = False):
    p.add_argument("--a", required=True, help="left operand (.mtx)")
    p.add_argument("--op", default="aa", choices=["aa", "aat", "ab"])
    p.add_argument("--b", help="right operand (.mtx), required for --op ab")
    p.add_argument("--workflow", default="auto",
                   choices=["auto", "symbolic", "estimate", "upper"])
    if multi_registers:
        p.add_argument("--registers", default="32,64,128",
                       help="comma-separated register counts to evaluate")
    else:
        p.add_argument("--registers", type=int, choices=[32, 64, 128])
    p.add_argument("--coef", type=float, help="hash expansion coefficient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--sample-ratio", type=float, default=0.03)
    p.add_argument("--sample-min", type=int, default=600)
    p.add_argument("--sample-max", type=int, default=10000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchgemm",
                                     description="Sparse matrix-matrix multiplication "
                                                 "with sketch-based size estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("multiply", help="multiply and write result/report")
    _add_common(p)
    p.add_argument("--out", help="write the product here (.mtx)")
    p.add_argument("--report", help="write the JSON run report here")
    p.set_defaults(func=cmd_multiply)

    p = sub.add_parser("analyze", help="print analysis metrics and workflow choice")
    _add_common(p)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="warmup + measured runs, CSV output")
    _add_common(p)
    p.add_argument("--list", help="file with one matrix path per line")
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--timeout", type=float, default=30.0,
                   help="per-run deadline in seconds")
    p.add_argument("--csv", help="append records here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("est-eval", help="estimation quality per register count")
    _add_common(p, multi_registers=True)
    p.add_argument("--list", help="file with one matrix path per line")
    p.add_argument("--csv", help="append records here")
    p.set_defaults(func=cmd_est_eval)
    return parser


def _make_config(args, workflow: str | None = None, registers: int | None = None,
                 compute_errors: bool = False) -> EngineConfig:
    return EngineConfig(
        workflow=WorkflowOverride(workflow or args.workflow),
        registers=registers if registers is not None else args.registers,
        coef=args.coef,
        sample_ratio=args.sample_ratio,
        sample_min=args.sample_min,
        sample_max=args.sample_max,
        seed=args.seed,
        workers=args.threads,
        compute_estimation_errors=compute_errors,
    )


def _load_operands(args):
    try:
        a = load_matrix_market(args.a)
    except OSError as exc:
        raise CliError(f"cannot read {args.a}: {exc}")
    except MatrixMarketError as exc:
        raise CliError(f"{args.a}: {exc}")
    b = None
    if args.op == "ab":
        if not getattr(args, "b", None):
            raise CliError("--op ab requires --b")
        try:
            b = load_matrix_market(args.b)
        except OSError as exc:
            raise CliError(f"cannot read {args.b}: {exc}")
        except MatrixMarketError as exc:
            raise CliError(f"{args.b}: {exc}")
    try:
        return multiply_mode(a, args.op, b)
    except ValueError as exc:
        raise CliError(str(exc))


def cmd_multiply(args) -> int:
    a, b = _load_operands(args)
    cfg = _make_config(args)
    try:
        c, report = spgemm(a, b, cfg)
    except ValueError as exc:
        raise CliError(str(exc))
    except ResourceLimitError as exc:
        raise CliError(str(exc), code=2)
    if args.out:
        save_matrix_market(c, args.out)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(dataclasses.asdict(report), fh, indent=2)
            fh.write("\n")
    print(f"{args.a}: {args.op} -> {c.nrows}x{c.ncols}, nnz={c.nnz}, "
          f"workflow={report.workflow}, registers={report.registers}, "
          f"overflow_rows={report.overflow_row_count}, total={report.total_ms:.2f} ms")
    return 0


def cmd_analyze(args) -> int:
    from .analysis import (compute_row_stats, build_b_sketches, sample_cr,
                           select_registers, select_workflow)

    a, b = _load_operands(args)
    try:
        stats = compute_row_stats(a, b)
    except ValueError as exc:
        raise CliError(str(exc))
    avg = stats.avg_products()
    registers = args.registers or select_registers(stats.er)
    cr = None
    if avg >= 64:
        sketches = build_b_sketches(b, {32: 5, 64: 6, 128: 7}[registers])
        cr = sample_cr(a, sketches, stats, args.sample_ratio, args.sample_min,
                       args.sample_max, args.seed)
        workflow = select_workflow(avg, stats.er, cr.cr_hat)
    else:
        workflow = select_workflow(avg, stats.er, 0.0)
    payload = {
        "matrix": args.a,
        "op": args.op,
        "nnz_a": a.nnz,
        "total_products": stats.total_products,
        "avg_products": avg,
        "er": stats.er,
        "cr_sampled": None if cr is None else cr.cr_hat,
        "cr_row_mean": None if cr is None else cr.mean_row_cr,
        "cr_row_std": None if cr is None else cr.std_row_cr,
        "n_sampled": None if cr is None else cr.n_sampled,
        "registers": registers,
        "workflow": workflow.value,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"matrix:         {args.a} ({args.op})")
        print(f"nnz(A):         {a.nnz}")
        print(f"products:       {stats.total_products} (avg {avg:.2f}/row)")
        print(f"ER:             {stats.er:.3f}")
        if cr is not None:
            print(f"sampled CR:     {cr.cr_hat:.3f} (row mean {cr.mean_row_cr:.3f}, "
                  f"std {cr.std_row_cr:.3f}, n={cr.n_sampled})")
        else:
            print("sampled CR:     skipped (short rows)")
        print(f"registers:      {registers}")
        print(f"workflow:       {workflow.value}")
    return 0


def _matrix_list(args) -> list[str]:
    if getattr(args, "list", None):
        try:
            with open(args.list) as fh:
                return [ln.strip() for ln in fh if ln.strip()]
        except OSError as exc:
            raise CliError(f"cannot read {args.list}: {exc}")
    return [args.a]


def _blank_record(path: str, args, workflow: str, registers) -> dict:
    return {col: "" for col in CSV_COLUMNS} | {
        "matrix": path, "op": args.op, "workflow": workflow,
        "registers": "" if registers is None else registers,
        "coef": "" if args.coef is None else args.coef, "seed": args.seed,
    }


def _write_csv(path: str | None, records: list[dict]):
    if path is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(records)
        return
    try:
        with open(path) as fh:
            has_header = fh.readline().strip() != ""
    except OSError:
        has_header = False
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if not has_header:
            writer.writeheader()
        writer.writerows(records)


def cmd_bench(args) -> int:
    records = []
    for path in _matrix_list(args):
        rec = _blank_record(path, args, args.workflow, args.registers)
        rec |= {"warmup": args.warmup, "runs": args.runs}
        try:
            a = load_matrix_market(path)
            b = None
            if args.op == "ab":
                if not args.b:
                    raise CliError("--op ab requires --b")
                b = load_matrix_market(args.b)
            a, b = multiply_mode(a, args.op, b)
            cfg = _make_config(args)
            reports = []
            status = "ok"
            for i in range(args.warmup + args.runs):
                deadline = time.perf_counter() + args.timeout
                try:
                    c, report = spgemm(a, b, cfg, deadline=deadline)
                except DeadlineExceeded:
                    status = "timeout"
                    break
                if i >= args.warmup:
                    reports.append(report)
            if status == "ok" and reports:
                rec |= _bench_fields(a, reports)
            rec["status"] = status
        except (OSError, MatrixMarketError, ValueError, CliError) as exc:
            rec["status"] = "error"
            print(f"{path}: {exc}", file=sys.stderr)
        except ResourceLimitError as exc:
            rec["status"] = "error"
            print(f"{path}: {exc}", file=sys.stderr)
        records.append(rec)
    _write_csv(args.csv, records)
    return 0


def _bench_fields(a: CsrMatrix, reports: list[RunReport]) -> dict:
    mean = {stage: float(np.mean([getattr(r, stage) for r in reports]))
            for stage in _STAGES}
    last = reports[-1]
    flops = 2 * last.total_products
    gflops = flops / (mean["total_ms"] / 1e3) / 1e9 if mean["total_ms"] > 0 else 0.0
    return mean | {
        "workflow": last.workflow, "registers": last.registers,
        "nnz_a": a.nnz, "nnz_c": last.nnz_c, "products": last.total_products,
        "flops": flops, "gflops": gflops,
        "overflow_rows": last.overflow_row_count,
        "cr_true": "" if last.cr_true is None else last.cr_true,
        "cr_sampled": "" if last.cr_hat is None else last.cr_hat,
    }


def cmd_est_eval(args) -> int:
    try:
        registers_list = [int(tok) for tok in str(args.registers).split(",") if tok]
    except ValueError:
        raise CliError(f"bad --registers '{args.registers}'")
    if any(r not in (32, 64, 128) for r in registers_list):
        raise CliError("register counts must be 32, 64 or 128")
    records = []
    for path in _matrix_list(args):
        for m in registers_list:
            rec = _blank_record(path, args, "estimate", m)
            try:
                a = load_matrix_market(path)
                b = None
                if args.op == "ab":
                    if not args.b:
                        raise CliError("--op ab requires --b")
                    b = load_matrix_market(args.b)
                a2, b2 = multiply_mode(a, args.op, b)
                cfg = _make_config(args, workflow="estimate", registers=m,
                                   compute_errors=True)
                c, report = spgemm(a2, b2, cfg)
                nrows = a2.nrows
                rec |= {
                    "status": "ok",
                    "nnz_a": a2.nnz, "nnz_c": report.nnz_c,
                    "products": report.total_products,
                    "flops": 2 * report.total_products,
                    "overflow_rows": report.overflow_row_count,
                    "overflow_ratio": report.overflow_row_count / nrows if nrows else 0.0,
                    "mean_rel_err": report.est_mean_rel_err,
                    "std_rel_err": report.est_std_rel_err,
                    "cr_true": "" if report.cr_true is None else report.cr_true,
                    "cr_sampled": "" if report.cr_hat is None else report.cr_hat,
                }
            except (OSError, MatrixMarketError, ValueError, CliError) as exc:
                rec["status"] = "error"
                print(f"{path}: {exc}", file=sys.stderr)
            records.append(rec)
    _write_csv(args.csv, records)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
