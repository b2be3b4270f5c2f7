"""Command-line interface.

Commands
--------
segment        detect change points in a sequence read from CSV or JSONL
eval           compare a hypothesized segmentation against a reference
simulate       Monte-Carlo sweep of the estimator over sequence lengths
sweep          estimated change-point count across a penalty grid
embed          fetch embeddings for a text file via an HTTP service
concentration  empirical tail of the block cost against its analytic bound

Every JSON artifact embeds the fully resolved configuration under "config"
and the package version under "version". Keys are sorted and non-finite
floats are written as the strings "inf", "-inf", or "nan", so fixed-seed
runs are byte-identical. Timings (runtime_ms) appear only in `segment`
output, which is otherwise deterministic.

JSON schemas (abridged)
-----------------------
segment        {command, version, config, T, change_points, K, objective,
                beta, per_segment_costs, runtime_ms}
eval           {command, version, config, pk, window_diff, window, k_true,
                k_est, k_match, loc_err_true_to_est, loc_err_est_to_true, ell}
simulate       {command, version, config, aggregates: [...], records: [...]}
               records carry {T, replicate, k_true, k_est, k_match, pk,
               window_diff, loc_err_est_to_true, loc_err_true_to_est};
               the CSV mirror has one row per record, same columns.
sweep          rows {C, beta, k_est, objective}; CSV output ends with a
               comment footer asserting the staircase is nonincreasing.
embed          JSONL: one {"vec": [...], "text": ...} object per input line.
concentration  {command, version, config, x_grid, empirical_tail, bound,
                lambda_rate, cost_mean, cost_std}

Exit codes: 0 success, 2 usage or input validation failure, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .ingest import (
    EmbedServiceConfig,
    fetch_embeddings,
    load_csv_matrix,
    load_jsonl,
    normalize_rows,
    save_jsonl,
)
from .kernels import Kernel, KernelSpec, compute_gram
from .cost import build_prefix
from .metrics import evaluate
from .segmentation import (
    DEFAULT_PENALTY_C,
    PenaltySchedule,
    Segmentation,
    pelt_penalized,
    penalty_floor,
    penalty_value,
)
from .simulate import (
    SimConfig,
    concentration_check,
    consistency_experiment,
    sweep_penalty,
)

logger = logging.getLogger("kernelseg")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Kernel):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        if math.isnan(f):
            return "nan"
        return "inf" if f > 0 else "-inf"
    return obj


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _kernel_from_args(args) -> KernelSpec:
    bandwidth = None
    if getattr(args, "bandwidth", "median") != "median":
        bandwidth = float(args.bandwidth)
    kind = Kernel(args.kernel)
    if kind is Kernel.COSINE:
        return KernelSpec(kind=kind)
    return KernelSpec(kind=kind, bandwidth=bandwidth)


def _kernel_dict(spec: KernelSpec) -> dict:
    return {"kind": spec.kind.value, "bandwidth": spec.bandwidth, "bound": spec.bound}


def _load_sequence(path: str):
    if path.endswith(".jsonl"):
        return load_jsonl(path).sequence
    return load_csv_matrix(path)


def _load_segmentation(path: str) -> Segmentation:
    if path.endswith(".jsonl"):
        entry = load_jsonl(path)
        if entry.gold is None:
            raise ValueError(f"{path} carries no boundary_after flags")
        return entry.gold
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or "T" not in obj or "change_points" not in obj:
        raise ValueError(f"{path} must contain 'T' and 'change_points'")
    return Segmentation(int(obj["T"]), tuple(int(c) for c in obj["change_points"]))


def cmd_segment(args) -> int:
    seq = _load_sequence(args.input)
    if seq.T < 1:
        raise ValueError("input sequence is empty")
    kernel = _kernel_from_args(args)
    if kernel.kind is Kernel.COSINE or args.normalize:
        seq = normalize_rows(seq)
    spec = kernel.resolved(seq)
    c_used = args.C if args.C is not None else DEFAULT_PENALTY_C[spec.kind.value]
    schedule = PenaltySchedule(C=c_used, m_hint=args.m)
    beta = args.beta if args.beta is not None else penalty_value(schedule, seq.T)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if seq.T >= 2 and beta < penalty_floor(args.m, spec.bound, seq.T):
        logger.warning(
            "beta=%.6g sits below the consistency floor %.6g (m=%d); "
            "results remain exact minimizers but carry no guarantee",
            beta,
            penalty_floor(args.m, spec.bound, seq.T),
            args.m,
        )
    start = time.perf_counter()
    prefix = build_prefix(compute_gram(seq, spec))
    result = pelt_penalized(prefix, beta, min_size=args.min_size)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    _emit_json(
        {
            "command": "segment",
            "version": __version__,
            "config": {
                "input": args.input,
                "kernel": _kernel_dict(spec),
                "C": None if args.beta is not None else c_used,
                "beta": float(beta),
                "min_size": args.min_size,
                "normalize": bool(kernel.kind is Kernel.COSINE or args.normalize),
                "T": seq.T,
                "d": seq.dim,
            },
            "T": seq.T,
            "change_points": list(result.segmentation.change_points),
            "K": result.segmentation.K,
            "objective": result.objective,
            "beta": result.beta_used,
            "per_segment_costs": list(result.per_segment_costs),
            "runtime_ms": runtime_ms,
        },
        args.out,
    )
    return 0


def cmd_eval(args) -> int:
    ref = _load_segmentation(args.ref)
    hyp = _load_segmentation(args.hyp)
    report = evaluate(ref, hyp, window=args.window, ell=args.ell)
    _emit_json(
        {
            "command": "eval",
            "version": __version__,
            "config": {
                "ref": args.ref,
                "hyp": args.hyp,
                "window": report.window,
                "ell": report.ell,
            },
            "pk": report.pk,
            "window_diff": report.window_diff,
            "window": report.window,
            "k_true": report.k_true,
            "k_est": report.k_est,
            "k_match": report.k_match,
            "loc_err_true_to_est": report.loc_err_true_to_est,
            "loc_err_est_to_true": report.loc_err_est_to_true,
            "ell": report.ell,
        },
        args.out,
    )
    return 0


_SIM_CSV_COLUMNS = [
    "T",
    "replicate",
    "k_true",
    "k_est",
    "k_match",
    "pk",
    "window_diff",
    "loc_err_est_to_true",
    "loc_err_true_to_est",
]


def _simulate_payload(report, t_grid) -> dict:
    return {
        "command": "simulate",
        "version": __version__,
        "config": {
            "T_grid": list(t_grid),
            "replicates": report.replicates,
            "kernel": _kernel_dict(report.kernel),
            "schedule": {
                "C": report.schedule.C,
                "m_hint": report.schedule.m_hint,
                "bound": report.schedule.bound,
            },
            "d": report.base.d,
            "m": report.base.m,
            "mean_shift": report.base.mean_shift,
            "noise_sigma": report.base.noise_sigma,
            "seed": report.base.seed,
        },
        "aggregates": [
            {
                "T": a.T,
                "replicates": a.replicates,
                "k_match_rate": a.k_match_rate,
                "k_est_mean": a.k_est_mean,
                "pk_mean": a.pk_mean,
                "pk_std": a.pk_std,
                "window_diff_mean": a.window_diff_mean,
                "window_diff_std": a.window_diff_std,
                "loc_err_est_to_true_mean": a.loc_err_est_to_true_mean,
                "loc_err_true_to_est_mean": a.loc_err_true_to_est_mean,
            }
            for a in report.aggregates
        ],
        "records": [
            {
                "T": r.T,
                "replicate": r.replicate,
                "k_true": r.k_true,
                "k_est": r.k_est,
                "k_match": r.k_match,
                "pk": r.pk,
                "window_diff": r.window_diff,
                "loc_err_est_to_true": r.loc_err_est_to_true,
                "loc_err_true_to_est": r.loc_err_true_to_est,
            }
            for r in report.records
        ],
    }


def _simulate_csv(report) -> list[str]:
    lines = [",".join(_SIM_CSV_COLUMNS)]
    for r in report.records:
        lines.append(
            ",".join(
                _csv_cell(v)
                for v in (
                    r.T,
                    r.replicate,
                    r.k_true,
                    r.k_est,
                    r.k_match,
                    r.pk,
                    r.window_diff,
                    r.loc_err_est_to_true,
                    r.loc_err_true_to_est,
                )
            )
        )
    return lines


def _parse_t_grid(args) -> tuple[int, ...]:
    if args.T_grid:
        return tuple(int(tok) for tok in args.T_grid.split(","))
    if args.T is None:
        raise ValueError("either --T or --T-grid is required")
    return (int(args.T),)


def cmd_simulate(args) -> int:
    t_grid = _parse_t_grid(args)
    kernel = _kernel_from_args(args)
    c_used = args.C if args.C is not None else DEFAULT_PENALTY_C[args.kernel]
    schedule = PenaltySchedule(C=c_used, m_hint=args.m)
    base = SimConfig(
        T=max(t_grid),
        d=args.d,
        m=args.m,
        k=0,
        min_spacing=args.m + 1,
        mean_shift=args.delta,
        noise_sigma=args.sigma,
        seed=args.seed,
    )
    report = consistency_experiment(
        t_grid,
        args.replicates,
        base,
        kernel,
        schedule,
        min_spacing=args.ell,
    )
    fmt = args.format
    if fmt is None:
        fmt = "csv" if args.out and args.out.endswith(".csv") else "json"
    if fmt == "csv":
        _emit_lines(_simulate_csv(report), args.out)
    else:
        _emit_json(_simulate_payload(report, t_grid), args.out)
    return 0


def cmd_sweep(args) -> int:
    c_grid = tuple(float(tok) for tok in args.C_grid.split(","))
    kernel = _kernel_from_args(args)
    if args.input:
        seq = _load_sequence(args.input)
        if kernel.kind is Kernel.COSINE:
            seq = normalize_rows(seq)
        prefix = build_prefix(compute_gram(seq, kernel.resolved(seq)))
        rows = sweep_penalty(prefix, c_grid)
        source = {"input": args.input}
    else:
        if args.T is None:
            raise ValueError("either --input or --T is required")
        cfg = SimConfig(
            T=args.T,
            d=args.d,
            m=args.m,
            k=args.k,
            min_spacing=args.ell if args.ell else max(args.m + 1, 1),
            mean_shift=args.delta,
            noise_sigma=args.sigma,
            seed=args.seed,
        )
        rows = sweep_penalty(cfg, c_grid, kernel=kernel)
        source = {
            "T": cfg.T,
            "d": cfg.d,
            "m": cfg.m,
            "k": cfg.resolved_k,
            "min_spacing": cfg.min_spacing,
            "mean_shift": cfg.mean_shift,
            "noise_sigma": cfg.noise_sigma,
            "seed": cfg.seed,
        }
    if args.format == "json":
        _emit_json(
            {
                "command": "sweep",
                "version": __version__,
                "config": {"kernel": _kernel_dict(kernel), "C_grid": list(c_grid), **source},
                "rows": [
                    {"C": r.C, "beta": r.beta, "k_est": r.k_est, "objective": r.objective}
                    for r in rows
                ],
                "nonincreasing": True,
            },
            args.out,
        )
    else:
        lines = ["C,beta,k_est,objective"]
        for r in rows:
            lines.append(",".join(_csv_cell(v) for v in (r.C, r.beta, r.k_est, r.objective)))
        lines.append("# k_est nonincreasing across C grid: ok")
        _emit_lines(lines, args.out)
    return 0


def cmd_embed(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        texts = [line.rstrip("\n") for line in fh if line.strip()]
    config = EmbedServiceConfig(
        endpoint=args.endpoint,
        model=args.model,
        token_env=args.token_env,
        batch_size=args.batch_size,
        max_retries=args.max_retries,
        timeout=args.timeout,
        backoff_base=args.backoff_base,
        parallel_connections=args.parallel,
    )
    seq = fetch_embeddings(config, texts)
    save_jsonl(args.out, seq, texts=texts if seq.T else None)
    logger.info("wrote %d embeddings to %s", seq.T, args.out)
    return 0


def cmd_concentration(args) -> int:
    kernel = _kernel_from_args(args)
    if args.x_grid:
        x_grid = tuple(float(tok) for tok in args.x_grid.split(","))
    else:
        x_grid = tuple(np.linspace(0.0, 4.0 * math.sqrt(args.n), 8))
    rng = np.random.default_rng(args.seed)
    report = concentration_check(
        n=args.n,
        m=args.m,
        d=args.d,
        sigma=args.sigma,
        kernel=kernel,
        x_grid=x_grid,
        replicates=args.replicates,
        rng=rng,
    )
    _emit_json(
        {
            "command": "concentration",
            "version": __version__,
            "config": {
                "n": report.n,
                "m": report.m,
                "d": report.d,
                "sigma": report.sigma,
                "kernel": _kernel_dict(report.kernel),
                "replicates": report.replicates,
                "seed": args.seed,
            },
            "x_grid": list(report.x_grid),
            "empirical_tail": list(report.empirical_tail),
            "bound": list(report.bound),
            "lambda_rate": report.lambda_rate,
            "cost_mean": report.cost_mean,
            "cost_std": report.cost_std,
        },
        args.out,
    )
    return 0


def _add_kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=["rbf", "cosine"], default="rbf", help="kernel family")
    p.add_argument(
        "--bandwidth",
        default="median",
        help="RBF bandwidth: 'median' or a positive number (default median)",
    )


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=16, help="embedding dimension")
    p.add_argument("--m", type=int, default=0, help="dependence range of the noise")
    p.add_argument("--delta", type=float, default=1.0, help="mean shift between blocks")
    p.add_argument("--sigma", type=float, default=1.0, help="noise scale per coordinate")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelseg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="detect change points in a CSV or JSONL sequence")
    p.add_argument("--input", required=True, help="path to a .csv matrix or .jsonl document")
    _add_kernel_flags(p)
    p.add_argument("--C", type=float, default=None, help="penalty constant (default per kernel)")
    p.add_argument("--beta", type=float, default=None, help="explicit penalty, overrides --C")
    p.add_argument("--min-size", type=int, default=1, help="minimum segment length")
    p.add_argument("--m", type=int, default=0, help="dependence hint for the floor diagnostic")
    p.add_argument("--normalize", action="store_true", help="unit-normalize rows before RBF")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="compare two segmentations")
    p.add_argument("ref", help="reference: .json {T, change_points} or .jsonl with flags")
    p.add_argument("hyp", help="hypothesis, same formats")
    p.add_argument("--window", type=int, default=None, help="probe width (default from reference)")
    p.add_argument("--ell", type=int, default=None, help="location-error scale (default min ref segment)")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="Monte-Carlo sweep over sequence lengths")
    p.add_argument("--T", type=int, default=None, help="single sequence length")
    p.add_argument("--T-grid", dest="T_grid", default=None, help="comma-separated lengths")
    p.add_argument("--replicates", type=int, default=100, help="replicates per length")
    _add_sim_flags(p)
    p.add_argument("--ell", type=int, default=None, help="min spacing override (default rule)")
    _add_kernel_flags(p)
    p.add_argument("--C", type=float, default=None, help="penalty constant (default per kernel)")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=["json", "csv"], default=None, help="output format")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="K-hat across a penalty grid")
    p.add_argument("--input", default=None, help="sweep this sequence instead of simulating")
    p.add_argument("--C-grid", dest="C_grid", required=True, help="comma-separated ascending constants")
    p.add_argument("--T", type=int, default=None, help="simulated length when no --input")
    p.add_argument("--k", type=int, default=None, help="simulated change points (default auto)")
    _add_sim_flags(p)
    p.add_argument("--ell", type=int, default=None, help="min spacing for simulation")
    _add_kernel_flags(p)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="csv", help="output format")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("embed", help="fetch embeddings for a text file (one text per line)")
    p.add_argument("--input", required=True, help="text file, one document per line")
    p.add_argument("--endpoint", required=True, help="embedding service URL")
    p.add_argument("--model", required=True, help="model name sent to the service")
    p.add_argument("--token-env", default="EMBED_API_TOKEN", help="env var holding the bearer token")
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--backoff-base", type=float, default=1.0, help="first retry delay in seconds")
    p.add_argument("--parallel", type=int, default=1, help="concurrent batch connections")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("concentration", help="tail of the block cost vs analytic bound")
    p.add_argument("--n", type=int, required=True, help="stationary block length")
    p.add_argument("--replicates", type=int, default=10000)
    _add_sim_flags(p)
    _add_kernel_flags(p)
    p.add_argument("--x-grid", dest="x_grid", default=None, help="comma-separated deviations")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_concentration)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
