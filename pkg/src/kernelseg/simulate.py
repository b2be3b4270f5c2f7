"""Synthetic m-dependent sequences and Monte-Carlo experiment harnesses."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .cost import GramPrefix, build_prefix
from .ingest import normalize_rows
from .kernels import EmbeddingSequence, Kernel, KernelSpec, compute_gram
from .metrics import evaluate
from .segmentation import (
    PenaltySchedule,
    Segmentation,
    pelt_penalized,
    penalty_value,
)


def auto_k(T: int) -> int:
    """Default change-point count for a length-T sequence: ceil(2 ln T)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return int(math.ceil(2.0 * math.log(T)))


def default_min_spacing(T: int, k: int) -> int:
    """Spacing floor for simulated change points: max(20, T // 4k), clamped feasible.

    The clamp to T // (k + 1) keeps (k + 1) * spacing <= T when the nominal
    rule would leave no room for k + 1 segments.
    """
    if k <= 0:
        return T
    want = max(20, T // (4 * k))
    return max(1, min(want, T // (k + 1)))


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the synthetic generator.

    k = None resolves to auto_k(T). Feasibility requires
    (k + 1) * min_spacing <= T and m < min_spacing, so every segment is
    longer than the dependence range.
    """

    T: int
    d: int = 16
    m: int = 0
    k: int | None = None
    min_spacing: int = 1
    mean_shift: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.min_spacing < 1:
            raise ValueError("min_spacing must be at least 1")
        if not float(self.mean_shift) >= 0:
            raise ValueError("mean_shift must be nonnegative")
        if not float(self.noise_sigma) > 0:
            raise ValueError("noise_sigma must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        k = self.resolved_k
        if k < 0:
            raise ValueError("k must be nonnegative")
        if (k + 1) * self.min_spacing > self.T:
            raise ValueError(
                f"infeasible spacing: ({k} + 1) * {self.min_spacing} > T={self.T}"
            )
        if self.m >= self.min_spacing:
            raise ValueError("min_spacing must exceed the dependence range m")

    @property
    def resolved_k(self) -> int:
        return auto_k(self.T) if self.k is None else int(self.k)


@dataclass(frozen=True)
class GeneratedSequence:
    """A simulated sequence with its ground truth."""

    sequence: EmbeddingSequence
    truth: Segmentation
    block_means: np.ndarray
    config: SimConfig

    def __post_init__(self):
        self.block_means.setflags(write=False)


def sample_change_points(T: int, k: int, min_spacing: int, rng: np.random.Generator) -> Segmentation:
    """Uniform draw over boundary sets whose segments all have length >= min_spacing.

    Stars and bars: with slack = T - (k + 1) * min_spacing, feasible boundary
    sets biject with k-subsets of {1, ..., slack + k}; drawing such a subset
    uniformly and mapping back yields the uniform distribution over feasible
    sets.

    Raises:
        ValueError: (k + 1) * min_spacing > T leaves no feasible set.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if min_spacing < 1:
        raise ValueError("min_spacing must be at least 1")
    slack = T - (k + 1) * min_spacing
    if slack < 0:
        raise ValueError(f"no feasible boundary set: ({k} + 1) * {min_spacing} > {T}")
    if k == 0:
        return Segmentation(T, ())
    picks = np.sort(rng.choice(slack + k, size=k, replace=False)) + 1
    taus = picks + (min_spacing - 1) * np.arange(1, k + 1)
    return Segmentation(T, tuple(int(t) for t in taus))


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(d)
        norm = np.sqrt((v * v).sum())
        if norm > 0:
            return v / norm


def generate_m_dependent(config: SimConfig, rng: np.random.Generator | None = None) -> GeneratedSequence:
    """Piecewise-mean sequence with moving-average Gaussian noise.

    The noise is an MA(m) average of iid standard Gaussian vectors scaled so
    the marginal variance is noise_sigma^2 per coordinate for every m:
    observations within lag m are correlated, anything farther apart is
    independent, and the lag-l autocovariance is
    noise_sigma^2 (m + 1 - l) / (m + 1).

    At each boundary the block mean moves by exactly mean_shift along a
    fresh random unit direction; the means are then re-centered around the
    origin, which leaves all consecutive gaps untouched.

    Identical (config, seed) pairs produce bit-identical output.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    k = config.resolved_k
    truth = sample_change_points(config.T, k, config.min_spacing, rng)
    means = np.zeros((k + 1, config.d))
    for j in range(k):
        means[j + 1] = means[j] + config.mean_shift * _random_unit(rng, config.d)
    means -= means.mean(axis=0)
    eps = rng.standard_normal((config.T + config.m, config.d))
    if config.m == 0:
        noise = eps * config.noise_sigma
    else:
        csum = np.vstack([np.zeros((1, config.d)), np.cumsum(eps, axis=0)])
        noise = (csum[config.m + 1 :] - csum[: config.T]) * (
            config.noise_sigma / math.sqrt(config.m + 1)
        )
    labels = np.repeat(np.arange(k + 1), truth.segment_lengths())
    data = means[labels] + noise
    return GeneratedSequence(EmbeddingSequence(data), truth, means, config)


@dataclass(frozen=True)
class ReplicateRecord:
    """Outcome of one replicate. runtime_s is informational and never serialized."""

    T: int
    replicate: int
    k_true: int
    k_est: int
    k_match: bool
    pk: float
    window_diff: float
    loc_err_est_to_true: float
    loc_err_true_to_est: float
    runtime_s: float


@dataclass(frozen=True)
class AggregateRow:
    """Per-T summary: sample means/stds plus the exact-recovery rate."""

    T: int
    replicates: int
    k_match_rate: float
    k_est_mean: float
    pk_mean: float
    pk_std: float
    window_diff_mean: float
    window_diff_std: float
    loc_err_est_to_true_mean: float
    loc_err_true_to_est_mean: float


@dataclass(frozen=True)
class ExperimentReport:
    """Full record of a consistency sweep."""

    t_grid: tuple[int, ...]
    replicates: int
    kernel: KernelSpec
    schedule: PenaltySchedule
    base: SimConfig
    records: tuple[ReplicateRecord, ...]
    aggregates: tuple[AggregateRow, ...]


def _replicate_rng(seed: int, T: int, replicate: int) -> np.random.Generator:
    # one independent, reproducible stream per (seed, T, replicate)
    return np.random.default_rng(np.random.SeedSequence((seed, T, replicate)))


def segment_sequence(
    seq: EmbeddingSequence, kernel: KernelSpec, beta: float, min_size: int = 1
):
    """Resolve the kernel on the data, build the prefix, and run the solver.

    Cosine input is row-normalized first. Returns the SegmentationResult.
    """
    if kernel.kind is Kernel.COSINE:
        seq = normalize_rows(seq)
    spec = kernel.resolved(seq)
    prefix = build_prefix(compute_gram(seq, spec))
    return pelt_penalized(prefix, beta, min_size=min_size)


def _aggregate(records: list[ReplicateRecord], t_grid, replicates: int) -> tuple[AggregateRow, ...]:
    rows = []
    for t in t_grid:
        recs = [r for r in records if r.T == t]
        pk_vals = np.array([r.pk for r in recs])
        wd_vals = np.array([r.window_diff for r in recs])
        ddof = 1 if len(recs) > 1 else 0
        rows.append(
            AggregateRow(
                T=t,
                replicates=len(recs),
                k_match_rate=float(np.mean([r.k_match for r in recs])),
                k_est_mean=float(np.mean([r.k_est for r in recs])),
                pk_mean=float(pk_vals.mean()),
                pk_std=float(pk_vals.std(ddof=ddof)),
                window_diff_mean=float(wd_vals.mean()),
                window_diff_std=float(wd_vals.std(ddof=ddof)),
                loc_err_est_to_true_mean=float(np.mean([r.loc_err_est_to_true for r in recs])),
                loc_err_true_to_est_mean=float(np.mean([r.loc_err_true_to_est for r in recs])),
            )
        )
    return tuple(rows)


def consistency_experiment(
    t_grid,
    replicates: int,
    base: SimConfig,
    kernel: KernelSpec,
    schedule: PenaltySchedule,
    min_spacing=None,
) -> ExperimentReport:
    """Monte-Carlo sweep of the penalized estimator across sequence lengths.

    For each T in the grid the change-point count follows auto_k(T) and the
    spacing follows default_min_spacing (min_spacing overrides it, either as
    an int or as a callable (T, k) -> int). base supplies d, m, mean_shift,
    noise_sigma, and the master seed; its T, k, and min_spacing fields are
    superseded per grid point. Replicates are seeded independently from
    (base.seed, T, replicate), so runs are reproducible and order-free.

    Args:
        t_grid: iterable of sequence lengths.
        replicates: Monte-Carlo replicates per length.
        base: template SimConfig.
        kernel: kernel spec; an unresolved RBF bandwidth is re-resolved on
            every replicate's data.
        schedule: penalty family evaluated at each T.

    Returns:
        ExperimentReport with per-replicate records and per-T aggregates.
    """
    t_grid = tuple(int(t) for t in t_grid)
    if not t_grid:
        raise ValueError("t_grid must be nonempty")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    records = []
    for t_len in t_grid:
        k = auto_k(t_len)
        if callable(min_spacing):
            spacing = int(min_spacing(t_len, k))
        elif min_spacing is not None:
            spacing = int(min_spacing)
        else:
            spacing = default_min_spacing(t_len, k)
        cfg = replace(base, T=t_len, k=k, min_spacing=spacing)
        beta = penalty_value(schedule, t_len)
        for rep in range(replicates):
            rng = _replicate_rng(base.seed, t_len, rep)
            gen = generate_m_dependent(cfg, rng)
            start = time.perf_counter()
            result = segment_sequence(gen.sequence, kernel, beta)
            elapsed = time.perf_counter() - start
            rep_metrics = evaluate(gen.truth, result.segmentation)
            records.append(
                ReplicateRecord(
                    T=t_len,
                    replicate=rep,
                    k_true=rep_metrics.k_true,
                    k_est=rep_metrics.k_est,
                    k_match=rep_metrics.k_match,
                    pk=rep_metrics.pk,
                    window_diff=rep_metrics.window_diff,
                    loc_err_est_to_true=rep_metrics.loc_err_est_to_true,
                    loc_err_true_to_est=rep_metrics.loc_err_true_to_est,
                    runtime_s=elapsed,
                )
            )
    return ExperimentReport(
        t_grid=t_grid,
        replicates=int(replicates),
        kernel=kernel,
        schedule=schedule,
        base=base,
        records=tuple(records),
        aggregates=_aggregate(records, t_grid, replicates),
    )


def tail_bound(x, n: int, m: int, bound: float = 1.0):
    """Analytic tail bound 4 exp(-x^2 / (8 (8m + 5) M^2 n)) for the block cost."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if m < 0:
        raise ValueError("m must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    out = 4.0 * np.exp(-np.square(x) / (8.0 * (8 * m + 5) * bound * bound * n))
    return float(out) if out.ndim == 0 else out


def uniform_deviation_rate(m: int, bound: float, T: int) -> float:
    """Scale of the uniform cost deviation over segments: 4 sqrt(2) M sqrt((8m+5) ln T)."""
    if T < 2:
        raise ValueError("T must be at least 2")
    if m < 0:
        raise ValueError("m must be nonnegative")
    return float(4.0 * math.sqrt(2.0) * bound * math.sqrt((8 * m + 5) * math.log(T)))


@dataclass(frozen=True)
class ConcentrationReport:
    """Empirical tail of the stationary block cost against its analytic bound."""

    n: int
    m: int
    d: int
    sigma: float
    kernel: KernelSpec
    replicates: int
    x_grid: tuple[float, ...]
    empirical_tail: tuple[float, ...]
    bound: tuple[float, ...]
    lambda_rate: float
    cost_mean: float
    cost_std: float


def concentration_check(
    n: int,
    m: int,
    d: int,
    sigma: float,
    kernel: KernelSpec,
    x_grid,
    replicates: int,
    rng: np.random.Generator,
) -> ConcentrationReport:
    """Monte-Carlo tail of the block cost on stationary data.

    Draws `replicates` independent stationary MA(m) blocks of length n (no
    change points, zero mean), computes the cost of the whole block for each,
    centers at the Monte-Carlo mean (the oracle for the population cost),
    and tabulates exceedance frequencies over x_grid next to the analytic
    bound. An unresolved RBF bandwidth is fixed once, on a pilot block, so
    every replicate sees the same kernel.
    """
    if n <= m:
        raise ValueError("block length n must exceed the dependence range m")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    x_grid = tuple(float(x) for x in x_grid)
    if any(x < 0 for x in x_grid):
        raise ValueError("x grid values must be nonnegative")
    cfg = SimConfig(
        T=n, d=d, m=m, k=0, min_spacing=m + 1, mean_shift=0.0, noise_sigma=sigma, seed=0
    )
    pilot = generate_m_dependent(cfg, rng)
    spec = kernel.resolved(pilot.sequence)
    costs = np.empty(replicates)
    for i in range(replicates):
        gen = generate_m_dependent(cfg, rng)
        g = compute_gram(gen.sequence, spec).values
        costs[i] = float(np.trace(g) - g.sum() / n)
    center = costs.mean()
    dev = np.abs(costs - center)
    emp = tuple(float(np.mean(dev > x)) for x in x_grid)
    bnd = tuple(float(tail_bound(x, n, m, spec.bound)) for x in x_grid)
    return ConcentrationReport(
        n=int(n),
        m=int(m),
        d=int(d),
        sigma=float(sigma),
        kernel=spec,
        replicates=int(replicates),
        x_grid=x_grid,
        empirical_tail=emp,
        bound=bnd,
        lambda_rate=uniform_deviation_rate(m, spec.bound, max(n, 2)),
        cost_mean=float(center),
        cost_std=float(costs.std(ddof=1 if replicates > 1 else 0)),
    )


@dataclass(frozen=True)
class SweepPoint:
    """One row of a penalty sweep."""

    C: float
    beta: float
    k_est: int
    objective: float


def sweep_penalty(target, c_grid, kernel: KernelSpec | None = None) -> list[SweepPoint]:
    """Estimated change-point count as a function of the penalty constant.

    target is either a GramPrefix (sweep that instance directly) or a
    SimConfig (generate one instance with the given kernel first). c_grid
    must be strictly increasing. The resulting counts are checked to be
    nonincreasing in C, which the penalized objective guarantees; a
    violation raises RuntimeError.
    """
    c_grid = [float(c) for c in c_grid]
    if not c_grid:
        raise ValueError("c_grid must be nonempty")
    if any(a >= b for a, b in zip(c_grid, c_grid[1:])):
        raise ValueError("c_grid must be strictly increasing")
    if any(c < 0 for c in c_grid):
        raise ValueError("penalty constants must be nonnegative")
    if isinstance(target, GramPrefix):
        prefix = target
    elif isinstance(target, SimConfig):
        gen = generate_m_dependent(target)
        seq = gen.sequence
        spec = kernel if kernel is not None else KernelSpec()
        if spec.kind is Kernel.COSINE:
            seq = normalize_rows(seq)
        prefix = build_prefix(compute_gram(seq, spec.resolved(seq)))
    else:
        raise TypeError("target must be a GramPrefix or a SimConfig")
    rows = []
    for c in c_grid:
        beta = penalty_value(PenaltySchedule(C=c), prefix.T)
        res = pelt_penalized(prefix, beta)
        rows.append(SweepPoint(C=c, beta=beta, k_est=res.segmentation.K, objective=res.objective))
    for a, b in zip(rows, rows[1:]):
        if b.k_est > a.k_est:
            raise RuntimeError(
                f"k_est increased from {a.k_est} to {b.k_est} as C grew from {a.C} to {b.C}"
            )
    return rows
