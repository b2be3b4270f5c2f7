"""Penalized segmentation solvers over kernel block costs.

All solvers minimize

    sum_k cost(segment_k) + beta * (number of change points)

over segmentations of 1..T, exactly. dp_penalized scans every candidate in
O(T^2); pelt_penalized reaches the same optimum while discarding candidates
that can never win again; dp_fixed_k solves the constrained variant with a
prescribed number of change points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import GramPrefix, block_cost, costs_ending_at

# Penalty constants tuned on annotated text corpora; used as CLI defaults.
DEFAULT_PENALTY_C = {"rbf": 0.05, "cosine": 0.088}


@dataclass(frozen=True)
class Segmentation:
    """Interior change points of a length-T sequence.

    A change point tau means positions tau and tau + 1 (1-indexed) fall in
    different segments, so valid values satisfy 0 < tau < T and the tuple is
    strictly increasing. No change points means a single segment.
    """

    T: int
    change_points: tuple[int, ...] = ()

    def __post_init__(self):
        t = int(self.T)
        if t < 1:
            raise ValueError("sequence length must be at least 1")
        cps = tuple(int(c) for c in self.change_points)
        for c in cps:
            if not 0 < c < t:
                raise ValueError(f"change point {c} outside (0, {t})")
        if any(a >= b for a, b in zip(cps, cps[1:])):
            raise ValueError("change points must be strictly increasing")
        object.__setattr__(self, "T", t)
        object.__setattr__(self, "change_points", cps)

    @property
    def K(self) -> int:
        return len(self.change_points)

    def segments(self) -> list[tuple[int, int]]:
        """(start, end) pairs, 1-indexed inclusive, covering 1..T."""
        edges = (0, *self.change_points, self.T)
        return [(edges[i] + 1, edges[i + 1]) for i in range(len(edges) - 1)]

    def segment_lengths(self) -> list[int]:
        return [e - s + 1 for s, e in self.segments()]

    def min_segment_length(self) -> int:
        return min(self.segment_lengths())


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty family beta(T) = C * sqrt(T * ln T).

    m_hint and bound only feed the diagnostic floor check (see
    penalty_floor); they do not change the penalty value.
    """

    C: float
    m_hint: int = 0
    bound: float = 1.0

    def __post_init__(self):
        if not float(self.C) >= 0:
            raise ValueError("penalty constant C must be nonnegative")
        if int(self.m_hint) < 0:
            raise ValueError("m_hint must be nonnegative")
        if not float(self.bound) > 0:
            raise ValueError("kernel bound must be positive")
        object.__setattr__(self, "C", float(self.C))
        object.__setattr__(self, "m_hint", int(self.m_hint))
        object.__setattr__(self, "bound", float(self.bound))


def penalty_value(schedule: PenaltySchedule, T: int) -> float:
    """Penalty for a length-T sequence: C * sqrt(T * ln T)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return float(schedule.C * math.sqrt(T * math.log(T)))


def penalty_floor(m: int, bound: float, T: int) -> float:
    """Smallest penalty with a consistency guarantee under m-dependence.

    16 M sqrt(2 (8m + 5) T ln T) + 2 M (1 + 6m), where M bounds |k|. At
    realistic T this sits far above practically useful penalties, so callers
    warn rather than reject when beta falls below it.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not bound > 0:
        raise ValueError("kernel bound must be positive")
    return float(
        16.0 * bound * math.sqrt(2.0 * (8 * m + 5) * T * math.log(T))
        + 2.0 * bound * (1 + 6 * m)
    )


@dataclass(frozen=True)
class SegmentationResult:
    """Solver output: the segmentation, its objective, and the pieces."""

    segmentation: Segmentation
    objective: float
    per_segment_costs: tuple[float, ...]
    beta_used: float


def _validate_solver_args(prefix: GramPrefix, beta: float, min_size: int) -> None:
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    if not 1 <= min_size <= prefix.T:
        raise ValueError(f"min_size must lie in [1, {prefix.T}]")


def _result_from_parents(prefix: GramPrefix, parent: np.ndarray, beta: float) -> SegmentationResult:
    bnds = []
    t = prefix.T
    while t > 0:
        s = int(parent[t])
        if s > 0:
            bnds.append(s)
        t = s
    bnds.reverse()
    seg = Segmentation(prefix.T, tuple(bnds))
    costs = tuple(block_cost(prefix, a, b) for a, b in seg.segments())
    return SegmentationResult(
        segmentation=seg,
        objective=float(sum(costs) + beta * seg.K),
        per_segment_costs=costs,
        beta_used=float(beta),
    )


def dp_penalized(prefix: GramPrefix, beta: float, min_size: int = 1) -> SegmentationResult:
    """Exact penalized minimization by O(T^2) dynamic programming.

    Ties resolve toward the earliest candidate boundary: candidates are
    scanned in increasing order and replaced only on strict improvement,
    which prefers fewer and earlier change points among equal objectives.

    Args:
        prefix: prefix table of the Gram matrix.
        beta: nonnegative penalty per change point.
        min_size: minimum admissible segment length (>= 1).

    Returns:
        SegmentationResult with the optimal boundaries.
    """
    _validate_solver_args(prefix, beta, min_size)
    t_n = prefix.T
    best = np.empty(t_n + 1, dtype=np.longdouble)
    best[0] = -beta  # the first segment carries no penalty
    parent = np.full(t_n + 1, -1, dtype=np.int64)
    for t in range(1, t_n + 1):
        hi = t - min_size + 1  # candidates s = 0..t-min_size
        if hi <= 0:
            best[t] = np.inf
            continue
        cand = best[:hi] + costs_ending_at(prefix, t)[:hi] + beta
        j = int(np.argmin(cand))  # first minimum: earliest boundary wins ties
        best[t] = cand[j]
        parent[t] = j
    return _result_from_parents(prefix, parent, beta)


def pelt_penalized(
    prefix: GramPrefix,
    beta: float,
    min_size: int = 1,
    candidate_counts: list | None = None,
) -> SegmentationResult:
    """Penalized minimization with candidate pruning.

    Same recurrence, objective, and tie handling as dp_penalized. A candidate
    s is dropped at step t once best[s] + cost(s+1, t) reaches best[t]:
    block costs are superadditive under splits for PSD kernels, so such a
    candidate can never strictly beat the path through t later on. Pruning
    needs beta > 0 and min_size == 1 to preserve exact equivalence; outside
    that regime the full candidate set is kept.

    Args:
        prefix: prefix table of the Gram matrix.
        beta: nonnegative penalty per change point.
        min_size: minimum admissible segment length (>= 1).
        candidate_counts: optional list collecting the candidate-set size at
            every step, for diagnostics.

    Returns:
        SegmentationResult identical to dp_penalized's.
    """
    _validate_solver_args(prefix, beta, min_size)
    t_n = prefix.T
    t_s, t_d = prefix.S, prefix.D
    diag_s = np.ascontiguousarray(np.diagonal(t_s))
    best = np.empty(t_n + 1, dtype=np.longdouble)
    best[0] = -beta
    parent = np.full(t_n + 1, -1, dtype=np.int64)
    prune = beta > 0 and min_size == 1
    cand = np.array([0], dtype=np.int64)
    for t in range(1, t_n + 1):
        s_new = t - min_size
        if s_new >= 1:
            cand = np.append(cand, s_new)
        active = cand[t - cand >= min_size]
        if candidate_counts is not None:
            candidate_counts.append(int(active.size))
        if active.size == 0:
            best[t] = np.inf
            continue
        n = t - active
        bsum = t_s[t, t] - 2.0 * t_s[active, t] + diag_s[active]
        costs = (t_d[t] - t_d[active]) - bsum / n
        costs[n == 1] = 0.0  # singleton block, exact zero
        vals = best[active] + costs + beta
        j = int(np.argmin(vals))
        best[t] = vals[j]
        parent[t] = active[j]
        if prune:
            cand = active[best[active] + costs < best[t]]
    return _result_from_parents(prefix, parent, beta)


def dp_fixed_k(prefix: GramPrefix, k: int, min_size: int = 1) -> SegmentationResult:
    """Minimum total block cost with exactly k change points.

    O(k T^2) dynamic program over (segment count, block end), with the same
    earliest-boundary tie handling as dp_penalized. The penalty plays no
    role here: beta_used is 0 and the objective is the plain cost sum.
    """
    t_n = prefix.T
    if not 0 <= k <= t_n - 1:
        raise ValueError(f"k must lie in [0, {t_n - 1}]")
    if not 1 <= min_size or (k + 1) * min_size > t_n:
        raise ValueError("min_size leaves no feasible segmentation")
    segs = k + 1
    best = np.full((segs + 1, t_n + 1), np.inf, dtype=np.longdouble)
    parent = np.full((segs + 1, t_n + 1), -1, dtype=np.int64)
    best[0, 0] = 0.0
    for t in range(1, t_n + 1):
        costs = costs_ending_at(prefix, t)
        hi = t - min_size + 1
        if hi <= 0:
            continue
        for j in range(1, min(segs, t) + 1):
            cand = best[j - 1, :hi] + costs[:hi]
            i = int(np.argmin(cand))
            if np.isfinite(cand[i]):
                best[j, t] = cand[i]
                parent[j, t] = i
    if not np.isfinite(best[segs, t_n]):
        raise ValueError("no feasible segmentation under the given constraints")
    bnds = []
    t, j = t_n, segs
    while j > 0:
        s = int(parent[j, t])
        if s > 0:
            bnds.append(s)
        t, j = s, j - 1
    bnds.reverse()
    seg = Segmentation(t_n, tuple(bnds))
    costs = tuple(block_cost(prefix, a, b) for a, b in seg.segments())
    return SegmentationResult(seg, float(sum(costs)), costs, 0.0)


def objective(prefix: GramPrefix, seg: Segmentation, beta: float) -> float:
    """Penalized objective of a given segmentation."""
    if seg.T != prefix.T:
        raise ValueError(f"segmentation length {seg.T} does not match prefix T={prefix.T}")
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    costs = [block_cost(prefix, a, b) for a, b in seg.segments()]
    return float(sum(costs) + beta * seg.K)
