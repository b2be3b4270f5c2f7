"""Block cost functional over prefix sums of a Gram matrix.

The cost of a block [s, e] (1-indexed, inclusive) is the sum of diagonal
kernel entries minus the mean over the full block of the Gram matrix:

    cost(s, e) = sum_{t=s}^{e} k(y_t, y_t) - (1 / n) sum_{i,j=s}^{e} k(y_i, y_j)

with n = e - s + 1. For PSD kernels this is nonnegative and superadditive
under splits, which is what makes pruning in the solvers exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GramMatrix


@dataclass(frozen=True)
class GramPrefix:
    """Prefix sums of a Gram matrix supporting O(1) block queries.

    S has shape (T+1, T+1); S[i, j] is the sum of the leading i x j submatrix
    (1-indexed corner, zero row and column prepended). D[i] is the sum of the
    first i diagonal entries. Both accumulate in the widest native float
    dtype so that the cancellation in large block sums stays far below the
    1e-9 contract.
    """

    S: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        if self.S.ndim != 2 or self.S.shape[0] != self.S.shape[1]:
            raise ValueError("prefix table must be square")
        if self.D.shape != (self.S.shape[0],):
            raise ValueError("diagonal prefix length must match the table")
        self.S.setflags(write=False)
        self.D.setflags(write=False)

    @property
    def T(self) -> int:
        return self.S.shape[0] - 1


def build_prefix(gram: GramMatrix) -> GramPrefix:
    """Accumulate 2-d and diagonal prefix sums of a Gram matrix."""
    g = gram.values.astype(np.longdouble)
    t = g.shape[0]
    s = np.zeros((t + 1, t + 1), dtype=np.longdouble)
    s[1:, 1:] = g.cumsum(axis=0).cumsum(axis=1)
    d = np.zeros(t + 1, dtype=np.longdouble)
    d[1:] = np.cumsum(np.diagonal(g))
    return GramPrefix(S=s, D=d)


def _check_block(prefix: GramPrefix, s: int, e: int) -> None:
    if not (1 <= s <= e <= prefix.T):
        raise ValueError(f"invalid block [{s}, {e}] for T={prefix.T}")


def block_cost(prefix: GramPrefix, s: int, e: int) -> float:
    """Cost of the block [s, e], 1-indexed inclusive.

    Singletons cost exactly zero (k(y, y) - k(y, y)); the general value is
    returned raw, so tiny negatives from rounding are possible.
    """
    _check_block(prefix, s, e)
    if s == e:
        return 0.0
    n = e - s + 1
    t_s, t_d = prefix.S, prefix.D
    bsum = t_s[e, e] - 2.0 * t_s[s - 1, e] + t_s[s - 1, s - 1]
    return float((t_d[e] - t_d[s - 1]) - bsum / n)


def costs_ending_at(prefix: GramPrefix, e: int) -> np.ndarray:
    """Costs of every block ending at e, as a longdouble vector.

    Entry i holds cost(i + 1, e), i.e. the block opened right after a
    previous boundary at i, for i = 0..e-1. This is the inner loop of the
    dynamic programs; the arithmetic matches block_cost element for element.
    """
    if not (1 <= e <= prefix.T):
        raise ValueError(f"invalid block end {e} for T={prefix.T}")
    t_s, t_d = prefix.S, prefix.D
    prev = np.arange(e)
    n = e - prev
    bsum = t_s[e, e] - 2.0 * t_s[prev, e] + t_s[prev, prev]
    out = (t_d[e] - t_d[prev]) - bsum / n
    out[-1] = 0.0  # singleton block, exact zero
    return out


def _rect_sum(prefix: GramPrefix, s1: int, e1: int, s2: int, e2: int):
    t_s = prefix.S
    return t_s[e1, e2] - t_s[s1 - 1, e2] - t_s[e1, s2 - 1] + t_s[s1 - 1, s2 - 1]


def mmd2_empirical(prefix: GramPrefix, block_a, block_b) -> float:
    """Squared empirical MMD between two blocks under the Gram's kernel.

    Blocks are (s, e) pairs, 1-indexed inclusive, and must be identical or
    disjoint. Identical blocks give exactly zero.

    Args:
        prefix: prefix table of the Gram matrix.
        block_a: first block (s, e).
        block_b: second block (s, e).

    Returns:
        mean(A x A) + mean(B x B) - 2 mean(A x B), which can be slightly
        negative for non-characteristic kernels or from rounding.
    """
    sa, ea = block_a
    sb, eb = block_b
    _check_block(prefix, sa, ea)
    _check_block(prefix, sb, eb)
    if (sa, ea) != (sb, eb) and not (ea < sb or eb < sa):
        raise ValueError("blocks must be identical or disjoint")
    na = ea - sa + 1
    nb = eb - sb + 1
    paa = _rect_sum(prefix, sa, ea, sa, ea)
    pbb = _rect_sum(prefix, sb, eb, sb, eb)
    pab = _rect_sum(prefix, sa, ea, sb, eb)
    return float(paa / (na * na) + pbb / (nb * nb) - 2.0 * (pab / (na * nb)))


def expected_block_cost_stationary(c0: float, autocov, c_inf: float, n: int) -> float:
    """Mean block cost of a stationary segment with finite-lag dependence.

    Args:
        c0: expected kernel value at lag zero, E[k(y, y)].
        autocov: expected kernel values at lags 1..m, E[k(y_1, y_{1+l})].
        c_inf: expected kernel value for independent draws.
        n: block length, n >= 1.

    Returns:
        (n - 1)(c0 - c_inf) - 2 sum_{l=1}^{min(n-1, m)} (1 - l / n)(c_l - c_inf).
    """
    if n < 1:
        raise ValueError("block length must be at least 1")
    total = (n - 1) * (float(c0) - float(c_inf))
    for lag, cl in enumerate(list(autocov)[: n - 1], start=1):
        total -= 2.0 * (1.0 - lag / n) * (float(cl) - float(c_inf))
    return float(total)
