"""Kernels on embedding sequences and dense Gram matrix construction."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

# Rows used by the median heuristic are capped so bandwidth selection stays
# O(MEDIAN_SUBSAMPLE_LIMIT^2); the subsample seed is fixed for reproducibility.
MEDIAN_SUBSAMPLE_LIMIT = 2000
_MEDIAN_SUBSAMPLE_SEED = 93

# Upper bound on the element count of temporaries in compute_gram.
_GRAM_CHUNK_ELEMS = 4_000_000


class Kernel(str, enum.Enum):
    """Supported kernel families."""

    RBF = "rbf"
    COSINE = "cosine"


@dataclass(frozen=True)
class EmbeddingSequence:
    """A length-T sequence of d-dimensional observation vectors.

    Wraps a read-only float64 array of shape (T, d). All values must be
    finite. A zero-row instance is permitted solely to represent the result
    of embedding an empty text list; every analysis entry point rejects it.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array of shape (T, d), got ndim={arr.ndim}")
        if arr.shape[0] >= 1 and arr.shape[1] < 1:
            raise ValueError("vectors must have at least one coordinate")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding data contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus parameters.

    bandwidth is the RBF scale sigma; None means "resolve by the median
    heuristic on the data at hand". The cosine kernel takes no bandwidth.
    bound is the sup-norm bound M on |k|; both built-in kernels have M = 1.
    """

    kind: Kernel = Kernel.RBF
    bandwidth: float | None = None
    bound: float = 1.0

    def __post_init__(self):
        kind = Kernel(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.bandwidth is not None:
            bw = float(self.bandwidth)
            if not bw > 0:
                raise ValueError("bandwidth must be positive")
            if kind is Kernel.COSINE:
                raise ValueError("the cosine kernel takes no bandwidth")
            object.__setattr__(self, "bandwidth", bw)
        if not float(self.bound) > 0:
            raise ValueError("kernel bound must be positive")
        object.__setattr__(self, "bound", float(self.bound))

    @property
    def is_resolved(self) -> bool:
        return self.kind is not Kernel.RBF or self.bandwidth is not None

    def resolved(self, seq: EmbeddingSequence) -> "KernelSpec":
        """Return a spec with a concrete bandwidth, via the median heuristic if unset."""
        if self.kind is Kernel.RBF and self.bandwidth is None:
            return replace(self, bandwidth=median_heuristic_bandwidth(seq))
        return self


@dataclass(frozen=True)
class GramMatrix:
    """Dense T x T kernel matrix together with the (resolved) spec that built it."""

    values: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("Gram matrix must be square")
        if not self.kernel.is_resolved:
            raise ValueError("Gram matrix requires a resolved kernel spec")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def T(self) -> int:
        return self.values.shape[0]


def median_heuristic_bandwidth(seq: EmbeddingSequence) -> float:
    """Median of all pairwise Euclidean distances.

    Sequences longer than MEDIAN_SUBSAMPLE_LIMIT are reduced to a fixed-seed
    subsample of that many rows first, keeping the O(T^2) distance pass
    bounded and the outcome reproducible.

    Args:
        seq: sequence with at least two rows.

    Returns:
        The median distance, a strictly positive float.

    Raises:
        ValueError: fewer than two rows, or the median distance is zero
            (constant or near-constant sequence, no usable scale).
    """
    if seq.T < 2:
        raise ValueError("median heuristic needs at least two rows")
    x = seq.data
    if seq.T > MEDIAN_SUBSAMPLE_LIMIT:
        rng = np.random.default_rng(_MEDIAN_SUBSAMPLE_SEED)
        idx = np.sort(rng.choice(seq.T, size=MEDIAN_SUBSAMPLE_LIMIT, replace=False))
        x = x[idx]
    med = float(np.median(pdist(x)))
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero; sequence is degenerate")
    return med


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate k(x, y) for one pair of vectors.

    RBF: exp(-||x - y||^2 / (2 sigma^2)). Cosine: <x, y> / (||x|| ||y||),
    clipped to [-1, 1]; identical inputs return exactly 1.

    Raises:
        ValueError: mismatched dimensions, unresolved RBF bandwidth, or a
            zero vector under the cosine kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("kernel arguments must be vectors")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if spec.kind is Kernel.RBF:
        if spec.bandwidth is None:
            raise ValueError("RBF bandwidth unresolved; call spec.resolved(seq) first")
        diff = x - y
        d2 = (diff * diff).sum()
        return float(np.exp(-d2 / (2.0 * (spec.bandwidth * spec.bandwidth))))
    # cosine
    sx = (x * x).sum()
    sy = (y * y).sum()
    if sx == 0.0 or sy == 0.0:
        raise ValueError("cosine kernel is undefined for zero vectors")
    if np.array_equal(x, y):
        return 1.0  # k(x, x) = 1 by definition; avoids norm rounding
    val = (x * y).sum() / (np.sqrt(sx) * np.sqrt(sy))
    return float(np.clip(val, -1.0, 1.0))


def compute_gram(seq: EmbeddingSequence, spec: KernelSpec) -> GramMatrix:
    """Dense kernel matrix of a sequence, bitwise symmetric.

    Entries follow eval_kernel exactly (same reductions, same operation
    order), so a double loop over eval_kernel reproduces the matrix bit for
    bit. Work is chunked by rows to bound temporary memory. The upper
    triangle is mirrored onto the lower one, which makes symmetry structural
    rather than a rounding accident.

    Raises:
        ValueError: empty sequence, or invalid kernel configuration.
    """
    if seq.T < 1:
        raise ValueError("cannot build a Gram matrix for an empty sequence")
    spec = spec.resolved(seq)
    x = seq.data
    t, d = x.shape
    gram = np.empty((t, t), dtype=np.float64)
    chunk = max(1, _GRAM_CHUNK_ELEMS // max(1, t * d))
    if spec.kind is Kernel.RBF:
        denom = 2.0 * (spec.bandwidth * spec.bandwidth)
        for lo in range(0, t, chunk):
            hi = min(t, lo + chunk)
            diff = x[lo:hi, None, :] - x[None, :, :]
            gram[lo:hi] = np.exp(-(diff * diff).sum(axis=2) / denom)
    else:
        sq = (x * x).sum(axis=1)
        if np.any(sq == 0.0):
            bad = int(np.flatnonzero(sq == 0.0)[0])
            raise ValueError(f"cosine kernel is undefined for zero vectors (row {bad})")
        norms = np.sqrt(sq)
        for lo in range(0, t, chunk):
            hi = min(t, lo + chunk)
            inner = (x[lo:hi, None, :] * x[None, :, :]).sum(axis=2)
            gram[lo:hi] = np.clip(inner / (norms[lo:hi, None] * norms[None, :]), -1.0, 1.0)
        # identical rows must give exactly 1, matching eval_kernel's identity case
        _, inv = np.unique(x, axis=0, return_inverse=True)
        gram[inv[:, None] == inv[None, :]] = 1.0
    gram = np.triu(gram) + np.triu(gram, 1).T
    return GramMatrix(values=gram, kernel=spec)
