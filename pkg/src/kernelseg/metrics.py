"""Agreement metrics between a reference and a hypothesized segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .segmentation import Segmentation


@dataclass(frozen=True)
class MetricReport:
    """Bundle of agreement metrics for one (reference, hypothesis) pair."""

    pk: float
    window_diff: float
    window: int
    k_true: int
    k_est: int
    k_match: bool
    loc_err_true_to_est: float
    loc_err_est_to_true: float
    ell: int


def default_window(ref: Segmentation) -> int:
    """Probe width: half the average reference segment length, at least 1.

    round(T / (2 (K + 1))), rounding half away from zero.
    """
    return max(1, int(math.floor(ref.T / (2.0 * (ref.K + 1)) + 0.5)))


def _check_pair(ref: Segmentation, hyp: Segmentation) -> None:
    if ref.T != hyp.T:
        raise ValueError(f"length mismatch: reference T={ref.T}, hypothesis T={hyp.T}")


def _check_window(window: int, t: int) -> None:
    if not 1 <= window < t:
        raise ValueError(f"window must lie in [1, {t - 1}]")


def _segment_ids(seg: Segmentation) -> np.ndarray:
    # id of position p (1-indexed) = number of change points < p
    cps = np.asarray(seg.change_points, dtype=np.int64)
    return np.searchsorted(cps, np.arange(1, seg.T + 1), side="left")


def _boundaries_upto(seg: Segmentation, positions: np.ndarray) -> np.ndarray:
    # number of change points <= p for each position p
    cps = np.asarray(seg.change_points, dtype=np.int64)
    return np.searchsorted(cps, positions, side="right")


def pk(ref: Segmentation, hyp: Segmentation, window: int) -> float:
    """Probability that a width-window probe disagrees on same-segment.

    Slides probes i = 1..T-window and compares whether positions i and
    i + window fall in the same segment under each segmentation; the value
    is the fraction of probes where the two answers differ.
    """
    _check_pair(ref, hyp)
    _check_window(window, ref.T)
    probes = np.arange(1, ref.T - window + 1)
    rid = _segment_ids(ref)
    hid = _segment_ids(hyp)
    ref_same = rid[probes - 1] == rid[probes + window - 1]
    hyp_same = hid[probes - 1] == hid[probes + window - 1]
    return float(np.mean(ref_same != hyp_same))


def window_diff(ref: Segmentation, hyp: Segmentation, window: int) -> float:
    """Fraction of probes whose boundary counts differ.

    For each probe i = 1..T-window, counts change points in (i, i + window]
    under both segmentations and reports the fraction of probes where the
    counts disagree.
    """
    _check_pair(ref, hyp)
    _check_window(window, ref.T)
    probes = np.arange(1, ref.T - window + 1)
    r_cnt = _boundaries_upto(ref, probes + window) - _boundaries_upto(ref, probes)
    h_cnt = _boundaries_upto(hyp, probes + window) - _boundaries_upto(hyp, probes)
    return float(np.mean(r_cnt != h_cnt))


def location_error(true_seg: Segmentation, est_seg: Segmentation, ell: int) -> tuple[float, float]:
    """One-sided Hausdorff distances between boundary sets, normalized by ell.

    Returns (est_to_true, true_to_est): the worst estimated boundary's
    distance to the true set, and the worst true boundary's distance to the
    estimated set, each divided by ell. A direction whose target set is
    empty while its source is not is infinite; a direction with an empty
    source is zero.
    """
    if true_seg.T != est_seg.T:
        raise ValueError("segmentations must describe sequences of equal length")
    if not ell >= 1:
        raise ValueError("ell must be at least 1")

    def one_sided(src: tuple[int, ...], dst: tuple[int, ...]) -> float:
        if not src:
            return 0.0
        if not dst:
            return math.inf
        dists = np.abs(np.subtract.outer(np.asarray(src), np.asarray(dst)))
        return float(dists.min(axis=1).max() / ell)

    t_cp = true_seg.change_points
    e_cp = est_seg.change_points
    return one_sided(e_cp, t_cp), one_sided(t_cp, e_cp)


def evaluate(
    ref: Segmentation,
    hyp: Segmentation,
    window: int | None = None,
    ell: int | None = None,
) -> MetricReport:
    """All agreement metrics for one pair, with contract defaults.

    window defaults to default_window(ref) and ell to the minimum reference
    segment length.
    """
    _check_pair(ref, hyp)
    if ref.T < 2:
        raise ValueError("metrics need sequences of length at least 2")
    if window is None:
        window = default_window(ref)
    if ell is None:
        ell = ref.min_segment_length()
    est_to_true, true_to_est = location_error(ref, hyp, ell)
    return MetricReport(
        pk=pk(ref, hyp, window),
        window_diff=window_diff(ref, hyp, window),
        window=int(window),
        k_true=ref.K,
        k_est=hyp.K,
        k_match=ref.K == hyp.K,
        loc_err_true_to_est=true_to_est,
        loc_err_est_to_true=est_to_true,
        ell=int(ell),
    )
