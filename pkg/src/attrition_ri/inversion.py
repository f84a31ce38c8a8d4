"""Inverting monotone step-function p-values into one-sided limits."""
from __future__ import annotations

import math

import numpy as np


def _probe(bps: np.ndarray, idx: int) -> float:
    # even idx: interior of the gap below bps[idx // 2]; odd idx: the breakpoint
    k = bps.size
    if idx % 2 == 1:
        return float(bps[idx // 2])
    g = idx // 2
    if k == 0:
        return 0.0
    if g == 0:
        return float(bps[0] - 1.0 - abs(bps[0]))
    if g == k:
        return float(bps[-1] + 1.0 + abs(bps[-1]))
    lo, hi = bps[g - 1], bps[g]
    return float(lo + (hi - lo) / 2)


def lower_limit(pvalue, breakpoints, alpha: float, start: int = 0):
    """Infimum of ``{x : pvalue(x) > alpha}`` for a nondecreasing step function.

    Parameters
    ----------
    pvalue : callable
        Nondecreasing in its argument, constant between consecutive
        breakpoints.
    breakpoints : array_like
        Every point where ``pvalue`` may jump.
    alpha : float
    start : int
        Search position from a previous call known to lie at or below the
        answer; used when limits are computed in increasing order.

    Returns
    -------
    limit : float
        ``-inf`` when nothing is rejected, ``inf`` when everything is.
    closed : bool
        Whether the limit itself belongs to the accepted set.
    position : int
        Search position to pass as ``start`` in a follow-up call.
    """
    bps = np.unique(np.asarray(breakpoints, dtype=float))
    bps = bps[np.isfinite(bps)]
    npoints = 2 * bps.size + 1
    lo, hi = start, npoints
    while lo < hi:
        mid = (lo + hi) // 2
        x = _probe(bps, mid)
        if mid % 2 == 0 and 0 < mid // 2 < bps.size and not bps[mid // 2 - 1] < x < bps[mid // 2]:
            # empty float gap: behaves like the breakpoint above it
            x = float(bps[mid // 2])
        if pvalue(x) > alpha:
            hi = mid
        else:
            lo = mid + 1
    if lo == npoints:
        return math.inf, False, lo
    if lo == 0:
        return -math.inf, False, lo
    if lo % 2 == 1:
        return float(bps[lo // 2]), True, lo
    return float(bps[lo // 2 - 1]), False, lo
