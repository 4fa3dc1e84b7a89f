"""Rank correlations (Spearman rho, Kendall tau-b) and normal-approximation p-values."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, NonFinite, TooFewSamples

# correlations computed from fewer pairs than this are flagged in reports
LOW_N = 10
P_VALUE_NOTE = (
    "approximate, independence-assuming; dependence between suite members "
    "tends to make these too small"
)


def _vectors(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"vectors differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooFewSamples("rank correlation needs at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFinite("rank correlation inputs must be finite")
    return x, y


def spearman(x, y) -> float | None:
    """Pearson correlation of average ranks; ``None`` if either input is constant."""
    x, y = _vectors(x, y)
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(rx @ ry) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _tie_pairs(sorted_vals) -> int:
    """Number of tied pairs in an already sorted sequence."""
    total, run = 0, 1
    for prev, cur in zip(sorted_vals, sorted_vals[1:]):
        if cur == prev:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def _count_inversions(seq: list) -> tuple[int, list]:
    """Bottom-up merge sort; returns (#pairs i<j with seq[i] > seq[j], sorted copy)."""
    n = len(seq)
    src, dst = list(seq), [None] * n
    swaps, width = 0, 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid, hi = min(lo + width, n), min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    swaps += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            dst[k : k + mid - i] = src[i:mid]
            k += mid - i
            dst[k : k + hi - j] = src[j:hi]
        src, dst = dst, src
        width *= 2
    return swaps, src


def tau_b_from_counts(s: int, n0: int, n1: int, n2: int) -> float | None:
    """tau-b from concordant-minus-discordant ``s``, total pairs ``n0`` and the x/y tie counts."""
    if n0 - n1 == 0 or n0 - n2 == 0:
        return None
    tau = s / math.sqrt((n0 - n1) * (n0 - n2))
    return max(-1.0, min(1.0, tau))


def kendall_counts(x, y) -> tuple[int, int, int, int]:
    """Return ``(C - D, n0, n1, n2)`` in O(n log n)."""
    x, y = _vectors(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order].tolist(), y[order].tolist()
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    # pairs tied on both coordinates are adjacent after the lexicographic sort
    n3, run = 0, 1
    for i in range(1, n):
        if xs[i] == xs[i - 1] and ys[i] == ys[i - 1]:
            run += 1
        else:
            n3 += run * (run - 1) // 2
            run = 1
    n3 += run * (run - 1) // 2
    swaps, ys_sorted = _count_inversions(ys)
    n2 = _tie_pairs(ys_sorted)
    return n0 - n1 - n2 + n3 - 2 * swaps, n0, n1, n2


def kendall(x, y) -> float | None:
    """Kendall tau-b with tie correction; ``None`` if either input is constant."""
    return tau_b_from_counts(*kendall_counts(x, y))


def approx_p_values(rho: float | None, tau: float | None, n: int) -> tuple[float | None, float | None]:
    """Two-sided normal-approximation p-values.

    rho uses the Fisher z-transform with standard error ``1/sqrt(n-3)``; tau uses
    the null variance ``2(2n+5) / (9n(n-1))``. Undefined correlations give ``None``.
    """
    if n < 3:
        raise TooFewSamples(f"p-values need n >= 3, got {n}")
    p_rho = p_tau = None
    if rho is not None:
        if abs(rho) >= 1.0:
            p_rho = 0.0 if n > 3 else 1.0
        else:
            z = math.atanh(rho) * math.sqrt(n - 3)
            p_rho = math.erfc(abs(z) / math.sqrt(2.0))
    if tau is not None:
        z = 3.0 * tau * math.sqrt(n * (n - 1)) / math.sqrt(2.0 * (2 * n + 5))
        p_tau = math.erfc(abs(z) / math.sqrt(2.0))
    return p_rho, p_tau


@dataclass(frozen=True)
class RankCorrelation:
    rho: float | None
    tau: float | None
    p_rho: float | None
    p_tau: float | None
    n: int
    degenerate: bool = False
    low_n: bool = False
    p_values_approximate: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RankCorrelation":
        return cls(**d)


def rank_correlation(x, y) -> RankCorrelation:
    """Both rank statistics for paired samples, with p-values and quality flags."""
    x, y = _vectors(x, y)
    n = x.size
    rho, tau = spearman(x, y), kendall(x, y)
    p_rho, p_tau = approx_p_values(rho, tau, n) if n >= 3 else (None, None)
    return RankCorrelation(
        rho=rho,
        tau=tau,
        p_rho=p_rho,
        p_tau=p_tau,
        n=n,
        degenerate=rho is None or tau is None,
        low_n=n < LOW_N,
    )
