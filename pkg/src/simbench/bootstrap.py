"""Bootstrap comparison of metrics' rank correlations.

Each resample draws ``|S|`` suite members with replacement, takes the
best-scoring drawn member as reference, and records the differences between
metrics' Spearman and Kendall correlations. Resample ``r`` draws from
``numpy.random.default_rng([seed, r])``, so the output does not depend on how
resamples are scheduled across threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bench import PreparedSuite, SuiteSpec, distance_row, prepare_suite
from .errors import InputError
from .metrics import MetricId
from .stats import kendall, spearman

STATISTICS = ("rho", "tau")


@dataclass(frozen=True)
class BootstrapReport:
    pair: tuple[str, str]
    statistic: str
    diffs: tuple[float, ...]  # corr(pair[0]) - corr(pair[1]), valid resamples in order
    ci_low: float
    ci_high: float
    significant: bool
    resamples: int
    skipped: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "statistic": self.statistic,
            "diffs": list(self.diffs),
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "significant": self.significant,
            "resamples": self.resamples,
            "skipped": self.skipped,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapReport":
        return cls(**{**d, "pair": tuple(d["pair"]), "diffs": tuple(d["diffs"])})


def percentile_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Nearest-rank percentile interval."""
    xs = sorted(values)
    if not xs:
        raise InputError("no values to summarize")
    n = len(xs)
    tail = (1.0 - level) / 2.0
    # rounding guards against 0.025 * 2000 landing just above 50
    lo = max(1, math.ceil(round(tail * n, 9)))
    hi = max(1, math.ceil(round((1.0 - tail) * n, 9)))
    return xs[lo - 1], xs[hi - 1]


def draw(n: int, seed: int, r: int) -> np.ndarray:
    return np.random.default_rng([seed, r]).integers(0, n, size=n)


def _one_resample(prepared: PreparedSuite, rows, metrics, seed: int, r: int):
    f = prepared.functionality
    idx = draw(len(prepared), seed, r)
    ref = int(idx[np.argmax(f[idx])])
    delta_f = np.abs(f[ref] - f[idx])
    out = {}
    for m in metrics:
        d = rows[(m, ref)][idx]
        rho, tau = spearman(delta_f, d), kendall(delta_f, d)
        if rho is None or tau is None:
            return None
        out[m] = {"rho": rho, "tau": tau}
    return out


def bootstrap_compare(
    suite: SuiteSpec | PreparedSuite,
    metrics: Sequence[MetricId | str] | None = None,
    resamples: int = 2000,
    seed: int = 0,
    workers: int = 1,
) -> list[BootstrapReport]:
    """Bootstrap 95% intervals for pairwise differences of metrics' rank correlations.

    Resamples whose functionality gaps or distances are constant have no
    defined rank correlation; they are skipped and counted in ``skipped``.
    """
    prepared = suite if isinstance(suite, PreparedSuite) else prepare_suite(suite)
    metrics = [MetricId(m) for m in (metrics if metrics is not None else prepared.spec.metrics)]
    if len(prepared) < 3:
        raise InputError("bootstrap needs a suite with at least 3 entries")
    if len(metrics) < 2:
        raise InputError("bootstrap compares at least two metrics")
    if resamples < 1:
        raise InputError("resamples must be positive")

    f = prepared.functionality
    refs = sorted({int(idx[np.argmax(f[idx])]) for idx in (draw(len(prepared), seed, r) for r in range(resamples))})
    jobs = [(m, ref) for m in dict.fromkeys(metrics) for ref in refs]
    with ThreadPoolExecutor(max(1, workers)) as pool:
        computed = list(pool.map(lambda job: distance_row(prepared, job[1], job[0]), jobs))
    rows = dict(zip(jobs, computed))

    with ThreadPoolExecutor(max(1, workers)) as pool:
        results = list(pool.map(lambda r: _one_resample(prepared, rows, metrics, seed, r), range(resamples)))
    valid = [res for res in results if res is not None]
    skipped = resamples - len(valid)
    if not valid:
        raise InputError("every bootstrap resample was degenerate")

    reports = []
    for m1, m2 in itertools.combinations(metrics, 2):
        for stat in STATISTICS:
            diffs = tuple(float(res[m1][stat] - res[m2][stat]) for res in valid)
            lo, hi = percentile_interval(diffs)
            reports.append(
                BootstrapReport(
                    pair=(m1.value, m2.value),
                    statistic=stat,
                    diffs=diffs,
                    ci_low=float(lo),
                    ci_high=float(hi),
                    significant=bool(lo > 0 or hi < 0),
                    resamples=resamples,
                    skipped=skipped,
                    seed=seed,
                )
            )
    return reports
