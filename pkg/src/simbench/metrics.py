"""The five representation dissimilarity measures and the CCA solver behind three of them.

All functions expect matrices in neurons-by-examples layout that have already
been centered and normalized (see :func:`simbench.repcore.normalize`); they do
not center on their own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DegenerateWeights,
    InsufficientSamples,
    ShapeMismatch,
    ZeroMatrix,
)
from .repcore import RANK_RTOL, as_matrix, nuclear_norm

_TINY = 1e-300
_RHO_SLACK = 1e-8
_NEG_SLACK = 1e-10
_TIE_TOL = 1e-9


class MetricId(str, enum.Enum):
    LINEAR_CKA = "linear_cka"
    MEAN_CCA = "mean_cca"
    R2_CCA = "r2_cca"
    PWCCA = "pwcca"
    PROCRUSTES = "procrustes"

    def __str__(self) -> str:
        return self.value


ALL_METRICS: tuple[MetricId, ...] = tuple(MetricId)
SYMMETRIC_METRICS = frozenset({MetricId.LINEAR_CKA, MetricId.PROCRUSTES})


def _data(x) -> np.ndarray:
    return as_matrix(getattr(x, "data", x))


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _data(a), _data(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(
            f"representations disagree on the number of examples: {a.shape[1]} vs {b.shape[1]}"
        )
    return a, b


@dataclass(frozen=True)
class CcaResult:
    """Canonical correlations between the row spaces of two matrices.

    ``projections_a`` holds one unit-norm row per direction of ``a``'s row space
    (``rank(a)`` rows); the first ``n_components`` are paired with rows of
    ``projections_b`` and the rest have correlation zero with ``b``.
    """

    rho: np.ndarray
    directions_a: np.ndarray
    directions_b: np.ndarray
    projections_a: np.ndarray
    projections_b: np.ndarray
    n_components: int

    def padded_rho(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        k = min(length, self.rho.size)
        out[:k] = self.rho[:k]
        return out


def _row_space(m: np.ndarray, rel_tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal basis for the row space of ``m`` via pivoted QR of ``m.T``.

    Returns ``(q, r, perm)`` truncated to the numerical rank, such that
    ``m.T[:, perm] ~= q @ r``.
    """
    q, r, perm = scipy.linalg.qr(m.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] < _TINY:
        raise ZeroMatrix("cannot run CCA on a zero matrix")
    rank = int(np.count_nonzero(diag > rel_tol * diag[0]))
    return q[:, :rank], r[:rank, :rank], perm[:rank]


def _canonicalize_ties(a, qa, u, v, rho, tol: float = _TIE_TOL) -> None:
    """Fix the basis inside groups of equal canonical correlations, in place.

    Within such a group (including the unpaired directions of ``a``, whose
    correlation is zero) any rotation is an equally valid CCA solution; the
    projection weights are not rotation invariant, so we pick ``a``'s own
    principal axes restricted to the group's subspace. Paired directions of
    ``b`` get the same rotation so the pairing is preserved.
    """
    full = np.zeros(u.shape[1])
    full[: rho.size] = rho
    start = 0
    for i in range(1, full.size + 1):
        if i == full.size or full[i - 1] - full[i] > tol:
            if i - start > 1:
                block = u[:, start:i]
                _, _, wt = np.linalg.svd(a @ (qa @ block), full_matrices=False)
                u[:, start:i] = block @ wt.T
                if i <= rho.size:
                    v[:, start:i] = v[:, start:i] @ wt.T
            start = i


def cca(a, b, rel_tol: float = RANK_RTOL) -> CcaResult:
    a, b = _pair(a, b)
    (p1, n), p2 = a.shape, b.shape[0]
    if n < max(p1, p2):
        raise InsufficientSamples(
            f"CCA needs at least as many examples as neurons (n={n}, p1={p1}, p2={p2})"
        )
    try:
        qa, ra, perm_a = _row_space(a, rel_tol)
        qb, rb, perm_b = _row_space(b, rel_tol)
        u, s, vt = np.linalg.svd(qa.T @ qb, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"CCA decomposition failed: {exc}") from exc
    k = min(qa.shape[1], qb.shape[1])
    rho = s[:k]
    if rho.size and (rho.max() > 1.0 + _RHO_SLACK or rho.min() < -_RHO_SLACK):
        raise ConvergenceFailure(f"canonical correlations out of range: [{rho.min()}, {rho.max()}]")
    rho = np.clip(rho, 0.0, 1.0)
    v = vt.T
    _canonicalize_ties(a, qa, u, v, rho)

    dirs_a = np.zeros((p1, qa.shape[1]))
    dirs_a[perm_a] = scipy.linalg.solve_triangular(ra, u)
    dirs_b = np.zeros((p2, k))
    dirs_b[perm_b] = scipy.linalg.solve_triangular(rb, v[:, :k])
    return CcaResult(
        rho=rho,
        directions_a=dirs_a,
        directions_b=dirs_b,
        projections_a=(qa @ u).T,
        projections_b=(qb @ v[:, :k]).T,
        n_components=k,
    )


def linear_cka_distance(a, b) -> float:
    a, b = _pair(a, b)
    cross = np.linalg.norm(a @ b.T) ** 2
    denom = np.linalg.norm(a @ a.T) * np.linalg.norm(b @ b.T)
    if not denom >= _TINY:
        raise ZeroMatrix("Gram matrix norm underflows; is one representation zero?")
    return float(min(1.0, max(0.0, 1.0 - cross / denom)))


def mean_cca_distance(a, b, rel_tol: float = RANK_RTOL) -> float:
    # coefficients missing because of rank deficiency count as zero
    p1 = _data(a).shape[0]
    res = cca(a, b, rel_tol)
    return float(1.0 - np.sum(res.rho) / p1)


def r2_cca_distance(a, b, rel_tol: float = RANK_RTOL) -> float:
    p1 = _data(a).shape[0]
    res = cca(a, b, rel_tol)
    return float(1.0 - np.sum(res.rho**2) / p1)


def pwcca_weights(a, res: CcaResult) -> np.ndarray:
    """Projection weights: total absolute overlap of each canonical projection with the rows of ``a``."""
    return np.abs(res.projections_a @ _data(a).T).sum(axis=1)


def pwcca_distance(a, b, rel_tol: float = RANK_RTOL) -> float:
    """Projection-weighted CCA distance, weights taken from ``a``.

    Every direction of ``a``'s row space gets a weight; directions with no
    partner in ``b`` contribute correlation zero.
    """
    a, b = _pair(a, b)
    res = cca(a, b, rel_tol)
    alpha = pwcca_weights(a, res)
    total = alpha.sum()
    if not total >= _TINY:
        raise DegenerateWeights("projection weights sum to zero")
    rho = res.padded_rho(alpha.size)
    return float(min(1.0, max(0.0, 1.0 - np.dot(alpha, rho) / total)))


def procrustes_distance(a, b) -> float:
    a, b = _pair(a, b)
    d = np.linalg.norm(a) ** 2 + np.linalg.norm(b) ** 2 - 2.0 * nuclear_norm(a @ b.T)
    scale = max(1.0, np.linalg.norm(a) ** 2 + np.linalg.norm(b) ** 2)
    if d < -_NEG_SLACK * scale:
        raise ConvergenceFailure(f"negative Procrustes distance {d}")
    return float(max(d, 0.0))


_DISPATCH = {
    MetricId.LINEAR_CKA: linear_cka_distance,
    MetricId.MEAN_CCA: mean_cca_distance,
    MetricId.R2_CCA: r2_cca_distance,
    MetricId.PWCCA: pwcca_distance,
    MetricId.PROCRUSTES: procrustes_distance,
}


def distance(metric: MetricId | str, a, b) -> float:
    return _DISPATCH[MetricId(metric)](a, b)


def parse_metrics(spec: str | list) -> list[MetricId]:
    """``"all"``, a comma-separated string, or a list of metric names."""
    if isinstance(spec, str):
        if spec == "all":
            return list(ALL_METRICS)
        spec = [s for s in spec.split(",") if s]
    return [MetricId(s) for s in spec]
