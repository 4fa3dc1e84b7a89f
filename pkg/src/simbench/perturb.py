"""Principal-component deletion and seeded random transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NegativeSingularValue, RankOutOfRange, ShapeMismatch
from .repcore import as_matrix, svd

# k-grid used for 768-wide BERT base layers; scaled to other widths by k_grid()
BERT_BASE_K_GRID = (0, 100, 200, 300, 400, 500, 600, 650, 700, 725, 750, 758, 763, 767)
BERT_BASE_WIDTH = 768


@dataclass(frozen=True)
class PcDeletionSpec:
    k_list: tuple[int, ...]

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_list)
        if any(k < 0 for k in ks):
            raise InputError("k values must be non-negative")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise InputError("k_list must be strictly increasing")
        object.__setattr__(self, "k_list", ks)

    def validate_for(self, p: int) -> None:
        if self.k_list and self.k_list[-1] >= p:
            raise RankOutOfRange(f"k={self.k_list[-1]} is not < p={p}")


def k_grid(p: int) -> PcDeletionSpec:
    """The BERT-base deletion grid rescaled to width ``p`` (floored, deduplicated, k < p)."""
    ks = sorted({min(p - 1, (k * p) // BERT_BASE_WIDTH) for k in BERT_BASE_K_GRID})
    return PcDeletionSpec(tuple(ks))


def delete_components(rep, k: int) -> np.ndarray:
    """Project onto the ``p - k`` leading left singular vectors: ``U_{-k}.T @ rep``.

    The result is ``(p - k) x n`` and is not renormalized.
    """
    a = as_matrix(getattr(rep, "data", rep))
    p = a.shape[0]
    if not 0 <= k < p:
        raise RankOutOfRange(f"cannot delete k={k} components from a {p}-row representation")
    factors = svd(a)
    # thin SVD only has min(p, n) left vectors; when n < p the remaining ones
    # carry zero energy, so dropping from the thin basis is equivalent
    keep = min(p - k, factors.u.shape[1])
    out = factors.u[:, :keep].T @ a
    if keep < p - k:
        out = np.vstack([out, np.zeros((p - k - keep, a.shape[1]))])
    return out


def random_orthogonal(p: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign correction)."""
    if p < 1:
        raise InputError("p must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def random_invertible(p: int, seed: int, cond_max: float = 100.0) -> np.ndarray:
    """Random ``p x p`` matrix with condition number at most ``cond_max``.

    Built as ``Q1 @ diag(s) @ Q2`` with Haar factors and singular values drawn
    log-uniformly from ``[1, cond_max]``.
    """
    if cond_max < 1:
        raise InputError("cond_max must be >= 1")
    rng = np.random.default_rng(seed)
    q1 = random_orthogonal(p, int(rng.integers(2**63)))
    q2 = random_orthogonal(p, int(rng.integers(2**63)))
    s = np.exp(rng.uniform(0.0, np.log(cond_max), size=p))
    s[0], s[-1] = 1.0, cond_max ** 0.5 if p > 1 else 1.0
    return (q1 * s) @ q2


def diagonal_family(sigma1, sigma2) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.asarray(sigma1, dtype=np.float64).ravel()
    s2 = np.asarray(sigma2, dtype=np.float64).ravel()
    if s1.shape != s2.shape:
        raise ShapeMismatch(f"singular value vectors differ in length: {s1.size} vs {s2.size}")
    if (s1 < 0).any() or (s2 < 0).any():
        raise NegativeSingularValue("singular values must be non-negative")
    return np.diag(s1), np.diag(s2)
