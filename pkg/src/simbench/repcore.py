"""Representation types, normalization and the shared SVD / nuclear-norm helpers.

A representation is stored neurons-by-examples: ``data[i, j]`` is the activation
of neuron ``i`` on example ``j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConvergenceFailure, NonFinite, ShapeMismatch, ZeroMatrix

RANK_RTOL = 1e-10
_ZERO_NORM = 1e-300


class CenteringAxis(str, enum.Enum):
    PER_NEURON = "per-neuron"
    PER_EXAMPLE = "per-example"
    NONE = "none"


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Widen to a 2-D float64 array and reject NaN/Inf."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawRepresentation:
    data: np.ndarray
    model_id: str = ""
    layer_id: int = 0
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arr = as_matrix(self.data, "representation")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"representation must be at least 1x1, got {arr.shape}")
        if int(self.layer_id) < 0:
            raise ShapeMismatch(f"layer_id must be >= 0, got {self.layer_id}")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "layer_id", int(self.layer_id))
        object.__setattr__(self, "tags", MappingProxyType(dict(self.tags)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, RawRepresentation):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.layer_id == other.layer_id
            and dict(self.tags) == dict(other.tags)
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True)
class Provenance:
    model_id: str
    layer_id: int
    axis: CenteringAxis


@dataclass(frozen=True)
class NormalizedRepresentation:
    data: np.ndarray
    source: Provenance

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rel_tol: float = RANK_RTOL

    @property
    def rank(self) -> int:
        """Number of singular values above ``rel_tol * sigma_max``."""
        if self.sigma.size == 0 or self.sigma[0] <= 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > self.rel_tol * self.sigma[0]))

    @property
    def numerically_zero(self) -> np.ndarray:
        """Boolean mask of singular values treated as zero for rank decisions."""
        if self.sigma.size == 0 or self.sigma[0] <= 0.0:
            return np.ones_like(self.sigma, dtype=bool)
        return ~(self.sigma > self.rel_tol * self.sigma[0])


def center(m: np.ndarray, axis: CenteringAxis | str = CenteringAxis.PER_NEURON) -> np.ndarray:
    axis = CenteringAxis(axis)
    if axis is CenteringAxis.PER_NEURON:
        return m - m.mean(axis=1, keepdims=True)
    if axis is CenteringAxis.PER_EXAMPLE:
        return m - m.mean(axis=0, keepdims=True)
    return m.copy()


def normalize(
    raw: RawRepresentation | np.ndarray,
    axis: CenteringAxis | str = CenteringAxis.PER_NEURON,
) -> NormalizedRepresentation:
    """Center along ``axis`` and scale to unit Frobenius norm.

    Per-neuron centering (the default) removes each neuron's mean over the
    examples, which is what the centered kernel alignment needs.
    """
    axis = CenteringAxis(axis)
    if isinstance(raw, RawRepresentation):
        data, model_id, layer_id = raw.data, raw.model_id, raw.layer_id
    else:
        data, model_id, layer_id = as_matrix(raw, "representation"), "", 0
    centered = center(data, axis)
    norm = np.linalg.norm(centered)
    if not norm >= _ZERO_NORM:
        raise ZeroMatrix("representation is zero after centering")
    return NormalizedRepresentation(
        data=_frozen(centered / norm),
        source=Provenance(model_id=model_id, layer_id=layer_id, axis=axis),
    )


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # make the first non-negligible entry of every left singular vector positive
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            u[:, j] *= -1.0
            v[:, j] *= -1.0


def svd(m, rel_tol: float = RANK_RTOL) -> SvdFactors:
    """Thin SVD ``m = u @ diag(sigma) @ v.T`` with a deterministic sign convention."""
    arr = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    v = vt.T.copy()
    u = u.copy()
    _fix_signs(u, v)
    return SvdFactors(u=u, sigma=s, v=v, rel_tol=rel_tol)


def singular_values(m) -> np.ndarray:
    arr = as_matrix(m)
    try:
        return np.linalg.svd(arr, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc


def nuclear_norm(m) -> float:
    return float(np.sum(singular_values(m)))
