"""Benchmark procedure and the layer / PC-deletion experiment runners.

The procedure: take a suite of representations with functionality scores, pick
the highest-scoring one as reference ``A``, compute ``|f(A) - f(B)|`` and
``d(A, B)`` for every member ``B`` and report the rank correlation per metric.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import InputError, MixedSampleCounts
from .formats import read_representation, validate_suite_document
from .metrics import ALL_METRICS, MetricId, distance
from .perturb import PcDeletionSpec, delete_components
from .repcore import CenteringAxis, RawRepresentation, normalize
from .stats import RankCorrelation, rank_correlation

ARGMAX_F = "argmax_f"


@dataclass(frozen=True)
class SuiteEntry:
    functionality: float
    path: str | None = None
    rep: RawRepresentation | None = None
    model_id: str = ""
    layer_id: int = 0
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.functionality):
            raise InputError("functionality must be finite")
        if self.path is None and self.rep is None:
            raise InputError("suite entry needs a path or an in-memory representation")
        object.__setattr__(self, "functionality", float(self.functionality))
        object.__setattr__(self, "tags", dict(self.tags))

    def load(self, base_dir: Path | None = None) -> RawRepresentation:
        if self.rep is not None:
            return self.rep
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_representation(path)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "functionality": self.functionality,
            "model_id": self.model_id,
            "layer_id": self.layer_id,
            "tags": dict(self.tags),
        }


@dataclass(frozen=True)
class SuiteSpec:
    entries: tuple[SuiteEntry, ...]
    reference_rule: str | int = ARGMAX_F
    include_reference_pair: bool = True
    centering: CenteringAxis = CenteringAxis.PER_NEURON
    metrics: tuple[MetricId, ...] = ALL_METRICS
    base_dir: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "centering", CenteringAxis(self.centering))
        object.__setattr__(self, "metrics", tuple(MetricId(m) for m in self.metrics))
        if len(self.entries) < 2:
            raise InputError("a suite needs at least two entries")
        rule = self.reference_rule
        if rule != ARGMAX_F and not (isinstance(rule, int) and 0 <= rule < len(self.entries)):
            raise InputError(f"invalid reference rule {rule!r}")

    def config(self) -> dict:
        return {
            "reference_rule": self.reference_rule if self.reference_rule == ARGMAX_F else {"index": self.reference_rule},
            "include_reference_pair": self.include_reference_pair,
            "centering": self.centering.value,
            "metrics": [m.value for m in self.metrics],
        }

    def to_dict(self) -> dict:
        return {"schema_version": 1, "entries": [e.to_dict() for e in self.entries], **self.config()}

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "SuiteSpec":
        validate_suite_document(doc)
        rule = doc.get("reference_rule", ARGMAX_F)
        if isinstance(rule, dict):
            rule = rule["index"]
        return cls(
            entries=tuple(
                SuiteEntry(
                    functionality=e["functionality"],
                    path=e["path"],
                    model_id=e.get("model_id", ""),
                    layer_id=e.get("layer_id", 0),
                    tags=e.get("tags", {}),
                )
                for e in doc["entries"]
            ),
            reference_rule=rule,
            include_reference_pair=doc.get("include_reference_pair", True),
            centering=doc.get("centering", CenteringAxis.PER_NEURON.value),
            metrics=doc.get("metrics", [m.value for m in ALL_METRICS]),
            base_dir=base_dir,
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SuiteSpec":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)


# -- loading, canonical order and fingerprints --------------------------------


def _entry_digest(entry: SuiteEntry, raw: RawRepresentation) -> str:
    h = hashlib.sha256(b"simbench-entry-v1\0")
    h.update(np.asarray(raw.data.shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(raw.data, dtype="<f8").tobytes())
    meta = {
        "functionality": float(entry.functionality).hex(),
        "model_id": entry.model_id,
        "layer_id": entry.layer_id,
        "tags": dict(entry.tags),
    }
    h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class PreparedEntry:
    entry: SuiteEntry
    data: np.ndarray  # normalized
    digest: str

    @property
    def sort_key(self):
        e = self.entry
        return (e.model_id, e.layer_id, json.dumps(dict(e.tags), sort_keys=True), e.functionality, self.digest)


@dataclass(frozen=True)
class PreparedSuite:
    """Suite entries loaded, normalized and put in a canonical order."""

    entries: tuple[PreparedEntry, ...]
    reference: int
    spec: SuiteSpec
    fingerprint: str

    @property
    def functionality(self) -> np.ndarray:
        return np.array([p.entry.functionality for p in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def select_reference(functionality: Sequence[float]) -> int:
    """Index of the highest score; the smallest index wins ties."""
    return int(np.argmax(np.asarray(functionality, dtype=np.float64)))


def prepare_suite(suite: SuiteSpec) -> PreparedSuite:
    loaded = []
    for entry in suite.entries:
        raw = entry.load(suite.base_dir)
        loaded.append(PreparedEntry(entry, normalize(raw, suite.centering).data, _entry_digest(entry, raw)))
    n_values = {p.data.shape[1] for p in loaded}
    if len(n_values) > 1:
        raise MixedSampleCounts(f"suite entries disagree on the number of examples: {sorted(n_values)}")

    explicit = None if suite.reference_rule == ARGMAX_F else loaded[suite.reference_rule]
    order = sorted(range(len(loaded)), key=lambda i: loaded[i].sort_key)
    prepared = tuple(loaded[i] for i in order)
    if explicit is None:
        ref = select_reference([p.entry.functionality for p in prepared])
    else:
        ref = next(i for i, p in enumerate(prepared) if p is explicit)

    cfg = suite.config()
    if explicit is not None:
        cfg["reference_rule"] = {"entry": explicit.digest}
    h = hashlib.sha256(b"simbench-suite-v1\0")
    h.update(json.dumps({"config": cfg, "entries": sorted(p.digest for p in prepared)}, sort_keys=True).encode())
    return PreparedSuite(entries=prepared, reference=ref, spec=suite, fingerprint=h.hexdigest())


def distance_row(prepared: PreparedSuite, ref: int, metric: MetricId, workers: int = 1) -> np.ndarray:
    """``d(ref, B)`` for every entry ``B``; the reference is always the first argument."""
    a = prepared.entries[ref].data

    def one(p: PreparedEntry) -> float:
        return distance(metric, a, p.data)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(one, prepared.entries)))
    return np.array([one(p) for p in prepared.entries])


# -- benchmark -----------------------------------------------------------------


@dataclass(frozen=True)
class PairRow:
    entry_id: str
    model_id: str
    layer_id: int
    tags: Mapping[str, str]
    functionality: float
    delta_f: float
    distances: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "model_id": self.model_id,
            "layer_id": self.layer_id,
            "tags": dict(self.tags),
            "functionality": self.functionality,
            "delta_f": self.delta_f,
            "distances": dict(self.distances),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairRow":
        return cls(**d)


@dataclass(frozen=True)
class BenchmarkReport:
    correlations: Mapping[str, RankCorrelation]
    reference: Mapping[str, object]
    pairs: tuple[PairRow, ...]
    fingerprint: str
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "correlations": {m: c.to_dict() for m, c in self.correlations.items()},
            "reference": dict(self.reference),
            "pairs": [p.to_dict() for p in self.pairs],
            "fingerprint": self.fingerprint,
            "tool_version": self.tool_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        return cls(
            correlations={m: RankCorrelation.from_dict(c) for m, c in d["correlations"].items()},
            reference=d["reference"],
            pairs=tuple(PairRow.from_dict(p) for p in d["pairs"]),
            fingerprint=d["fingerprint"],
            tool_version=d["tool_version"],
        )

    def pair_table_csv(self) -> str:
        metrics = list(self.correlations)
        lines = [",".join(["entry_id", "model_id", "layer_id", "functionality", "delta_f", *metrics])]
        for p in self.pairs:
            cells = [p.entry_id, p.model_id, str(p.layer_id), repr(p.functionality), repr(p.delta_f)]
            cells += [repr(p.distances[m]) for m in metrics]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def run_benchmark(suite: SuiteSpec | PreparedSuite, workers: int = 1) -> BenchmarkReport:
    prepared = suite if isinstance(suite, PreparedSuite) else prepare_suite(suite)
    spec = prepared.spec
    ref = prepared.reference
    f = prepared.functionality
    rows = {m: distance_row(prepared, ref, m, workers) for m in spec.metrics}
    keep = [i for i in range(len(prepared)) if spec.include_reference_pair or i != ref]
    delta_f = np.abs(f[ref] - f[keep])

    correlations = {m.value: rank_correlation(delta_f, rows[m][keep]) for m in spec.metrics}
    pairs = tuple(
        PairRow(
            entry_id=prepared.entries[i].digest[:16],
            model_id=prepared.entries[i].entry.model_id,
            layer_id=prepared.entries[i].entry.layer_id,
            tags=dict(prepared.entries[i].entry.tags),
            functionality=float(f[i]),
            delta_f=float(abs(f[ref] - f[i])),
            distances={m.value: float(rows[m][i]) for m in spec.metrics},
        )
        for i in keep
    )
    r = prepared.entries[ref]
    reference = {
        "entry_id": r.digest[:16],
        "model_id": r.entry.model_id,
        "layer_id": r.entry.layer_id,
        "tags": dict(r.entry.tags),
        "functionality": r.entry.functionality,
    }
    return BenchmarkReport(
        correlations=correlations, reference=reference, pairs=pairs, fingerprint=prepared.fingerprint
    )


def aggregate_correlations(reports: Iterable[BenchmarkReport]) -> dict[str, dict[str, float | None]]:
    """Arithmetic mean of rho and tau per metric over several suites (undefined values skipped)."""
    acc: dict[str, dict[str, list[float]]] = {}
    for rep in reports:
        for m, c in rep.correlations.items():
            slot = acc.setdefault(m, {"rho": [], "tau": []})
            if c.rho is not None:
                slot["rho"].append(c.rho)
            if c.tau is not None:
                slot["tau"].append(c.tau)
    return {
        m: {k: (float(np.mean(v)) if v else None) for k, v in slot.items()} for m, slot in acc.items()
    }


# -- layer-by-layer distances --------------------------------------------------


def _prep(rep, centering: CenteringAxis | str | None) -> np.ndarray:
    if centering is None:
        return np.asarray(getattr(rep, "data", rep), dtype=np.float64)
    return normalize(rep if isinstance(rep, RawRepresentation) else np.asarray(rep), centering).data


@dataclass(frozen=True)
class LayerMatrices:
    cross: np.ndarray  # d(a_i, b_j)
    within_a: np.ndarray
    within_b: np.ndarray

    def rows(self) -> list[tuple[str, int, int, float]]:
        out = []
        for name, mat in (("cross", self.cross), ("within_a", self.within_a), ("within_b", self.within_b)):
            for (i, j), v in np.ndenumerate(mat):
                out.append((name, i, j, float(v)))
        return out

    def to_csv(self) -> str:
        lines = ["block,layer_a,layer_b,distance"]
        lines += [f"{b},{i},{j},{v!r}" for b, i, j, v in self.rows()]
        return "\n".join(lines) + "\n"


def pairwise_layer_matrix(
    model_a: Sequence,
    model_b: Sequence,
    metric: MetricId | str,
    centering: CenteringAxis | str | None = CenteringAxis.PER_NEURON,
) -> LayerMatrices:
    """Distances between every layer of two models, plus each model against itself."""
    metric = MetricId(metric)
    a = [_prep(r, centering) for r in model_a]
    b = [_prep(r, centering) for r in model_b]
    if len({m.shape[1] for m in a + b}) > 1:
        raise MixedSampleCounts("all layers must share the same examples")

    def block(xs, ys):
        return np.array([[distance(metric, x, y) for y in ys] for x in xs])

    return LayerMatrices(cross=block(a, b), within_a=block(a, a), within_b=block(b, b))


# -- PC-deletion detection -----------------------------------------------------


@dataclass(frozen=True)
class DetectionResult:
    metric: str
    p: int
    curve: tuple[tuple[int, float], ...]
    baseline: float
    threshold_k: int | None
    threshold_fraction: float | None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "p": self.p,
            "curve": [[k, d] for k, d in self.curve],
            "baseline": self.baseline,
            "threshold_k": self.threshold_k,
            "threshold_fraction": self.threshold_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionResult":
        return cls(
            metric=d["metric"],
            p=d["p"],
            curve=tuple((int(k), float(v)) for k, v in d["curve"]),
            baseline=d["baseline"],
            threshold_k=d["threshold_k"],
            threshold_fraction=d["threshold_fraction"],
        )


def detection_threshold(
    rep,
    k_list: Sequence[int] | PcDeletionSpec,
    metric: MetricId | str,
    baseline: float,
    renormalize: bool = False,
    atol: float = 1e-9,
) -> DetectionResult:
    """Distance from ``rep`` to its k-deleted versions, and the first k above ``baseline``.

    ``atol`` absorbs rounding noise, so a distance only counts as above the
    baseline when it exceeds ``baseline + atol``. With ``renormalize`` each
    deleted representation is rescaled to unit Frobenius norm first.
    """
    metric = MetricId(metric)
    if baseline < 0:
        raise InputError("baseline must be non-negative")
    a = np.asarray(getattr(rep, "data", rep), dtype=np.float64)
    spec = k_list if isinstance(k_list, PcDeletionSpec) else PcDeletionSpec(tuple(k_list))
    spec.validate_for(a.shape[0])
    curve = []
    for k in spec.k_list:
        b = delete_components(a, k)
        if renormalize:
            b = normalize(b, CenteringAxis.NONE).data
        curve.append((k, distance(metric, a, b)))
    hit = next((k for k, d in curve if d > baseline + atol), None)
    return DetectionResult(
        metric=metric.value,
        p=a.shape[0],
        curve=tuple(curve),
        baseline=float(baseline),
        threshold_k=hit,
        threshold_fraction=None if hit is None else hit / a.shape[0],
    )


def cross_seed_baseline(
    reps: Sequence,
    metric: MetricId | str,
    centering: CenteringAxis | str | None = CenteringAxis.PER_NEURON,
) -> float:
    """Mean distance over all ordered pairs of distinct representations."""
    if len(reps) < 2:
        raise InputError("baseline needs at least two representations")
    metric = MetricId(metric)
    mats = [_prep(r, centering) for r in reps]
    vals = [distance(metric, x, y) for i, x in enumerate(mats) for j, y in enumerate(mats) if i != j]
    return float(np.mean(vals))


def detection_sweep(
    rep,
    seed_reps: Sequence,
    metrics: Sequence[MetricId | str] = ALL_METRICS,
    k_list: Sequence[int] | None = None,
    centering: CenteringAxis | str = CenteringAxis.PER_NEURON,
) -> dict[str, DetectionResult]:
    """Detection thresholds for several metrics against a cross-seed baseline.

    ``rep`` is normalized, deleted versions are renormalized to unit norm, and
    the baseline is averaged over ``seed_reps`` (same layer, different seeds).
    """
    a = _prep(rep, centering)
    ks = list(range(a.shape[0])) if k_list is None else list(k_list)
    out = {}
    for m in metrics:
        m = MetricId(m)
        baseline = cross_seed_baseline(seed_reps, m, centering)
        out[m.value] = detection_threshold(a, ks, m, baseline, renormalize=True)
    return out
