"""Small-scale model factory: MLPs on synthetic Gaussian-mixture data, their
per-layer representations, and linear-probe accuracies as functionality scores.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from .bench import SuiteEntry, SuiteSpec
from .errors import DivergenceDetected, InputError, ShapeMismatch
from .formats import atomic_write_text, dump_json, write_representation
from .metrics import ALL_METRICS
from .perturb import PcDeletionSpec, delete_components, k_grid
from .repcore import CenteringAxis, RawRepresentation, normalize

PRESETS = ("layer-depth", "pc-deletion")


@dataclass(frozen=True)
class SynthConfig:
    input_dim: int = 32
    n_classes: int = 10
    clusters_per_class: int = 4
    class_sep: float = 1.0
    noise: float = 1.0
    n_train: int = 6000
    n_eval: int = 2000
    hidden_widths: tuple[int, ...] = (64, 64, 64, 64)
    activation: str = "relu"
    train_seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    data_seed: int = 0
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 64
    probe_l2: float = 0.1
    probe_iterations: int = 2000
    pc_layer: int = -1
    k_list: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        object.__setattr__(self, "train_seeds", tuple(int(s) for s in self.train_seeds))
        if self.k_list is not None:
            object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))
        positive = ("input_dim", "n_classes", "clusters_per_class", "n_train", "n_eval", "batch_size")
        for name in positive:
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if self.n_classes < 2:
            raise InputError("n_classes must be at least 2")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise InputError("hidden_widths must be a non-empty list of positive integers")
        if self.n_eval < max(self.hidden_widths):
            raise InputError("n_eval must be at least the largest hidden width")
        if self.activation not in ("relu", "tanh"):
            raise InputError(f"unknown activation {self.activation!r}")
        if not self.train_seeds:
            raise InputError("train_seeds must not be empty")
        if self.epochs < 0 or self.learning_rate <= 0 or self.probe_l2 < 0 or self.probe_iterations < 1:
            raise InputError("invalid optimizer settings")
        if not -len(self.hidden_widths) <= self.pc_layer < len(self.hidden_widths):
            raise InputError("pc_layer is out of range")
        if self.k_list is not None:
            self.deletion_spec()

    @property
    def pc_width(self) -> int:
        return self.hidden_widths[self.pc_layer]

    def deletion_spec(self) -> PcDeletionSpec:
        if self.k_list is None:
            return k_grid(self.pc_width)
        spec = PcDeletionSpec(self.k_list)
        spec.validate_for(self.pc_width)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        d["train_seeds"] = list(self.train_seeds)
        d["k_list"] = None if self.k_list is None else list(self.k_list)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def preset_config(preset: str) -> SynthConfig:
    """Shipped config for a preset (``presets/<preset>.json`` in the package)."""
    if preset not in PRESETS:
        raise InputError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    text = resources.files("simbench").joinpath("presets", f"{preset}.json").read_text()
    return SynthConfig.from_dict(json.loads(text))


@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray  # n_train x input_dim
    y_train: np.ndarray
    x_eval: np.ndarray
    y_eval: np.ndarray


def _balanced_labels(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.arange(n) % k
    return rng.permutation(labels)


def generate_dataset(config: SynthConfig, seed: int) -> Dataset:
    """Gaussian mixture with ``clusters_per_class`` blobs per class.

    Classes are balanced (counts differ by at most one) and train/eval samples
    are drawn independently.
    """
    rng = np.random.default_rng(seed)
    k, c = config.n_classes, config.clusters_per_class
    centers = rng.normal(0.0, config.class_sep, size=(k * c, config.input_dim))

    def sample(n):
        y = _balanced_labels(n, k, rng)
        blob = y + k * rng.integers(0, c, size=n)
        x = centers[blob] + config.noise * rng.standard_normal((n, config.input_dim))
        return x, y

    x_tr, y_tr = sample(config.n_train)
    x_ev, y_ev = sample(config.n_eval)
    return Dataset(x_tr, y_tr, x_ev, y_ev)


@dataclass(frozen=True)
class MLP:
    weights: tuple[np.ndarray, ...]  # out x in
    biases: tuple[np.ndarray, ...]
    activation: str
    seed: int
    train_accuracy: float
    loss_history: tuple[float, ...] = field(default=())

    @property
    def model_id(self) -> str:
        return f"mlp-seed{self.seed}"


def _act(z, name):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(h, name):
    return (h > 0).astype(h.dtype) if name == "relu" else 1.0 - h * h


def forward(model: MLP, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Hidden activations (examples x width each) and output logits for rows of ``x``."""
    hidden, h = [], x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = _act(h @ w.T + b, model.activation)
        hidden.append(h)
    return hidden, h @ model.weights[-1].T + model.biases[-1]


def _softmax_xent(logits, y):
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[np.arange(len(y)), y]))
    probs = np.exp(logits - lse[:, None])
    return loss, probs


def train_mlp(config: SynthConfig, dataset: Dataset, seed: int) -> MLP:
    """Mini-batch SGD with momentum on softmax cross-entropy, fully determined by ``seed``."""
    if dataset.x_train.shape[1] != config.input_dim:
        raise ShapeMismatch("dataset does not match config.input_dim")
    rng = np.random.default_rng(seed)
    dims = [config.input_dim, *config.hidden_widths, config.n_classes]
    weights = [rng.standard_normal((o, i)) * np.sqrt(2.0 / i) for i, o in zip(dims, dims[1:])]
    biases = [np.zeros(o) for o in dims[1:]]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    x, y = dataset.x_train, dataset.y_train
    n = len(y)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x[idx], y[idx]
            acts = [xb]
            for w, b in zip(weights[:-1], biases[:-1]):
                acts.append(_act(acts[-1] @ w.T + b, config.activation))
            logits = acts[-1] @ weights[-1].T + biases[-1]
            loss, probs = _softmax_xent(logits, yb)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"training loss became {loss}")
            total += loss * len(idx)
            delta = probs
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            for layer in range(len(weights) - 1, -1, -1):
                gw = delta.T @ acts[layer]
                gb = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer]) * _act_grad(acts[layer], config.activation)
                vel_w[layer] = config.momentum * vel_w[layer] - config.learning_rate * gw
                vel_b[layer] = config.momentum * vel_b[layer] - config.learning_rate * gb
                weights[layer] += vel_w[layer]
                biases[layer] += vel_b[layer]
        history.append(total / n)
    model = MLP(tuple(weights), tuple(biases), config.activation, seed, 0.0, tuple(history))
    if not all(np.all(np.isfinite(w)) for w in weights):
        raise DivergenceDetected("weights became non-finite")
    _, logits = forward(model, x)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return replace(model, train_accuracy=acc)


def extract_representations(model: MLP, dataset: Dataset) -> list[RawRepresentation]:
    """Eval-set activations of each hidden layer, as width x n_eval matrices (layer_id 0 = first hidden)."""
    if dataset.x_eval.shape[1] != model.weights[0].shape[1]:
        raise ShapeMismatch("dataset inputs do not match the model's input layer")
    hidden, _ = forward(model, dataset.x_eval)
    return [
        RawRepresentation(data=h.T, model_id=model.model_id, layer_id=i, tags={"seed": str(model.seed)})
        for i, h in enumerate(hidden)
    ]


@dataclass(frozen=True)
class ProbeResult:
    layer_id: int
    accuracy: float
    task: str


def _probe_split(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 7919]).permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def linear_probe(
    rep: RawRepresentation | np.ndarray,
    labels,
    task: str = "class",
    seed: int = 0,
    l2: float = 0.1,
    max_iter: int = 2000,
) -> ProbeResult:
    """Multinomial logistic regression on half of the examples, accuracy on the other half.

    Features are standardized with probe-train statistics; the bias is not
    penalized. The objective is convex and minimized full-batch with L-BFGS to
    a gradient tolerance of 1e-6.
    """
    data = rep.data if isinstance(rep, RawRepresentation) else np.asarray(rep, dtype=np.float64)
    layer_id = rep.layer_id if isinstance(rep, RawRepresentation) else 0
    labels = np.asarray(labels)
    if labels.shape != (data.shape[1],):
        raise ShapeMismatch("need one label per example (column)")
    classes, y = np.unique(labels, return_inverse=True)
    tr, ev = _probe_split(data.shape[1], seed)
    x = data.T
    mu, sd = x[tr].mean(axis=0), x[tr].std(axis=0)
    sd[sd < 1e-12] = 1.0
    z = (x - mu) / sd
    xt, yt = z[tr], y[tr]
    m, d, k = len(tr), z.shape[1], len(classes)
    onehot = np.zeros((m, k))
    onehot[np.arange(m), yt] = 1.0

    def objective(theta):
        w = theta[: d * k].reshape(d, k)
        b = theta[d * k :]
        logits = xt @ w + b
        lse = logsumexp(logits, axis=1)
        loss = np.mean(lse - np.sum(logits * onehot, axis=1)) + 0.5 * l2 * np.sum(w * w)
        g = (np.exp(logits - lse[:, None]) - onehot) / m
        return loss, np.concatenate([(xt.T @ g + l2 * w).ravel(), g.sum(axis=0)])

    res = scipy.optimize.minimize(
        objective,
        np.zeros(d * k + k),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": 1e-6, "ftol": 0.0},
    )
    if not np.isfinite(res.fun):
        raise DivergenceDetected("probe objective became non-finite")
    w, b = res.x[: d * k].reshape(d, k), res.x[d * k :]
    pred = np.argmax(z[ev] @ w + b, axis=1)
    return ProbeResult(layer_id=layer_id, accuracy=float(np.mean(pred == y[ev])), task=task)


# -- suites --------------------------------------------------------------------


@dataclass
class SynthRun:
    """Trained models and their representations for one config."""

    config: SynthConfig
    dataset: Dataset
    models: list[MLP]
    reps: list[list[RawRepresentation]]  # [seed][layer]


def train_models(config: SynthConfig) -> SynthRun:
    dataset = generate_dataset(config, config.data_seed)
    models = [train_mlp(config, dataset, s) for s in config.train_seeds]
    return SynthRun(config, dataset, models, [extract_representations(m, dataset) for m in models])


def _probe(config: SynthConfig, rep, labels) -> float:
    return linear_probe(
        rep, labels, seed=config.data_seed, l2=config.probe_l2, max_iter=config.probe_iterations
    ).accuracy


def suite_members(run: SynthRun, preset: str) -> list[tuple[RawRepresentation, float]]:
    """(representation, probe accuracy) for every member of a preset suite."""
    cfg, y = run.config, run.dataset.y_eval
    out = []
    if preset == "layer-depth":
        for reps in run.reps:
            out += [(r, _probe(cfg, r, y)) for r in reps]
    elif preset == "pc-deletion":
        spec = cfg.deletion_spec()
        for reps in run.reps:
            base = reps[cfg.pc_layer]
            centered = normalize(base, CenteringAxis.PER_NEURON).data
            for k in spec.k_list:
                rep = RawRepresentation(
                    data=delete_components(centered, k),
                    model_id=base.model_id,
                    layer_id=base.layer_id,
                    tags={**base.tags, "k": str(k)},
                )
                out.append((rep, _probe(cfg, rep, y)))
    else:
        raise InputError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    return out


def build_suite(
    config: SynthConfig,
    preset: str,
    out_dir: str | os.PathLike | None = None,
    run: SynthRun | None = None,
) -> SuiteSpec:
    """Train (or reuse) models, probe every suite member, and optionally write files.

    With ``out_dir`` the representations go to ``out_dir/reps`` and the suite
    to ``out_dir/suite.json``; the returned suite then refers to those files.
    """
    run = run or train_models(config)
    members = suite_members(run, preset)
    entries = []
    for rep, acc in members:
        name = f"{rep.model_id}_layer{rep.layer_id}" + (f"_k{rep.tags['k']}" if "k" in rep.tags else "")
        path = f"reps/{name}.npy" if out_dir is not None else None
        entries.append(
            SuiteEntry(
                functionality=acc,
                path=path,
                rep=None if out_dir is not None else rep,
                model_id=rep.model_id,
                layer_id=rep.layer_id,
                tags=dict(rep.tags),
            )
        )
    suite = SuiteSpec(entries=tuple(entries), metrics=ALL_METRICS)
    if out_dir is None:
        return suite
    out = Path(out_dir)
    for (rep, _), entry in zip(members, entries):
        write_representation(rep, out / entry.path)
    atomic_write_text(out / "suite.json", dump_json(suite.to_dict()))
    atomic_write_text(out / "config.json", dump_json({"preset": preset, **config.to_dict()}))
    return replace(suite, base_dir=out)
