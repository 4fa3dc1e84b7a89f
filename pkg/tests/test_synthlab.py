import json

import numpy as np
import pytest

from simbench.bench import run_benchmark
from simbench.errors import InputError, ShapeMismatch
from simbench.synthlab import (
    PRESETS,
    SynthConfig,
    build_suite,
    extract_representations,
    generate_dataset,
    linear_probe,
    preset_config,
    suite_members,
    train_mlp,
    train_models,
)

TINY = SynthConfig(
    input_dim=8,
    n_classes=3,
    clusters_per_class=2,
    n_train=300,
    n_eval=120,
    hidden_widths=(12, 10),
    train_seeds=(0, 1),
    epochs=3,
    probe_iterations=200,
)


@pytest.fixture(scope="module")
def tiny_run():
    return train_models(TINY)


def test_dataset_is_balanced_and_seeded():
    a, b = generate_dataset(TINY, 4), generate_dataset(TINY, 4)
    np.testing.assert_array_equal(a.x_train, b.x_train)
    counts = np.bincount(a.y_eval, minlength=3)
    assert counts.max() - counts.min() <= 1
    assert not np.array_equal(a.x_train, generate_dataset(TINY, 5).x_train)


def test_training_is_deterministic_and_learns():
    data = generate_dataset(TINY, 0)
    m1, m2 = train_mlp(TINY, data, 7), train_mlp(TINY, data, 7)
    for w1, w2 in zip(m1.weights, m2.weights):
        np.testing.assert_array_equal(w1, w2)
    assert m1.loss_history[-1] < m1.loss_history[0]
    assert m1.train_accuracy > 1 / 3


def test_representations_shape_and_ids(tiny_run):
    reps = tiny_run.reps[1]
    assert [r.data.shape for r in reps] == [(12, 120), (10, 120)]
    assert [r.layer_id for r in reps] == [0, 1]
    assert reps[0].model_id == "mlp-seed1" and reps[0].tags["seed"] == "1"


def test_extract_rejects_wrong_dataset(tiny_run):
    other = generate_dataset(SynthConfig(**{**TINY.to_dict(), "input_dim": 5}), 0)
    with pytest.raises(ShapeMismatch):
        extract_representations(tiny_run.models[0], other)


def test_probe_beats_chance_on_separable_data():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 100)
    data = rng.standard_normal((3, 200))
    data[0] += 4 * y
    assert linear_probe(data, y).accuracy > 0.95
    with pytest.raises(ShapeMismatch):
        linear_probe(data, y[:-1])


def test_layer_depth_members(tiny_run):
    members = suite_members(tiny_run, "layer-depth")
    assert len(members) == 4
    assert all(0.0 <= acc <= 1.0 for _, acc in members)


def test_pc_deletion_members_follow_the_grid(tiny_run):
    members = suite_members(tiny_run, "pc-deletion")
    ks = [int(rep.tags["k"]) for rep, _ in members]
    grid = list(TINY.deletion_spec().k_list)
    assert ks == grid * 2
    for rep, _ in members:
        assert np.linalg.matrix_rank(rep.data) <= 10 - int(rep.tags["k"])


def test_build_suite_writes_loadable_files(tmp_path, tiny_run):
    suite = build_suite(TINY, "layer-depth", out_dir=tmp_path, run=tiny_run)
    assert (tmp_path / "suite.json").exists() and (tmp_path / "config.json").exists()
    doc = json.loads((tmp_path / "suite.json").read_text())
    assert len(doc["entries"]) == 4
    from_disk = run_benchmark(suite)
    in_memory = run_benchmark(build_suite(TINY, "layer-depth", run=tiny_run))
    assert from_disk.correlations == in_memory.correlations


def test_presets_load():
    for name in PRESETS:
        cfg = preset_config(name)
        assert cfg.hidden_widths == (64, 64, 64, 64)
    assert len(preset_config("layer-depth").train_seeds) == 6
    with pytest.raises(InputError):
        preset_config("imagenet")


def test_config_validation():
    with pytest.raises(InputError):
        SynthConfig(n_classes=1)
    with pytest.raises(InputError):
        SynthConfig.from_dict({"bogus": 1})
    with pytest.raises(InputError):
        SynthConfig(hidden_widths=(8,), k_list=(0, 9))
    assert SynthConfig.from_dict(TINY.to_dict()) == TINY
