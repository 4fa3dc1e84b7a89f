import numpy as np
import pytest

from conftest import random_rep
from simbench.errors import InputError, NegativeSingularValue, RankOutOfRange, ShapeMismatch
from simbench.metrics import ALL_METRICS, distance, linear_cka_distance, procrustes_distance
from simbench.perturb import (
    PcDeletionSpec,
    delete_components,
    diagonal_family,
    k_grid,
    random_invertible,
    random_orthogonal,
)


@pytest.mark.parametrize("metric", ALL_METRICS)
def test_delete_zero_is_a_rotation(rng, metric):
    a = random_rep(rng, 5, 40)
    assert distance(metric, a, delete_components(a, 0)) <= 1e-6


def test_delete_one_from_diagonal():
    rep = np.diag([3.0, 2.0, 1.0])
    out = delete_components(rep, 1)
    np.testing.assert_allclose(out, [[3, 0, 0], [0, 2, 0]], atol=1e-15)
    assert procrustes_distance(rep, out) == pytest.approx(1.0, abs=1e-12)


def test_deleted_rows_orthogonal_to_smallest_directions(rng):
    rep = rng.standard_normal((6, 200))
    out = delete_components(rep, 2)
    assert out.shape == (4, 200)
    _, _, vt = np.linalg.svd(rep, full_matrices=False)
    assert np.max(np.abs(out @ vt[-2:].T)) <= 1e-8


def test_delete_out_of_range(rng):
    with pytest.raises(RankOutOfRange):
        delete_components(rng.standard_normal((3, 10)), 3)
    with pytest.raises(RankOutOfRange):
        delete_components(rng.standard_normal((3, 10)), -1)


def test_delete_with_fewer_examples_than_neurons(rng):
    rep = rng.standard_normal((6, 4))
    out = delete_components(rep, 1)
    assert out.shape == (5, 4)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(rep))


def test_energy_accounting_and_truncation_law(rng):
    a = random_rep(rng, 8, 100)
    sigma = np.linalg.svd(a, compute_uv=False)
    prev = -1.0
    for k in range(8):
        out = delete_components(a, k)
        assert np.linalg.norm(out) ** 2 == pytest.approx(np.sum(sigma[: 8 - k] ** 2), abs=1e-8)
        d = procrustes_distance(a, out)
        assert d == pytest.approx(np.sum(sigma[8 - k :] ** 2), abs=1e-8)
        assert d >= prev
        prev = d


def test_cka_curve_reported_not_asserted(rng):
    # only a sanity check that the CKA curve stays in range
    a = random_rep(rng, 6, 80)
    vals = [linear_cka_distance(a, delete_components(a, k)) for k in range(6)]
    assert all(0 <= v <= 1 for v in vals)


def test_random_orthogonal():
    q = random_orthogonal(6, seed=1)
    np.testing.assert_allclose(q.T @ q, np.eye(6), atol=1e-10)
    assert abs(abs(np.linalg.det(q)) - 1) <= 1e-8
    np.testing.assert_array_equal(q, random_orthogonal(6, seed=1))
    assert not np.array_equal(q, random_orthogonal(6, seed=2))


@pytest.mark.parametrize("cond_max", [1.0, 10.0, 100.0])
def test_random_invertible(cond_max):
    for seed in range(10):
        m = random_invertible(5, seed, cond_max)
        s = np.linalg.svd(m, compute_uv=False)
        assert s[-1] > 0
        assert s[0] / s[-1] <= cond_max * (1 + 1e-10)
    np.testing.assert_array_equal(random_invertible(5, 3), random_invertible(5, 3))
    with pytest.raises(InputError):
        random_invertible(3, 0, cond_max=0.5)


def test_diagonal_family():
    a, b = diagonal_family([1], [1])
    assert procrustes_distance(a, b) == 0.0
    a, b = diagonal_family([2, 1], [1, 1])
    assert procrustes_distance(a, b) == pytest.approx(1.0)
    a, b = diagonal_family([1, 0], [0, 1])
    assert linear_cka_distance(a, b) == pytest.approx(1.0)
    with pytest.raises(NegativeSingularValue):
        diagonal_family([1, -1], [1, 1])
    with pytest.raises(ShapeMismatch):
        diagonal_family([1], [1, 1])


def test_deletion_spec_validation():
    with pytest.raises(InputError):
        PcDeletionSpec((0, 2, 2))
    with pytest.raises(RankOutOfRange):
        PcDeletionSpec((0, 5)).validate_for(5)


def test_k_grid_scales_bert_grid():
    assert k_grid(768).k_list == (0, 100, 200, 300, 400, 500, 600, 650, 700, 725, 750, 758, 763, 767)
    ks = k_grid(64).k_list
    assert ks[0] == 0 and ks[-1] == 63 and list(ks) == sorted(set(ks))
