import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simbench.errors import NonFinite, ZeroMatrix
from simbench.perturb import random_orthogonal
from simbench.repcore import CenteringAxis, RawRepresentation, normalize, nuclear_norm, svd


def test_constant_rows_center_to_zero():
    with pytest.raises(ZeroMatrix):
        normalize(np.ones((2, 2)), CenteringAxis.PER_NEURON)


def test_already_centered_input_only_scales():
    out = normalize(np.array([[1.0, -1.0], [0.0, 0.0]]))
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(out.data, [[s, -s], [0, 0]], atol=1e-15)


def test_random_normalize_rows_centered_unit_norm(rng):
    raw = rng.standard_normal((8, 50)) * 3 + 5
    out = normalize(raw)
    n = raw.shape[1]
    assert np.all(np.abs(out.data.sum(axis=1)) <= 1e-9 * n)
    assert abs(np.linalg.norm(out.data) - 1.0) <= 1e-12


def test_per_example_and_none_axes(rng):
    raw = rng.standard_normal((4, 9)) + 2
    ex = normalize(raw, "per-example").data
    assert np.allclose(ex.sum(axis=0), 0, atol=1e-12)
    plain = normalize(raw, CenteringAxis.NONE).data
    np.testing.assert_allclose(plain, raw / np.linalg.norm(raw))


def test_normalize_rejects_nonfinite():
    with pytest.raises(NonFinite):
        normalize(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_provenance_and_widening():
    raw = RawRepresentation(np.arange(6, dtype=np.float32).reshape(2, 3), model_id="m", layer_id=3)
    assert raw.data.dtype == np.float64
    out = normalize(raw)
    assert out.source.model_id == "m" and out.source.layer_id == 3
    assert out.source.axis is CenteringAxis.PER_NEURON


def test_raw_representation_is_immutable():
    raw = RawRepresentation(np.eye(2))
    with pytest.raises(ValueError):
        raw.data[0, 0] = 5.0


@given(arrays(np.float64, (5, 12), elements=st.floats(-100, 100)))
@settings(max_examples=60, deadline=None)
def test_normalize_idempotent(m):
    try:
        once = normalize(m).data
    except ZeroMatrix:
        return
    if np.linalg.norm(m - m.mean(axis=1, keepdims=True)) < 1e-6:
        return
    twice = normalize(once).data
    assert np.max(np.abs(twice - once)) <= 1e-12


def test_svd_diagonal():
    f = svd(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_allclose(f.sigma, [3, 2, 1])
    np.testing.assert_allclose(np.abs(f.u), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(np.abs(f.v), np.eye(3), atol=1e-15)
    assert f.rank == 3


def test_svd_zero_matrix_has_rank_zero():
    f = svd(np.zeros((2, 3)))
    np.testing.assert_array_equal(f.sigma, [0, 0])
    assert f.rank == 0
    assert f.numerically_zero.all()


def test_svd_reconstruction_and_orthonormality(rng):
    m = rng.standard_normal((5, 7))
    f = svd(m)
    assert np.linalg.norm(f.u @ np.diag(f.sigma) @ f.v.T - m) <= 1e-8 * np.linalg.norm(m)
    np.testing.assert_allclose(f.u.T @ f.u, np.eye(5), atol=1e-8)
    np.testing.assert_allclose(f.v.T @ f.v, np.eye(5), atol=1e-8)
    assert np.all(np.diff(f.sigma) <= 0)


def test_svd_flags_numerically_zero_values():
    f = svd(np.diag([1.0, 1e-12, 0.0]))
    assert f.rank == 1
    np.testing.assert_array_equal(f.numerically_zero, [False, True, True])


def test_svd_sign_convention_is_deterministic(rng):
    m = rng.standard_normal((4, 6))
    f1, f2 = svd(m), svd(-(-m))
    np.testing.assert_array_equal(f1.u, f2.u)
    for j in range(4):
        col = f1.u[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_svd_rejects_nonfinite():
    with pytest.raises(NonFinite):
        svd(np.array([[np.inf, 0.0]]))


@pytest.mark.parametrize(
    "m, expected",
    [(np.eye(3), 3.0), (np.diag([2.0, 1.0]), 3.0), (np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)],
)
def test_nuclear_norm_examples(m, expected):
    assert nuclear_norm(m) == pytest.approx(expected, abs=1e-12)


def test_nuclear_norm_transpose_invariant(rng):
    for _ in range(20):
        m = rng.standard_normal((rng.integers(1, 8), rng.integers(1, 8)))
        assert abs(nuclear_norm(m) - nuclear_norm(m.T)) <= 1e-10


def test_singular_values_invariant_under_left_rotation(rng):
    m = rng.standard_normal((6, 10))
    q = random_orthogonal(6, seed=4)
    np.testing.assert_allclose(svd(q @ m).sigma, svd(m).sigma, atol=1e-8)
