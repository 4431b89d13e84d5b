import numpy as np
import pytest

from cmseq.analysis import assemble_precision
from cmseq.blockmat import (
    BlockMatrix,
    allowed_mask,
    factor_pd,
    is_pd,
    schur_window,
    schur_window_classify,
    structure_classify,
)
from cmseq.errors import DimensionMismatch, IndexOutOfRange, NotPositiveDefinite
from cmseq.models import Boundary, random_cml_model
from cmseq.transforms import induce_cml_from_markov


def _pattern_matrix(N, d, nonzero, rng):
    """Symmetric (not necessarily PD) test matrix with random blocks on ``nonzero`` (upper) positions."""
    n = (N + 1) * d
    J = np.zeros((n, n))
    for i, j in nonzero:
        b = rng.uniform(0.5, 1.0, size=(d, d))
        if i == j:
            b = b + b.T
        J[i * d:(i + 1) * d, j * d:(j + 1) * d] = b
        J[j * d:(j + 1) * d, i * d:(i + 1) * d] = b.T
    return BlockMatrix(J, d, symmetric=True)


def test_blocks_and_submatrix():
    A = BlockMatrix(np.arange(36.0).reshape(6, 6), 2)
    assert A.n_blocks == 3
    np.testing.assert_array_equal(A.block(1, 2), [[16, 17], [22, 23]])
    np.testing.assert_array_equal(A.submatrix([2], [0]), [[24, 25], [30, 31]])
    with pytest.raises(IndexOutOfRange):
        A.block(3, 0)


def test_rejects_bad_shapes_and_asymmetry():
    with pytest.raises(DimensionMismatch):
        BlockMatrix(np.eye(5), 2)
    with pytest.raises(DimensionMismatch):
        BlockMatrix(np.zeros((2, 3)), 1)
    with pytest.raises(DimensionMismatch):
        BlockMatrix([[1.0, 2.0], [0.0, 1.0]], 1, symmetric=True)


def test_json_round_trip():
    A = BlockMatrix([[2.0, 1.0], [1.0, 2.0]], 1, symmetric=True)
    B = BlockMatrix.from_json(A.to_json())
    np.testing.assert_array_equal(A.data, B.data)
    with pytest.raises(DimensionMismatch):
        BlockMatrix.from_json({"n_blocks": 3, "block_dim": 1, "rows": [[1.0]]})


def test_factor_identity_solve():
    f = factor_pd(np.eye(3))
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(f.solve(b), b)


def test_factor_two_by_two():
    f = factor_pd([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(f.solve([1.0, 0.0]), [2 / 3, -1 / 3], atol=1e-15)


def test_factor_indefinite_raises():
    with pytest.raises(NotPositiveDefinite):
        factor_pd([[1.0, 2.0], [2.0, 1.0]])
    assert not is_pd([[1.0, 2.0], [2.0, 1.0]])


def test_factor_inverse_random(rng):
    for n in (1, 5, 17, 40):
        a = rng.standard_normal((n, n))
        A = a @ a.T + n * np.eye(n)
        inv = factor_pd(A).inverse()
        assert np.max(np.abs(inv @ A - np.eye(n))) <= 1e-9 * np.linalg.cond(A)


def test_tridiagonal_all_true(rng):
    J = _pattern_matrix(3, 1, [(k, k) for k in range(4)] + [(k, k + 1) for k in range(3)], rng)
    r = structure_classify(J)
    assert r.is_tridiagonal and r.is_cyclic_tridiagonal and r.is_cml_form and r.is_cmf_form
    assert r.max_offband_residual == 0.0


def test_cml_pattern_not_cmf(rng):
    # Last column carries D_0 and D_2; D_1 is zero.  The (0, N) corner alone
    # would still be CM_F, so the interior D_2 is what breaks it.
    N = 4
    band = [(k, k) for k in range(N + 1)] + [(k, k + 1) for k in range(N)]
    J = _pattern_matrix(N, 2, band + [(0, N), (2, N)], rng)
    r = structure_classify(J)
    assert r.is_cml_form and not r.is_cmf_form and not r.is_cyclic_tridiagonal
    assert not r.is_tridiagonal


def test_corner_only_is_cyclic(rng):
    N = 4
    band = [(k, k) for k in range(N + 1)] + [(k, k + 1) for k in range(N)]
    r = structure_classify(_pattern_matrix(N, 1, band + [(0, N)], rng))
    assert r.is_cml_form and r.is_cmf_form and r.is_cyclic_tridiagonal and not r.is_tridiagonal


def test_relative_zero_threshold():
    J = np.eye(4) * 1e6
    J[0, 2] = J[2, 0] = 1e-3
    r = structure_classify(BlockMatrix(J, 1, symmetric=True), tol=1e-8)
    assert r.is_tridiagonal
    assert r.tolerance_used == pytest.approx(1e-8 * (1 + 1e6))


def test_masks_cover_pattern_algebra():
    for n in range(2, 8):
        cyc = allowed_mask(n, "cyclic")
        assert np.array_equal(cyc, allowed_mask(n, "cml") & allowed_mask(n, "cmf"))


def test_induced_rw3_precision_is_cyclic(rw3):
    m = induce_cml_from_markov(rw3).with_boundary(Boundary([[2.0]], [[-0.7]], [[0.3]]))
    assert structure_classify(assemble_precision(m)).is_cyclic_tridiagonal


def test_schur_window_tridiagonal_any_window(rng):
    N, d = 5, 2
    n = (N + 1) * d
    J = np.zeros((n, n))
    for k in range(N + 1):
        J[k * d:(k + 1) * d, k * d:(k + 1) * d] = 4 * np.eye(d)
    for k in range(N):
        b = rng.uniform(-0.5, 0.5, (d, d))
        J[k * d:(k + 1) * d, (k + 1) * d:(k + 2) * d] = b
        J[(k + 1) * d:(k + 2) * d, k * d:(k + 1) * d] = b.T
    J = BlockMatrix(J, d, symmetric=True)
    for k in range(1, N):
        for c in "LF":
            assert schur_window_classify(J, 0, k, c)
            assert schur_window_classify(J, k, N, c)


def test_schur_window_matches_marginal_precision(rng):
    m = random_cml_model(rng, 6, 2)
    J = assemble_precision(m)
    C = np.linalg.inv(J.data)
    for k2 in range(1, 6):
        keep = J.indices(range(k2 + 1))
        np.testing.assert_allclose(schur_window(J, 0, k2).data,
                                   np.linalg.inv(C[np.ix_(keep, keep)]), rtol=1e-8, atol=1e-8)


def test_generic_cml_window_fails(rng):
    m = random_cml_model(rng, 6, 1)
    assert not schur_window_classify(assemble_precision(m), 1, 6, "F")


def test_schur_window_index_errors(rng):
    J = assemble_precision(random_cml_model(rng, 4, 1))
    for k1, k2 in ((0, 0), (0, 4 + 1), (1, 3), (4, 4)):
        with pytest.raises(IndexOutOfRange):
            schur_window(J, k1, k2)
    with pytest.raises(ValueError):
        schur_window_classify(J, 0, 2, "X")


def test_window_not_pd_raises():
    with pytest.raises(NotPositiveDefinite):
        schur_window_classify(BlockMatrix(-np.eye(4), 1, symmetric=True), 0, 2, "L")


def test_window_invariant_under_block_congruence(rng):
    for _ in range(10):
        m = random_cml_model(rng, 5, 2)
        J = assemble_precision(m)
        T = np.zeros_like(J.data)
        for k in range(6):
            T[2 * k:2 * k + 2, 2 * k:2 * k + 2] = rng.standard_normal((2, 2)) + 3 * np.eye(2)
        J2 = BlockMatrix(T.T @ J.data @ T, 2, symmetric=True)
        for k in range(1, 5):
            assert schur_window_classify(J, 0, k, "L") == schur_window_classify(J2, 0, k, "L")
            assert schur_window_classify(J, k, 5, "F") == schur_window_classify(J2, k, 5, "F")
