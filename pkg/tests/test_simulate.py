import numpy as np
import pytest
from oracles import rw_covariance

from cmseq.analysis import model_covariance
from cmseq.blockmat import BlockMatrix
from cmseq.models import MarkovModel, check_reciprocal_condition, random_markov_model
from cmseq.simulate import (
    CHUNK,
    TrajectoryBatch,
    destination_directed_generate,
    empirical_covariance,
    monte_carlo_check,
    monte_carlo_z,
    sample_trajectories,
)
from cmseq.transforms import induce_cml_from_markov, markov_matching_boundary


def test_white_sequence_samples():
    eps = 0.01
    m = MarkovModel(3, 2, {k: np.zeros((2, 2)) for k in (1, 2, 3)}, {k: eps * np.eye(2) for k in range(4)})
    b = sample_trajectories(m, 20000, seed=3)
    assert np.max(np.abs(b.data.mean(axis=0))) < 5 * np.sqrt(eps / 20000)
    np.testing.assert_allclose(empirical_covariance(b).data, eps * np.eye(8), atol=5e-4)


def test_rw3_variance_band(rw3):
    b = sample_trajectories(rw3, 100_000, seed=11)
    var3 = empirical_covariance(b).block(3, 3).item()
    assert abs(var3 - 4.0) <= 3 * np.sqrt(2 * 16 / 1e5)


def test_rw3_cml_law(rw3):
    m = induce_cml_from_markov(rw3).with_boundary(markov_matching_boundary(rw3))
    emp = empirical_covariance(sample_trajectories(m, 100_000, seed=5))
    C = BlockMatrix(rw_covariance(3), 1, symmetric=True)
    assert np.max(monte_carlo_z(emp, C, 100_000)) <= 4.0


def test_determinism_and_chunk_independence(rng):
    m = random_markov_model(rng, 4, 2)
    a = sample_trajectories(m, CHUNK + 10, seed=9)
    b = sample_trajectories(m, CHUNK + 10, seed=9, workers=3)
    np.testing.assert_array_equal(a.data, b.data)
    assert a.model_digest == b.model_digest
    prefix = sample_trajectories(m, 5, seed=9)
    np.testing.assert_array_equal(prefix.data, a.data[:5])
    assert not np.array_equal(sample_trajectories(m, 5, seed=10).data, prefix.data)


def test_identical_rows_zero_covariance():
    data = np.ones((4, 3, 2))
    b = TrajectoryBatch(2, 2, 4, data, 0, "x")
    np.testing.assert_array_equal(empirical_covariance(b).data, np.zeros((6, 6)))


def test_two_point_covariance():
    v = np.array([1.0, -2.0, 0.5])
    data = np.stack([v, -v]).reshape(2, 3, 1)
    cov = empirical_covariance(TrajectoryBatch(2, 1, 2, data, 0, "x")).data
    # mean is zero; sum of outer products over n - 1 = 1
    np.testing.assert_allclose(cov, 2 * np.outer(v, v))


def test_csv_layout(rw3):
    text = sample_trajectories(rw3, 2, seed=0).to_csv()
    lines = text.splitlines()
    assert lines[0] == "sample,k,x0" and len(lines) == 1 + 2 * 4
    assert lines[1].startswith("0,0,") and lines[-1].startswith("1,3,")


def test_destination_matching_law(rw3):
    joint = {"cov_x0": [[1.0]], "cov_xN": [[4.0]], "cross": [[1.0]]}
    model, batch = destination_directed_generate(rw3, joint, 10, seed=1)
    np.testing.assert_allclose(model_covariance(model).data, rw_covariance(3), atol=1e-12)
    assert batch.n_samples == 10


def test_destination_independent_endpoints(rw3):
    joint = {"cov_x0": [[1.0]], "cov_xN": [[4.0]], "cross": [[0.0]]}
    _, batch = destination_directed_generate(rw3, joint, 50_000, seed=2)
    emp = empirical_covariance(batch)
    assert abs(emp.block(0, 3).item()) < 4 * np.sqrt(4.0 / 50_000)


def test_destination_pinned(rw3):
    joint = {"cov_x0": [[1.0]], "cov_xN": [[0.01]], "cross": [[0.0]]}
    model, batch = destination_directed_generate(rw3, joint, 100_000, seed=4)
    var3 = empirical_covariance(batch).block(3, 3).item()
    assert abs(var3 - 0.01) <= 4 * np.sqrt(2 * 0.01 ** 2 / 1e5)
    assert check_reciprocal_condition(model).residuals == check_reciprocal_condition(
        induce_cml_from_markov(rw3)).residuals


def test_destination_interior_ignores_endpoints(rng):
    motion = random_markov_model(rng, 5, 2)
    ref = induce_cml_from_markov(motion)
    for _ in range(5):
        a = rng.standard_normal((4, 4))
        J = a @ a.T + 0.5 * np.eye(4)
        joint = {"cov_x0": J[:2, :2], "cov_xN": J[2:, 2:], "cross": J[:2, 2:]}
        model, _ = destination_directed_generate(motion, joint, 2, seed=0)
        for k in range(1, 5):
            np.testing.assert_array_equal(model.A(k), ref.A(k))
            np.testing.assert_array_equal(model.coupling_at(k), ref.coupling_at(k))
            np.testing.assert_array_equal(model.G(k), ref.G(k))


def test_monte_carlo_check_report(rw3):
    report = monte_carlo_check(rw3, 20_000, seed=7)
    assert report.passed and report.max_z <= 4.0
    assert report.to_json()["pass"] is True


def test_rejects_empty_batch(rw3):
    with pytest.raises(ValueError):
        sample_trajectories(rw3, 0, seed=0)
