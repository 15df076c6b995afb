import numpy as np
import pytest

from conftest import taylor_expm
from ltisysid.errors import DataError, DimensionError
from ltisysid.model import (
    SystemParams,
    TimeKind,
    Trajectory,
    generate_system,
    make_dataset,
    read_dataset,
    simulate,
    write_dataset,
)


def test_generate_is_deterministic():
    a, b = generate_system(3, 2, 7), generate_system(3, 2, 7)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.C, b.C)
    assert not np.array_equal(a.A, generate_system(3, 2, 8).A)


def test_generate_perturbation_range():
    for seed in range(200):
        A = generate_system(3, 1, seed).A
        assert np.all(np.abs(A - np.eye(3)) <= 0.5)


def test_most_generated_systems_are_unstable():
    radii = np.array([np.max(np.abs(np.roots(np.poly(generate_system(3, 1, s).A)))) for s in range(1000)])
    assert np.mean(radii > 1) > 0.5


def test_simulate_frozen_dynamics():
    p = SystemParams(np.zeros((2, 2)), np.eye(2))
    tr = simulate(p, np.array([1.0, 2.0]), [1.0, 2.0], TimeKind.CONTINUOUS)
    np.testing.assert_array_equal(tr.samples, [[1, 2], [1, 2]])


def test_simulate_discrete_powers():
    tr = simulate(SystemParams([[2.0]], [[1.0]]), np.array([1.0]), [1, 2, 3], TimeKind.DISCRETE)
    np.testing.assert_array_equal(tr.samples[:, 0], [2, 4, 8])


def test_simulate_continuous_matches_kernel_oracle(rng):
    A = rng.uniform(-1, 1, (3, 3))
    C = rng.standard_normal((2, 3))
    s = rng.standard_normal(3)
    tr = simulate(SystemParams(A, C), s, [1.5], TimeKind.CONTINUOUS)
    np.testing.assert_allclose(tr.samples[0], C @ taylor_expm(1.5 * A) @ s, rtol=1e-10)


def test_continuous_one_step_consistency(rng):
    p = SystemParams(rng.uniform(-1, 1, (3, 3)), rng.standard_normal((1, 3)))
    s = rng.standard_normal(3)
    t1, t2 = 0.8, 1.3
    direct = simulate(p, s, [t1 + t2], TimeKind.CONTINUOUS).samples[0]
    z1 = taylor_expm(t1 * p.A) @ s
    restarted = simulate(p, z1, [t2], TimeKind.CONTINUOUS).samples[0]
    np.testing.assert_allclose(direct, restarted, rtol=1e-8, atol=1e-12)


def test_discrete_step_consistency(rng):
    A = rng.uniform(-1, 1, (3, 3))
    p = SystemParams(A, np.eye(3))
    s = rng.standard_normal(3)
    tr = simulate(p, s, np.arange(1, 6), TimeKind.DISCRETE)
    z = s
    for t in range(5):
        z = A @ z
        np.testing.assert_array_equal(tr.samples[t], z)


def test_identity_observation_gives_state():
    A = np.array([[0.9, 0.1], [0.0, 0.5]])
    data = make_dataset(SystemParams(A, np.eye(2)), 2, 4, TimeKind.DISCRETE, seed=3)
    for tr in data:
        z = tr.true_initial_state
        for t, x in zip(tr.times, tr.samples):
            np.testing.assert_allclose(x, np.linalg.matrix_power(A, int(t)) @ z)


def test_make_dataset_shapes(reference_system):
    data = make_dataset(reference_system, 50, 50, TimeKind.DISCRETE, seed=1)
    assert data.K == 50 and all(len(tr) == 50 for tr in data)
    assert np.array_equal(data.trajectories[0].times, np.arange(1, 51))
    one = make_dataset(reference_system, 1, 1, TimeKind.DISCRETE, seed=1)
    assert one.sample_count == 1 and one.trajectories[0].times[0] == 1


def test_zero_init_scale_gives_zero_samples(reference_system):
    data = make_dataset(reference_system, 3, 5, TimeKind.CONTINUOUS, init_scale=0.0, seed=2)
    assert all(np.all(tr.samples == 0) for tr in data)


def test_continuous_times_positive_sorted(reference_system):
    data = make_dataset(reference_system, 5, 20, TimeKind.CONTINUOUS, seed=2)
    for tr in data:
        assert np.all(tr.times > 0) and np.all(np.diff(tr.times) > 0) and tr.times[-1] <= 20


@pytest.mark.parametrize("kind", list(TimeKind))
def test_csv_round_trip_is_exact(tmp_path, reference_system, kind):
    data = make_dataset(reference_system, 4, 6, kind, seed=9)
    csv_path, meta_path = write_dataset(data, tmp_path / "d.csv")
    back = read_dataset(csv_path, meta_path)
    assert back.time_kind is kind and back.seed == 9
    np.testing.assert_array_equal(back.true_params.A, reference_system.A)
    np.testing.assert_array_equal(back.true_states(), data.true_states())
    for a, b in zip(data, back):
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.samples, b.samples)
    write_dataset(back, tmp_path / "e.csv")
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "e.csv").read_bytes()


def test_trajectory_validation():
    with pytest.raises(DataError):
        Trajectory(0, [0.0, 1.0], [1.0, 2.0])
    with pytest.raises(DataError):
        Trajectory(0, [2.0, 1.0], [1.0, 2.0])
    with pytest.raises(DataError):
        Trajectory(0, [1.0], [1.0, 2.0])


def test_system_params_dimension_check():
    with pytest.raises(DimensionError):
        SystemParams(np.eye(3), np.ones((1, 2)))


def test_discrete_dataset_needs_integer_times(reference_system):
    data = make_dataset(reference_system, 1, 3, TimeKind.CONTINUOUS, seed=0)
    from ltisysid.model import Dataset

    with pytest.raises(DataError):
        Dataset(data.trajectories, TimeKind.DISCRETE, 3, 1)
