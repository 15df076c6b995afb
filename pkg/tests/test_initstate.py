import hashlib

import numpy as np
import pytest

from ltisysid.errors import DataError
from ltisysid.initstate import (
    Estimated,
    EstimatorParams,
    Fixed,
    Learned,
    estimator_loss,
    learned_from_pinv,
    resolve_all,
    resolve_initial_state,
)
from ltisysid.loss import LossSpec, loss_gradient
from ltisysid.model import SystemParams, TimeKind, make_dataset
from ltisysid.train import TrainConfig, train


def test_fixed_returns_stored_state(reference_system):
    data = make_dataset(reference_system, 3, 4, TimeKind.DISCRETE, seed=0)
    mode = Fixed(np.tile([1.0, 0.0, 0.0], (3, 1)))
    for tr in data:
        np.testing.assert_array_equal(resolve_initial_state(mode, tr), [1, 0, 0])


def test_bias_only_estimator(reference_system):
    data = make_dataset(SystemParams(np.eye(2), np.eye(2)), 2, 3, TimeKind.DISCRETE, seed=0)
    mode = Estimated(EstimatorParams(np.zeros((2, 3)), np.array([3.0, 4.0])))
    np.testing.assert_array_equal(resolve_all(mode, data), [[3, 4], [3, 4]])


def test_estimator_selecting_first_sample():
    A = np.array([[0.9, 0.2], [-0.1, 1.1]])
    data = make_dataset(SystemParams(A, np.eye(2)), 3, 4, TimeKind.DISCRETE, seed=4)
    W = np.hstack([np.eye(2), np.zeros((2, 1))])
    mode = Estimated(EstimatorParams(W, np.zeros(2), p=1))
    for tr in data:
        # features are (x(1), t_1); W picks x(1) = A s0
        np.testing.assert_allclose(resolve_initial_state(mode, tr), A @ tr.true_initial_state)


def test_estimator_needs_enough_samples(reference_system):
    data = make_dataset(reference_system, 1, 1, TimeKind.DISCRETE, seed=0)
    mode = Estimated(EstimatorParams.zeros(3, 1, p=2))
    with pytest.raises(DataError):
        resolve_all(mode, data)


def test_estimator_loss_examples():
    phi = EstimatorParams(np.zeros((2, 2)), np.zeros(2))
    assert estimator_loss(phi, 0.0) == 0.0
    assert estimator_loss(phi, 3.0) == 0.0
    W = np.zeros((2, 2))
    W[0, 1] = 2.0
    assert estimator_loss(EstimatorParams(W, np.zeros(2)), 1.0) == 4.0


def test_penalty_does_not_touch_A_or_C(reference_system, rng):
    data = make_dataset(reference_system, 3, 5, TimeKind.DISCRETE, seed=1)
    phi = EstimatorParams(rng.standard_normal((3, 2)), rng.standard_normal(3))
    spec = LossSpec.squared()
    g0 = loss_gradient(data, reference_system, Estimated(phi, 0.0), spec)
    g1 = loss_gradient(data, reference_system, Estimated(phi, 5.0), spec)
    np.testing.assert_array_equal(g0.dA, g1.dA)
    np.testing.assert_array_equal(g0.dC, g1.dC)


def test_pinv_initialization(rng):
    C = rng.standard_normal((3, 3))
    data = make_dataset(SystemParams(0.5 * np.eye(3), C), 2, 3, TimeKind.DISCRETE, seed=2)
    mode = learned_from_pinv(C, data)
    for s, tr in zip(mode.states, data):
        np.testing.assert_allclose(C @ s, tr.samples[0], atol=1e-12)
    rank_deficient = learned_from_pinv(np.zeros((3, 3)), data)
    assert np.all(rank_deficient.states == 0)


def test_fixed_states_unchanged_by_training(reference_system):
    data = make_dataset(reference_system, 4, 6, TimeKind.DISCRETE, seed=3)
    states = data.true_states() + 0.1
    mode = Fixed(states)
    before = hashlib.sha256(mode.states.tobytes()).hexdigest()
    res = train(data, reference_system, TrainConfig(1e-3, mode, max_iters=20))
    assert hashlib.sha256(res.final_init.states.tobytes()).hexdigest() == before
    assert res.final_init is mode


def test_dA_block_identical_across_modes_at_zero_error():
    # m = n with C = I lets an estimator reproduce the true states exactly: s = A^{-1} x(1)
    rng = np.random.default_rng(8)
    A = np.eye(2) + rng.uniform(-0.3, 0.3, (2, 2))
    truth = SystemParams(A, np.eye(2))
    data = make_dataset(truth, 4, 5, TimeKind.DISCRETE, seed=9)
    S = data.true_states()
    W = np.hstack([np.linalg.inv(A), np.zeros((2, 1))])
    est = Estimated(EstimatorParams(W, np.zeros(2)))
    np.testing.assert_allclose(resolve_all(est, data), S, atol=1e-12)
    # a perturbed model gives a non-trivial dA; the data sum still sees identical states
    guess = SystemParams(A + 0.05, np.eye(2))
    spec = LossSpec.time_weighted_log(1.0)
    blocks = [loss_gradient(data, guess, mode, spec).dA for mode in (Fixed(S), Learned(S), est)]
    scale = np.max(np.abs(blocks[0]))
    assert scale > 0
    for b in blocks[1:]:
        assert np.max(np.abs(b - blocks[0])) <= 1e-12 * max(1.0, scale)
