import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import scalar_dataset
from ltisysid.initstate import Fixed, Learned
from ltisysid.loss import GradientBundle, LossSpec
from ltisysid.model import SystemParams, TimeKind, make_dataset
from ltisysid.numkernel import eigen
from ltisysid.train import PerTrajectory, TrainConfig, clip_gradient, train


def test_ground_truth_converges_immediately(reference_system):
    data = make_dataset(reference_system, 5, 10, TimeKind.CONTINUOUS, seed=2)
    res = train(data, reference_system, TrainConfig(1e-3, Fixed(data.true_states())))
    assert res.status.converged and res.status.iteration == 0
    assert res.iterations == 1 and res.loss_curve[0] <= 1e-12
    assert res.grad_norms[0] <= 1e-10


def _scalar_descent_oracle(a, x, times, delta, iters):
    # independent 1-D descent on half the squared error in a (c = s = 1 fixed)
    for _ in range(iters):
        pred = a ** times
        grad = np.sum(-(x - pred) * times * a ** (times - 1))
        a = a - delta * grad
    return a


def test_scalar_discrete_recovers_half():
    times = np.arange(1, 6)
    data, _ = scalar_dataset(0.5, 1.0, 1.0, times, kind=TimeKind.DISCRETE)
    start = SystemParams([[0.3]], [[1.0]])
    cfg = TrainConfig(
        0.01, Fixed([[1.0]]), LossSpec.squared(), momentum=0.0, clip_threshold=math.inf,
        max_iters=10000, train_C=False,
    )
    res = train(data, start, cfg)
    a_hat = res.final_params.A[0, 0]
    assert abs(a_hat - 0.5) <= 1e-6
    steps = res.iterations - 1 if res.status.converged else res.iterations
    assert a_hat == pytest.approx(_scalar_descent_oracle(0.3, data.trajectories[0].samples[:, 0], times, 0.01, steps), abs=1e-12)


def test_monotone_descent_below_curvature():
    times = np.arange(1, 6)
    data, _ = scalar_dataset(0.5, 1.0, 1.0, times, kind=TimeKind.DISCRETE)
    cfg = TrainConfig(0.01, Fixed([[1.0]]), LossSpec.squared(), clip_threshold=math.inf, max_iters=200, train_C=False)
    res = train(data, SystemParams([[0.45]], [[1.0]]), cfg)
    assert np.all(np.diff(res.loss_curve) <= 0)


def test_stationary_point_is_fixed():
    # c = s = 0 zeroes every gradient block while the loss stays positive
    data, _ = scalar_dataset(0.2, 1.0, 1.0, [1.0, 2.0])
    start = SystemParams([[0.7]], [[0.0]])
    res = train(data, start, TrainConfig(0.1, Learned([[0.0]]), max_iters=5))
    assert res.iterations == 5 and res.loss_curve[-1] > 0
    assert res.final_params.A[0, 0] == 0.7 and res.final_params.C[0, 0] == 0.0
    assert res.final_init.states[0, 0] == 0.0


def test_deterministic(reference_system):
    data = make_dataset(reference_system, 4, 10, TimeKind.DISCRETE, seed=1)
    start = SystemParams(np.eye(3), np.ones((1, 3)))
    cfg = TrainConfig(1e-3, Learned(np.ones((4, 3))), LossSpec.time_weighted_log(1.0), momentum=0.9, max_iters=50)
    r1, r2 = train(data, start, cfg), train(data, start, cfg)
    assert np.array_equal(r1.loss_curve, r2.loss_curve)
    assert np.array_equal(r1.eigen_trace, r2.eigen_trace)
    assert np.array_equal(r1.final_params.A, r2.final_params.A)


def test_eigen_trace_starts_at_initial_spectrum(reference_system):
    data = make_dataset(reference_system, 2, 5, TimeKind.DISCRETE, seed=1)
    start = SystemParams(np.diag([0.5, 1.5, -0.2]), np.ones((1, 3)))
    res = train(data, start, TrainConfig(1e-3, Learned(np.ones((2, 3))), max_iters=3))
    np.testing.assert_array_equal(res.eigen_trace[0], eigen(start.A).eigenvalues)
    assert res.eigen_trace.shape == (res.iterations, 3) == (len(res.loss_curve), 3)


def test_divergence_is_a_status(reference_system):
    data = make_dataset(reference_system, 3, 20, TimeKind.DISCRETE, seed=1)
    start = SystemParams(np.eye(3), np.ones((1, 3)))
    cfg = TrainConfig(10.0, Learned(np.ones((3, 3))), clip_threshold=math.inf, max_iters=100)
    res = train(data, start, cfg)
    assert res.status.diverged
    assert len(res.loss_curve) == len(res.eigen_trace) == res.status.iteration + 1


def test_per_trajectory_epochs(reference_system):
    data = make_dataset(reference_system, 4, 5, TimeKind.DISCRETE, seed=1)
    start = SystemParams(np.eye(3), np.ones((1, 3)))
    mode = Learned(np.ones((4, 3)))
    cfg = TrainConfig(1e-3, mode, LossSpec.time_weighted_log(1.0), max_iters=6, batch=PerTrajectory(3))
    r1, r2 = train(data, start, cfg), train(data, start, cfg)
    assert r1.iterations == 6 and np.array_equal(r1.loss_curve, r2.loss_curve)
    assert r1.loss_curve[-1] < r1.loss_curve[0]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(0.0, Fixed([[1.0]]))
    with pytest.raises(ValueError):
        TrainConfig(0.1, Fixed([[1.0]]), momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(0.1, Fixed([[1.0]]), clip_threshold=0.0)


# -- clipping ------------------------------------------------------------------


def _bundle(vec):
    return GradientBundle(vec[:4].reshape(2, 2), vec[4:6].reshape(1, 2), dS=vec[6:].reshape(1, 2))


def test_clip_small_norm_unchanged():
    g = _bundle(np.array([0.5, 0, 0, 0, 0, 0, 0, 0]))
    assert clip_gradient(g, 1.0) is g


def test_clip_scales_to_threshold():
    g = _bundle(np.array([4.0, 0, 0, 0, 0, 0, 0, 0]))
    out = clip_gradient(g, 1.0)
    assert out.norm() == pytest.approx(1.0) and out.dA[0, 0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1e6, 1e6)), st.floats(1e-3, 1e3))
def test_clip_bounds_norm_and_keeps_direction(vec, threshold):
    g = _bundle(vec)
    out = clip_gradient(g, threshold)
    assert out.norm() <= threshold + 1e-12 * max(1.0, threshold)
    if g.norm() > 0:
        cos = out.flat() @ g.flat() / (out.norm() * g.norm())
        assert cos == pytest.approx(1.0, abs=1e-12)
