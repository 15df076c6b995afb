"""Learning-rate caps near a zero-error solution, and a test of them.

For a scalar unstable system the cap computed from the fitted model is
checked directly: stepping at twice the cap diverges, while a tenth of
the cap settles back to the solution.
"""

import math

import numpy as np

from ltisysid import Fixed, LossSpec, SystemParams, Trajectory, Dataset, TimeKind, TrainConfig, bound_report, train

times = np.arange(1, 11, dtype=float)
truth = SystemParams([[0.5]], [[1.0]])
traj = Trajectory(0, times, np.exp(0.5 * times)[:, None], np.array([1.0]))
data = Dataset((traj,), TimeKind.CONTINUOUS, 1, 1, truth)

rep = bound_report(truth, [[1.0]], [times], epsilon=1.0)
print("squared-loss cap:", rep.theorem1_delta_max)
print("log-loss cap:    ", rep.theorem2_delta_max)

start = SystemParams([[0.5 + 1e-6]], [[1.0]])
for name, spec, cap in (("squared", LossSpec.squared(), rep.theorem1_delta_max),
                        ("log", LossSpec.time_weighted_log(1.0), rep.theorem2_delta_max)):
    for factor in (2.0, 0.1):
        cfg = TrainConfig(factor * cap, Fixed([[1.0]]), spec, momentum=0.0, clip_threshold=math.inf,
                          max_iters=500, train_C=False, tol=0.0)
        res = train(data, start, cfg)
        print(f"{name:>8} at {factor:>3} x cap: {res.status.kind:>9}, final loss {res.loss_curve[-1]:.2e}")
