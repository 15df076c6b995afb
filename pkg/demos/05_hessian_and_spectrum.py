"""Curvature at a zero-error solution and what convergence says about A.

The Gauss-Newton matrix is the exact Hessian (of half the loss) when every
residual vanishes.  Its conditioning predicts slow convergence along weak
modes.  Conversely, a run that converged with step ``delta`` caps how
unstable the learned system can be.
"""

import numpy as np

from ltisysid import (
    Learned, LossSpec, SystemParams, TimeKind, condition_ratio, corollary1_bound, gauss_newton_hessian,
    iteration_estimate, make_dataset,
)

A = np.array([[0.3, 0.2], [0.0, -0.4]])
truth = SystemParams(A, np.eye(2))
data = make_dataset(truth, K=4, length=6, kind=TimeKind.CONTINUOUS, seed=3)
S = data.true_states()

H = gauss_newton_hessian(data, truth, Learned(S), LossSpec.squared(), blocks=("A",))
w = np.linalg.eigvalsh(H)
print("Gauss-Newton spectrum on A:", np.round(w, 4))

eigs = np.linalg.eigvals(A)
ratio = condition_ratio(truth, S, data.sample_times, eigs.max(), eigs.min())
print("certified condition-number lower bound:", f"{ratio:.3g}")

delta = 0.9 * 2 / w.max()
print("iterations to shrink the weakest direction 1e6-fold:", iteration_estimate(delta, w.min(), 1e-6, 1.0))

cb = corollary1_bound(A, delta, S, data.sample_times)
print(f"spectral abscissa {cb.re_lambda:.3f} <= bound {cb.re_lambda_upper:.3f} ({cb.branch} branch)")
