"""Datasets, the two losses, and their gradients.

An unstable system makes the squared error explode with the time horizon.
The time-weighted log loss compresses the outputs with a signed logarithm
and so keeps every sample's contribution on a comparable scale.
"""

import numpy as np

from ltisysid import Learned, LossSpec, SystemParams, TimeKind, generate_system, loss_gradient, loss_value, make_dataset
from ltisysid.loss import fd_gradient_oracle

truth = generate_system(3, 1, seed=4)
print("true eigenvalues:", np.round(np.linalg.eigvals(truth.A), 4))

data = make_dataset(truth, K=5, length=30, kind=TimeKind.DISCRETE, seed=1004)
print(f"{data.K} trajectories, largest |output| = {max(np.max(np.abs(t.samples)) for t in data):.3g}")

guess = SystemParams(truth.A + 0.01, truth.C)
states = Learned(data.true_states())
for spec in (LossSpec.squared(), LossSpec.time_weighted_log(1.0)):
    print(f"{spec.kind.value:>20}: loss at truth {loss_value(data, truth, states, spec):.2e}, "
          f"loss at perturbed guess {loss_value(data, guess, states, spec):.3e}")

# analytic gradients agree with central differences
small = make_dataset(truth, K=2, length=6, kind=TimeKind.DISCRETE, seed=7)
init = Learned(small.true_states() + 0.1)
spec = LossSpec.time_weighted_log(1.0)
g = loss_gradient(small, guess, init, spec).flat()
fd = fd_gradient_oracle(small, guess, init, spec).flat()
print("max relative gradient error:", np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)))
