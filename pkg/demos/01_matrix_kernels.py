"""Matrix exponential, its Frechet derivative, and the eigensolver.

Every gradient in the toolkit is built from these three kernels.  This
script checks each one against something simple enough to trust by eye.
"""

import numpy as np

from ltisysid import eigen, mat_exp, mat_exp_frechet

rng = np.random.default_rng(0)
A = rng.standard_normal((3, 3))

# e^{At} for a rotation generator is a rotation
J = np.array([[0.0, -1.0], [1.0, 0.0]])
print("exp(J pi/2) =\n", np.round(mat_exp(J, np.pi / 2), 12))

# the determinant of e^{A} equals e^{trace A}
print("det(e^A) - e^tr(A):", np.linalg.det(mat_exp(A)) - np.exp(np.trace(A)))

# the Frechet derivative is the directional derivative of A -> e^{At}
E = rng.standard_normal((3, 3))
h = 1e-6
fd = (mat_exp(A + h * E, 2.0) - mat_exp(A - h * E, 2.0)) / (2 * h)
print("Frechet vs central difference:", np.max(np.abs(mat_exp_frechet(A, E, 2.0) - fd)))

# eigenvalues come sorted by real part, then imaginary part, with left and right vectors
spec = eigen(A)
print("eigenvalues:", spec.eigenvalues)
print("sum vs trace:", spec.eigenvalues.sum().real, np.trace(A))
print("max |A v - lambda v|:", np.max(np.abs(A @ spec.right - spec.right * spec.eigenvalues)))
