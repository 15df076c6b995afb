"""Dense matrix numerics used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  The routines
here validate their inputs and delegate the heavy lifting to LAPACK through
:mod:`scipy.linalg`:

* :func:`mat_exp` -- ``e^{At}`` by Pade scaling-and-squaring.
* :func:`mat_exp_frechet` -- directional derivative of ``A -> e^{At}``,
  read off the upper-right block of the exponential of
  ``[[A t, E t], [0, A t]]``.
* :func:`eigen` -- complex eigenpairs with matched left/right eigenvectors,
  sorted by descending real part.
* :func:`symmetric_extremal_eig` -- smallest and largest eigenvalue of a
  symmetric matrix.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "ComplexSpectrum",
    "as_matrix",
    "eigen",
    "mat_exp",
    "mat_exp_frechet",
    "spectrum_tol",
    "symmetric_extremal_eig",
]


def as_matrix(A, name="A", square=False):
    """Return ``A`` as a finite 2-D float64 array.

    Raises
    ------
    DimensionError
        If ``A`` is not 2-D, or not square when ``square`` is set.
    NumericError
        If any entry is NaN or infinite.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericError(f"{name} has non-finite entries")
    return A


def mat_exp(A, t=1.0):
    """Matrix exponential ``e^{At}``.

    Parameters
    ----------
    A : (n, n) array_like
    t : float
        Time (any finite real).

    Returns
    -------
    (n, n) ndarray
    """
    A = as_matrix(A, square=True)
    t = float(t)
    if not np.isfinite(t):
        raise NumericError("t must be finite")
    return scipy.linalg.expm(A * t)


def mat_exp_frechet(A, E, t=1.0):
    """Derivative ``d/dh e^{(A + hE)t}`` at ``h = 0``.

    Uses the block identity::

        expm([[A t, E t],      [[e^{At}, L],
              [0,   A t]])  =   [0,      e^{At}]]

    where ``L`` is the requested derivative.  The result is linear in ``E``.
    """
    A = as_matrix(A, square=True)
    E = as_matrix(E, name="E")
    if E.shape != A.shape:
        raise DimensionError(f"E must have shape {A.shape}, got {E.shape}")
    t = float(t)
    if not np.isfinite(t):
        raise NumericError("t must be finite")
    n = A.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = A * t
    big[n:, n:] = A * t
    big[:n, n:] = E * t
    return scipy.linalg.expm(big)[:n, n:]


@dataclass(frozen=True)
class ComplexSpectrum:
    """Eigenvalues of a real square matrix with matched eigenvectors.

    ``right[:, i]`` and ``left[:, i]`` are unit-norm vectors with
    ``A @ right[:, i] = eigenvalues[i] * right[:, i]`` and
    ``left[:, i].conj() @ A = eigenvalues[i] * left[:, i].conj()``.
    Eigenvalues are sorted by descending real part, ties broken by
    descending imaginary part, so index 0 is the rightmost eigenvalue.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    max_residual: float = 0.0

    def __len__(self):
        return len(self.eigenvalues)


def spectrum_tol(A):
    """Residual tolerance used for eigenpair checks: ``1e-9 max(1, |A|_F)``."""
    return 1e-9 * max(1.0, float(np.linalg.norm(A)))


def eigen(A):
    """Full eigendecomposition of a real square matrix.

    Returns
    -------
    ComplexSpectrum

    Raises
    ------
    NumericError
        If LAPACK fails to converge or an eigenpair residual exceeds
        :func:`spectrum_tol`.  The error carries the residual.

    Notes
    -----
    For defective or nearly defective matrices the eigenvectors are
    ill-conditioned; the residual check still passes in that case because
    the returned vectors do satisfy the eigen equations approximately.
    """
    A = as_matrix(A, square=True)
    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc
    spec = _sorted_spectrum(A, w, vl, vr)
    if spec.max_residual > spectrum_tol(A):
        # balancing can wreck matrices with entries of wildly different scale
        spec = _sorted_spectrum(A, *_unbalanced_eig(A))
    if not np.isfinite(spec.max_residual) or spec.max_residual > spectrum_tol(A):
        raise NumericError(f"eigenpair residual {spec.max_residual:.3g} exceeds tolerance", spec.max_residual)
    return spec


def _sorted_spectrum(A, w, vl, vr):
    order = np.lexsort((-w.imag, -w.real))
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)
    vl = vl / np.linalg.norm(vl, axis=0)
    res_r = np.linalg.norm(A @ vr - vr * w, axis=0)
    res_l = np.linalg.norm(vl.conj().T @ A - w[:, None] * vl.conj().T, axis=1)
    residual = float(max(res_r.max(), res_l.max()))
    return ComplexSpectrum(w, vr, vl, residual if np.isfinite(residual) else math.inf)


def _unbalanced_eig(A):
    """Eigenvalues from the complex Schur form, vectors from singular vectors of A - lambda I."""
    try:
        T, _ = scipy.linalg.schur(A.astype(complex), output="complex")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Schur decomposition did not converge: {exc}") from exc
    w = np.diag(T).copy()
    n = len(w)
    vl = np.empty((n, n), dtype=complex)
    vr = np.empty((n, n), dtype=complex)
    for i, lam in enumerate(w):
        U, _, Vh = np.linalg.svd(A - lam * np.eye(n))
        vr[:, i] = Vh[-1].conj()
        vl[:, i] = U[:, -1]
    return w, vl, vr


def symmetric_extremal_eig(S):
    """Smallest and largest eigenvalue of a symmetric matrix.

    Raises
    ------
    ContractError
        If ``S`` is asymmetric beyond ``1e-12`` relative to its norm.
    """
    S = as_matrix(S, name="S", square=True)
    scale = max(float(np.abs(S).max()), np.finfo(float).tiny)
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise ContractError("matrix is not symmetric")
    w = scipy.linalg.eigvalsh(0.5 * (S + S.T))
    return float(w[0]), float(w[-1])
