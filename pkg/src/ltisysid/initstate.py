"""Initial-state regimes: fixed, learned per trajectory, or estimated.

An estimated initial state comes from an affine map over the ``p`` earliest
samples of a trajectory and their time stamps::

    s_k = W @ feat_k + b,   feat_k = [x_k(t_1), ..., x_k(t_p), t_1, ..., t_p]

The estimator carries its own quadratic penalty ``mu (|W|_F^2 + |b|^2)``,
which never depends on ``A`` or ``C``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, DimensionError

__all__ = [
    "Estimated",
    "EstimatorParams",
    "Fixed",
    "Learned",
    "estimator_features",
    "estimator_loss",
    "learned_from_pinv",
    "resolve_all",
    "resolve_initial_state",
]


def _states(states, name):
    states = np.array(states, dtype=float)
    if states.ndim != 2:
        raise DimensionError(f"{name} states must be a (K, n) array")
    if not np.all(np.isfinite(states)):
        raise ContractError(f"{name} states must be finite")
    states.setflags(write=False)
    return states


@dataclass(frozen=True)
class Fixed:
    """Known initial states; never updated by training."""

    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _states(self.states, "fixed"))


@dataclass(frozen=True)
class Learned:
    """Initial states optimized jointly with ``A`` and ``C``."""

    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _states(self.states, "learned"))


@dataclass(frozen=True)
class EstimatorParams:
    """Weights of the affine initial-state estimator.

    ``W`` has shape ``(n, m*p + p)``; ``b`` has shape ``(n,)``.
    """

    W: np.ndarray
    b: np.ndarray
    p: int = 1

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float)
        if self.p < 1:
            raise ContractError("feature window p must be at least 1")
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimensionError("W must be (n, f) and b must be (n,)")
        if (W.shape[1] - self.p) % self.p:
            raise DimensionError(f"W has {W.shape[1]} columns, not a multiple m*p + p for p={self.p}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ContractError("estimator parameters must be finite")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @classmethod
    def zeros(cls, n, m, p=1):
        return cls(np.zeros((n, m * p + p)), np.zeros(n), p)


@dataclass(frozen=True)
class Estimated:
    """Initial states produced by an estimator with penalty weight ``reg_weight``."""

    phi: EstimatorParams
    reg_weight: float = 0.0

    def __post_init__(self):
        if self.reg_weight < 0:
            raise ContractError("reg_weight must be non-negative")


def estimator_features(traj, p):
    """Feature vector of the ``p`` earliest samples followed by their times."""
    if len(traj) < p:
        raise DataError(f"trajectory {traj.index} has {len(traj)} samples, estimator needs {p}")
    return np.concatenate([traj.samples[:p].ravel(), np.asarray(traj.times[:p], dtype=float)])


def resolve_initial_state(mode, traj):
    """Initial state of ``traj`` under ``mode``."""
    if isinstance(mode, (Fixed, Learned)):
        return mode.states[traj.index].copy()
    if isinstance(mode, Estimated):
        phi = mode.phi
        feat = estimator_features(traj, phi.p)
        if feat.shape[0] != phi.W.shape[1]:
            raise DimensionError(f"estimator expects {phi.W.shape[1]} features, got {feat.shape[0]}")
        return phi.W @ feat + phi.b
    raise TypeError(f"unknown initial-state mode {type(mode).__name__}")


def resolve_all(mode, dataset):
    """(K, n) array of initial states for every trajectory in ``dataset``."""
    if isinstance(mode, (Fixed, Learned)):
        if mode.states.shape != (dataset.K, dataset.n):
            raise DimensionError(
                f"mode holds states of shape {mode.states.shape}, dataset needs {(dataset.K, dataset.n)}"
            )
        return np.array(mode.states)
    S = np.stack([resolve_initial_state(mode, tr) for tr in dataset.trajectories])
    if S.shape[1] != dataset.n:
        raise DimensionError(f"estimator produces {S.shape[1]}-dim states, model has n={dataset.n}")
    return S


def estimator_features_matrix(mode, dataset):
    """(K, f) matrix stacking every trajectory's estimator features."""
    return np.stack([estimator_features(tr, mode.phi.p) for tr in dataset.trajectories])


def estimator_loss(phi, mu):
    """Penalty ``mu * (|W|_F^2 + |b|^2)``."""
    if mu < 0:
        raise ContractError("mu must be non-negative")
    if mu == 0:
        return 0.0
    return float(mu * (np.sum(phi.W ** 2) + np.sum(phi.b ** 2)))


def learned_from_pinv(C, dataset):
    """Learned states fitted to each trajectory's first sample through ``C``.

    Solves ``C s = x(t_1)`` in the least-squares sense.  Falls back to zeros
    when ``C`` is rank deficient.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[1]
    if np.linalg.matrix_rank(C) < min(C.shape):
        return Learned(np.zeros((dataset.K, n)))
    pinv = np.linalg.pinv(C)
    return Learned(np.stack([pinv @ tr.samples[0] for tr in dataset.trajectories]))
