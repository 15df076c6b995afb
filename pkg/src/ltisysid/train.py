"""Gradient descent with heavy-ball momentum and norm clipping.

Each iteration evaluates the configured loss, records it together with the
eigenvalues of the current ``A``, then takes the step::

    g <- clip(0.5 * loss_scale * grad(loss))
    v <- momentum * v + g
    theta <- theta - learning_rate * v

The factor ``0.5`` makes ``learning_rate`` the step size on half the sum of
squared residuals, the convention under which the learning-rate caps in
:mod:`ltisysid.bounds` are stated.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, PredictionOverflow
from .initstate import Estimated, EstimatorParams, Learned
from .loss import LossSpec, loss_gradient, loss_value
from .model import SystemParams
from .numkernel import eigen

__all__ = [
    "FullBatch",
    "PerTrajectory",
    "Status",
    "TrainConfig",
    "TrainResult",
    "clip_gradient",
    "train",
]


@dataclass(frozen=True)
class FullBatch:
    """Every step uses the gradient over all trajectories."""


@dataclass(frozen=True)
class PerTrajectory:
    """One step per trajectory, in a freshly shuffled order each epoch."""

    shuffle_seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``init_mode`` holds the starting initial-state regime; fixed states are
    never modified.  ``train_C=False`` freezes the observation matrix.
    ``loss_scale`` multiplies the gradient only (e.g. ``1 / sample_count``
    to descend on a mean rather than a sum); recorded losses are unscaled.
    With :class:`PerTrajectory` batching, ``max_iters`` counts epochs.
    """

    learning_rate: float
    init_mode: object
    loss: LossSpec = field(default_factory=LossSpec)
    momentum: float = 0.0
    clip_threshold: float = 1.0
    max_iters: int = 1000
    batch: object = field(default_factory=FullBatch)
    divergence_factor: float = 1e6
    seed: int = 0
    train_C: bool = True
    tol: float = 1e-12
    loss_scale: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.divergence_factor > 1:
            raise ValueError("divergence_factor must exceed 1")


@dataclass(frozen=True)
class Status:
    """How training ended: ``converged``, ``iter_cap`` or ``diverged``."""

    kind: str
    iteration: int = None

    @property
    def converged(self):
        return self.kind == "converged"

    @property
    def diverged(self):
        return self.kind == "diverged"

    def to_dict(self):
        return {"kind": self.kind, "iteration": self.iteration}


@dataclass(frozen=True)
class TrainResult:
    final_params: SystemParams
    final_init: object
    loss_curve: np.ndarray
    eigen_trace: np.ndarray
    grad_norms: np.ndarray
    status: Status

    @property
    def iterations(self):
        return len(self.loss_curve)


def clip_gradient(g, threshold):
    """Scale all blocks of ``g`` so the joint l2 norm is at most ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    norm = g.norm()
    if norm > threshold:
        return g.scaled(threshold / norm)
    return g


def _init_arrays(init):
    if isinstance(init, Learned):
        return [np.array(init.states)]
    if isinstance(init, Estimated):
        return [np.array(init.phi.W), np.array(init.phi.b)]
    return []


def _rebuild_init(init, arrays):
    if isinstance(init, Learned):
        return Learned(arrays[0])
    if isinstance(init, Estimated):
        return Estimated(EstimatorParams(arrays[0], arrays[1], init.phi.p), init.reg_weight)
    return init


def _spectrum(A):
    try:
        return eigen(A).eigenvalues
    except NumericError:
        return np.full(A.shape[0], np.nan + 0j)


def train(dataset, init_params, config, callback=None):
    """Fit ``A``, ``C`` and the initial-state parameters to ``dataset``.

    Parameters
    ----------
    dataset : Dataset
    init_params : SystemParams
        Starting point for ``A`` and ``C``.
    config : TrainConfig
    callback : callable, optional
        Called with a dict ``{"iteration", "loss", "grad_norm"}`` after each
        recorded iteration.

    Returns
    -------
    TrainResult
        ``loss_curve[i]`` and ``eigen_trace[i]`` describe the parameters at
        the start of iteration ``i``.  Divergence (overflow, non-finite loss
        or growth beyond ``divergence_factor`` times the first loss) is
        reported in ``status`` rather than raised.
    """
    spec = config.loss
    init = config.init_mode
    A = np.array(init_params.A, dtype=float)
    C = np.array(init_params.C, dtype=float)
    state = _init_arrays(init)
    vA, vC = np.zeros_like(A), np.zeros_like(C)
    v_state = [np.zeros_like(a) for a in state]
    per_traj = isinstance(config.batch, PerTrajectory)
    rng = np.random.default_rng(config.batch.shuffle_seed if per_traj else config.seed)

    losses, spectra, norms = [], [], []
    status = Status("iter_cap")
    loss0 = None
    params, cur_init = SystemParams(A, C), init

    def record(i, loss, gnorm):
        losses.append(loss)
        spectra.append(_spectrum(A))
        norms.append(gnorm)
        if callback is not None:
            callback({"iteration": i, "loss": loss, "grad_norm": gnorm})

    def apply(g):
        nonlocal A, C, state, params, cur_init
        g = g.scaled(0.5 * config.loss_scale)
        if not config.train_C:
            g = replace(g, dC=np.zeros_like(g.dC))
        blocks = clip_gradient(g, config.clip_threshold).blocks()
        vA[:] = config.momentum * vA + blocks[0]
        vC[:] = config.momentum * vC + blocks[1]
        for v, gb in zip(v_state, blocks[2:]):
            v[:] = config.momentum * v + gb
        new_A = A - config.learning_rate * vA
        new_C = C - config.learning_rate * vC
        new_state = [a - config.learning_rate * v for a, v in zip(state, v_state)]
        if not all(np.all(np.isfinite(x)) for x in [new_A, new_C, *new_state]):
            return False
        A, C, state = new_A, new_C, new_state
        params = SystemParams(A, C)
        cur_init = _rebuild_init(cur_init, state)
        return True

    for it in range(config.max_iters):
        try:
            if per_traj:
                loss = loss_value(dataset, params, cur_init, spec)
                g = None
            else:
                loss, g = loss_gradient(dataset, params, cur_init, spec, return_loss=True)
        except PredictionOverflow:
            record(it, math.inf, math.nan)
            status = Status("diverged", it)
            break
        gnorm = g.norm() if g is not None else math.nan
        record(it, loss, gnorm)
        if loss0 is None:
            loss0 = loss
        if not math.isfinite(loss) or loss > config.divergence_factor * loss0:
            status = Status("diverged", it)
            break
        if loss <= config.tol:
            status = Status("converged", it)
            break
        if per_traj:
            ok = True
            for k in rng.permutation(dataset.K):
                try:
                    gk = loss_gradient(dataset, params, cur_init, spec, indices=[k])
                except PredictionOverflow:
                    ok = False
                    break
                if not apply(gk):
                    ok = False
                    break
        else:
            ok = apply(g)
        if not ok:
            status = Status("diverged", it)
            break

    return TrainResult(
        final_params=params,
        final_init=cur_init,
        loss_curve=np.array(losses, dtype=float),
        eigen_trace=np.array(spectra),
        grad_norms=np.array(norms, dtype=float),
        status=status,
    )
