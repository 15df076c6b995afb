"""Training losses, their analytic gradients and a finite-difference oracle.

Two losses compare observed outputs ``x_k(t)`` with predictions
``y_k(t) = C e^{At} s_k`` (``C A^t s_k`` in discrete time):

* squared error: ``sum_k sum_t |x_k(t) - y_k(t)|^2``
* time-weighted log: ``sum_k sum_t sum_j t^-2 (F(x_kj(t)) - F(y_kj(t)))^2``
  with the signed logarithm ``F(xi) = sign(xi) (log(eps + |xi|) - log eps)``.

In estimated mode the estimator penalty is added to either loss.

Gradients with respect to ``A`` are accumulated in adjoint form: in
continuous time through the Frechet derivative of the exponential evaluated
at ``A^T``, in discrete time by reverse accumulation through the
recurrence ``z_t = A z_{t-1}``.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, PredictionOverflow
from .initstate import (
    Estimated,
    Fixed,
    Learned,
    EstimatorParams,
    estimator_features_matrix,
    estimator_loss,
    resolve_all,
)
from .model import SystemParams, TimeKind
from .numkernel import mat_exp, mat_exp_frechet

__all__ = [
    "GradientBundle",
    "LossKind",
    "LossSpec",
    "OVERFLOW_LIMIT",
    "f_eps",
    "f_eps_deriv",
    "fd_gradient_oracle",
    "loss_gradient",
    "loss_value",
    "pack",
    "predict",
    "residual_jacobian",
    "residuals",
    "unpack",
]

OVERFLOW_LIMIT = 1e150


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    TIME_WEIGHTED_LOG = "time_weighted_log"


@dataclass(frozen=True)
class LossSpec:
    """Which loss to use; ``epsilon`` only matters for the log loss."""

    kind: LossKind = LossKind.SQUARED
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.TIME_WEIGHTED_LOG and not self.epsilon > 0:
            raise ContractError("epsilon must be positive for the log loss")

    @classmethod
    def squared(cls):
        return cls(LossKind.SQUARED)

    @classmethod
    def time_weighted_log(cls, epsilon=1.0):
        return cls(LossKind.TIME_WEIGHTED_LOG, epsilon)


def f_eps(xi, eps):
    """Signed logarithm ``sign(xi) * (log(eps + |xi|) - log(eps))``.

    Odd, strictly increasing and ``1/eps``-Lipschitz.
    """
    if not eps > 0:
        raise ContractError("eps must be positive")
    xi = np.asarray(xi, dtype=float)
    out = np.sign(xi) * np.log1p(np.abs(xi) / eps)
    return float(out) if out.ndim == 0 else out


def f_eps_deriv(xi, eps):
    """Derivative of :func:`f_eps`: ``1 / (eps + |xi|)``."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    out = 1.0 / (eps + np.abs(np.asarray(xi, dtype=float)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GradientBundle:
    """Gradient blocks in canonical order ``A, C, S`` (learned) or ``W, b``.

    Blocks that do not apply to the initial-state mode are ``None``.
    """

    dA: np.ndarray
    dC: np.ndarray
    dS: np.ndarray = None
    dW: np.ndarray = None
    db: np.ndarray = None

    def blocks(self):
        return [g for g in (self.dA, self.dC, self.dS, self.dW, self.db) if g is not None]

    def flat(self):
        return np.concatenate([g.ravel() for g in self.blocks()])

    def norm(self):
        return float(np.sqrt(sum(np.sum(g * g) for g in self.blocks())))

    def scaled(self, factor):
        return self.map(lambda g: g * factor)

    def map(self, fn):
        def app(g):
            return None if g is None else fn(g)

        return GradientBundle(app(self.dA), app(self.dC), app(self.dS), app(self.dW), app(self.db))

    def __add__(self, other):
        def add(a, b):
            if a is None and b is None:
                return None
            return a + b

        return GradientBundle(
            add(self.dA, other.dA),
            add(self.dC, other.dC),
            add(self.dS, other.dS),
            add(self.dW, other.dW),
            add(self.db, other.db),
        )


# -- forward pass ---------------------------------------------------------


def _check_states(dataset, params, S):
    if params.n != dataset.n or params.m != dataset.m:
        raise DimensionError(
            f"model is (n={params.n}, m={params.m}) but dataset is (n={dataset.n}, m={dataset.m})"
        )
    if S.shape != (dataset.K, dataset.n):
        raise DimensionError(f"initial states have shape {S.shape}, expected {(dataset.K, dataset.n)}")


def _raise_overflow(bad_tk, times):
    # bad_tk: boolean (T, K) map of offending samples; report lowest k, then t
    ks = np.nonzero(bad_tk.any(axis=0))[0]
    k = int(ks[0])
    t_idx = int(np.nonzero(bad_tk[:, k])[0][0])
    raise PredictionOverflow(k, times[t_idx])


def _discrete_forward(dataset, A, C, S):
    X, mask = dataset.discrete_grid
    T = X.shape[0]
    n, K = A.shape[0], S.shape[0]
    last = np.array([int(tr.times[-1]) for tr in dataset.trajectories])
    Z = np.empty((T + 1, n, K))
    Z[0] = S.T
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, T + 1):
            Z[t] = A @ Z[t - 1]
        active = np.arange(T + 1)[:, None] <= last[None, :]
        Z = np.where(active[:, None, :], Z, 0.0)
        Y = C @ Z[1:]
    ok = np.abs(Y) <= OVERFLOW_LIMIT
    bad = (~ok).any(axis=1) & mask
    if bad.any():
        _raise_overflow(bad, np.arange(1, T + 1))
    return Z, Y


def predict(dataset, params, S):
    """Predicted outputs, one (T_k, m) array per trajectory.

    Raises
    ------
    PredictionOverflow
        If any prediction exceeds :data:`OVERFLOW_LIMIT` in magnitude.
    """
    S = np.asarray(S, dtype=float)
    _check_states(dataset, params, S)
    out = [np.empty((len(tr), dataset.m)) for tr in dataset.trajectories]
    if dataset.time_kind is TimeKind.DISCRETE:
        _, Y = _discrete_forward(dataset, params.A, params.C, S)
        for k, tr in enumerate(dataset.trajectories):
            out[k][:] = Y[tr.times.astype(int) - 1, :, k]
        return out
    for t, ks, rows, _ in dataset.continuous_groups:
        Yg = params.C @ (mat_exp(params.A, t) @ S[ks].T)
        _check_group(Yg, ks, t)
        out_rows = Yg.T
        for i, (k, r) in enumerate(zip(ks, rows)):
            out[k][r] = out_rows[i]
    return out


def _check_group(Yg, ks, t):
    ok = np.all(np.abs(Yg) <= OVERFLOW_LIMIT, axis=0)
    if not ok.all():
        raise PredictionOverflow(int(ks[~ok].min()), t)


def _terms(X, Y, tt, spec, valid):
    """Loss contribution and ``dL/dY`` for aligned sample/prediction arrays."""
    if spec.kind is LossKind.SQUARED:
        r = np.where(valid, X - Y, 0.0)
        return float(np.sum(r * r)), -2.0 * r
    eps = spec.epsilon
    with np.errstate(invalid="ignore"):
        r = np.where(valid, f_eps(X, eps) - f_eps(Y, eps), 0.0)
        w = 1.0 / (tt * tt)
        G = np.where(valid, -2.0 * w * r * f_eps_deriv(Y, eps), 0.0)
    return float(np.sum(w * r * r)), G


def _core(dataset, A, C, S, spec, grad=True):
    """Data loss and its gradients with respect to A, C and the states S."""
    n, m, K = A.shape[0], C.shape[0], S.shape[0]
    if dataset.time_kind is TimeKind.DISCRETE:
        X, mask = dataset.discrete_grid
        T = X.shape[0]
        Z, Y = _discrete_forward(dataset, A, C, S)
        tt = np.arange(1, T + 1, dtype=float)[:, None, None]
        loss, G = _terms(X, Y, tt, spec, mask[:, None, :])
        if not grad:
            return loss, None, None, None
        B = C.T @ G
        adj = np.empty((T, n, K))
        a = np.zeros((n, K))
        At = A.T
        for t in range(T - 1, -1, -1):
            a = B[t] + At @ a
            adj[t] = a
        dA = np.einsum("tik,tjk->ij", adj, Z[:-1])
        dC = np.einsum("tik,tjk->ij", G, Z[1:])
        dS = (At @ adj[0]).T
        return loss, dA, dC, dS

    loss = 0.0
    dA = np.zeros((n, n))
    dC = np.zeros((m, n))
    dS = np.zeros((K, n))
    At = A.T
    for t, ks, _, samples in dataset.continuous_groups:
        M = mat_exp(A, t)
        Sg = S[ks].T
        Zg = M @ Sg
        Yg = C @ Zg
        _check_group(Yg, ks, t)
        part, G = _terms(samples.T, Yg, t, spec, True)
        loss += part
        if grad:
            dC += G @ Zg.T
            back = C.T @ G
            dS[ks] += (M.T @ back).T
            dA += mat_exp_frechet(At, back @ Sg.T, t)
    if not grad:
        return loss, None, None, None
    return loss, dA, dC, dS


# -- public loss surface ----------------------------------------------------


def loss_value(dataset, params, init, spec):
    """Total loss, including the estimator penalty in estimated mode."""
    S = resolve_all(init, dataset)
    _check_states(dataset, params, S)
    loss = _core(dataset, params.A, params.C, S, spec, grad=False)[0]
    if isinstance(init, Estimated):
        loss += estimator_loss(init.phi, init.reg_weight)
    return loss


def loss_gradient(dataset, params, init, spec, return_loss=False, indices=None):
    """Analytic gradient of :func:`loss_value` for every trainable block.

    Returns a :class:`GradientBundle`; with ``return_loss`` a tuple
    ``(loss, bundle)`` computed from the same forward pass.  ``indices``
    restricts the data sum to a subset of trajectories (a minibatch); the
    estimator penalty is then weighted by the subset's share of ``K``.
    """
    S = resolve_all(init, dataset)
    _check_states(dataset, params, S)
    if indices is None:
        loss, dA, dC, dS = _core(dataset, params.A, params.C, S, spec)
        share = 1.0
    else:
        indices = np.asarray(indices, dtype=int)
        loss, dA, dC, dS_sub = _core(dataset.subset(indices), params.A, params.C, S[indices], spec)
        dS = np.zeros_like(S)
        dS[indices] = dS_sub
        share = len(indices) / dataset.K
    if isinstance(init, Fixed):
        bundle = GradientBundle(dA, dC)
    elif isinstance(init, Learned):
        bundle = GradientBundle(dA, dC, dS=dS)
    elif isinstance(init, Estimated):
        phi, mu = init.phi, init.reg_weight * share
        feats = estimator_features_matrix(init, dataset)
        dW = dS.T @ feats + 2.0 * mu * phi.W
        db = dS.sum(axis=0) + 2.0 * mu * phi.b
        loss += estimator_loss(phi, mu)
        bundle = GradientBundle(dA, dC, dW=dW, db=db)
    else:
        raise TypeError(f"unknown initial-state mode {type(init).__name__}")
    return (loss, bundle) if return_loss else bundle


# -- flattening ------------------------------------------------------------


def _init_arrays(init):
    if isinstance(init, Fixed):
        return []
    if isinstance(init, Learned):
        return [init.states]
    return [init.phi.W, init.phi.b]


def pack(params, init, blocks=("A", "C", "init")):
    """Flatten the selected parameter blocks into one vector (row-major)."""
    parts = []
    if "A" in blocks:
        parts.append(params.A.ravel())
    if "C" in blocks:
        parts.append(params.C.ravel())
    if "init" in blocks:
        parts.extend(a.ravel() for a in _init_arrays(init))
    return np.concatenate(parts) if parts else np.zeros(0)


def unpack(vec, params, init, blocks=("A", "C", "init")):
    """Inverse of :func:`pack`; unselected blocks are taken from the templates."""
    vec = np.asarray(vec, dtype=float)
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos:pos + size].reshape(shape)
        pos += size
        return out

    A = take(params.A.shape) if "A" in blocks else params.A
    C = take(params.C.shape) if "C" in blocks else params.C
    if "init" in blocks and not isinstance(init, Fixed):
        if isinstance(init, Learned):
            init = Learned(take(init.states.shape))
        else:
            phi = init.phi
            init = Estimated(EstimatorParams(take(phi.W.shape), take(phi.b.shape), phi.p), init.reg_weight)
    if pos != vec.size:
        raise DimensionError(f"vector has {vec.size} entries, blocks need {pos}")
    return SystemParams(A, C), init


def bundle_to_vector(bundle, blocks=("A", "C", "init")):
    parts = []
    if "A" in blocks:
        parts.append(bundle.dA.ravel())
    if "C" in blocks:
        parts.append(bundle.dC.ravel())
    if "init" in blocks:
        parts.extend(g.ravel() for g in (bundle.dS, bundle.dW, bundle.db) if g is not None)
    return np.concatenate(parts) if parts else np.zeros(0)


def fd_gradient_oracle(dataset, params, init, spec, h=1e-6):
    """Central-difference gradient of :func:`loss_value` in every coordinate."""
    if not h > 0:
        raise ContractError("h must be positive")
    theta = pack(params, init)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fp = loss_value(dataset, *unpack(theta + e, params, init), spec)
        fm = loss_value(dataset, *unpack(theta - e, params, init), spec)
        g[i] = (fp - fm) / (2 * h)
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = g[pos:pos + size].reshape(shape)
        pos += size
        return out

    dA = take(params.A.shape)
    dC = take(params.C.shape)
    if isinstance(init, Fixed):
        return GradientBundle(dA, dC)
    if isinstance(init, Learned):
        return GradientBundle(dA, dC, dS=take(init.states.shape))
    return GradientBundle(dA, dC, dW=take(init.phi.W.shape), db=take(init.phi.b.shape))


# -- residual form (Gauss-Newton) -----------------------------------------


def residuals(dataset, params, init, spec):
    """Scalar residuals ``f_i`` with ``loss_value = sum_i f_i^2`` (data part).

    Ordered by trajectory, then time, then output coordinate.  Squared
    error uses ``x - y``; the log loss uses ``(F(x) - F(y)) / t``.
    """
    S = resolve_all(init, dataset)
    preds = predict(dataset, params, S)
    out = []
    for tr, Y in zip(dataset.trajectories, preds):
        if spec.kind is LossKind.SQUARED:
            r = tr.samples - Y
        else:
            r = (f_eps(tr.samples, spec.epsilon) - f_eps(Y, spec.epsilon)) / tr.times[:, None]
        out.append(r.ravel())
    return np.concatenate(out)


def _prediction_tangent(dataset, params, S, A_dot, C_dot, S_dot):
    """Directional derivative of every prediction, stacked like :func:`residuals`."""
    A, C = params.A, params.C
    out = []
    if dataset.time_kind is TimeKind.DISCRETE:
        for k, tr in enumerate(dataset.trajectories):
            z, z_dot = S[k].copy(), S_dot[k].copy()
            rows, t_prev = [], 0
            for t in tr.times.astype(int):
                for _ in range(t - t_prev):
                    z, z_dot = A @ z, A_dot @ z + A @ z_dot
                t_prev = t
                rows.append(C_dot @ z + C @ z_dot)
            out.append(np.ravel(rows))
        return np.concatenate(out)
    for k, tr in enumerate(dataset.trajectories):
        rows = []
        for t in tr.times:
            M = mat_exp(A, t)
            z_dot = mat_exp_frechet(A, A_dot, t) @ S[k] + M @ S_dot[k]
            rows.append(C_dot @ (M @ S[k]) + C @ z_dot)
        out.append(np.ravel(rows))
    return np.concatenate(out)


def residual_jacobian(dataset, params, init, spec, blocks=("A", "C", "init")):
    """Jacobian of :func:`residuals` with respect to the packed ``blocks``.

    Built column by column from forward-mode derivatives of the predictions.
    """
    S = resolve_all(init, dataset)
    preds = np.concatenate([Y.ravel() for Y in predict(dataset, params, S)])
    if spec.kind is LossKind.SQUARED:
        dres = -np.ones_like(preds)
    else:
        times = np.concatenate([np.repeat(tr.times.astype(float), dataset.m) for tr in dataset.trajectories])
        dres = -f_eps_deriv(preds, spec.epsilon) / times

    theta = pack(params, init, blocks)
    zeroA, zeroC, zeroS = np.zeros_like(params.A), np.zeros_like(params.C), np.zeros_like(S)
    feats = estimator_features_matrix(init, dataset) if isinstance(init, Estimated) else None
    J = np.empty((preds.size, theta.size))
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = 1.0
        dp, dinit = unpack(e, SystemParams(zeroA, zeroC), _zero_like(init), blocks)
        A_dot = dp.A if "A" in blocks else zeroA
        C_dot = dp.C if "C" in blocks else zeroC
        if "init" in blocks and isinstance(init, Learned):
            S_dot = np.array(dinit.states)
        elif "init" in blocks and isinstance(init, Estimated):
            S_dot = feats @ dinit.phi.W.T + dinit.phi.b
        else:
            S_dot = zeroS
        J[:, i] = dres * _prediction_tangent(dataset, params, S, A_dot, C_dot, S_dot)
    return J


def _zero_like(init):
    if isinstance(init, Fixed):
        return init
    if isinstance(init, Learned):
        return Learned(np.zeros_like(init.states))
    phi = init.phi
    return Estimated(EstimatorParams(np.zeros_like(phi.W), np.zeros_like(phi.b), phi.p), init.reg_weight)
