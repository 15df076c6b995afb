"""Learning-rate caps, spectrum bounds and Hessian structure at a fitted model.

All calculators take a fitted model ``(A_hat, C_hat)`` with initial states
``s_k`` and per-trajectory sample times.  Step sizes follow the convention
of :mod:`ltisysid.train`: ``delta`` is the step on half the sum of squared
residuals.

Discrete-time models are handled by mapping each eigenvalue to its
continuous-time counterpart ``log(lambda)`` (principal branch), so that
``A^t`` grows like ``exp(Re(log lambda) t)``.  Reports carry both values.

Weighted Gram matrices ``sum_k w_k s_k s_k^T`` are assembled with the
largest log-weight factored out, so that ``exp(2 Re(Lambda) t)`` never
overflows before the final division.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .initstate import Estimated
from .loss import loss_value, residual_jacobian
from .model import TimeKind
from .numkernel import as_matrix, eigen, symmetric_extremal_eig

__all__ = [
    "BoundReport",
    "SpectrumBound",
    "bound_report",
    "condition_ratio",
    "corollary1_bound",
    "gauss_newton_hessian",
    "iteration_estimate",
    "theorem1_bound",
    "theorem2_bound",
]

SINGULAR_RTOL = 1e-12
ILL_CONDITIONED = 1e8


@dataclass(frozen=True)
class BoundReport:
    """Learning-rate caps at a zero-error solution.

    ``theorem1_delta_max`` is the cap for the squared-error loss and
    ``theorem2_delta_max`` the cap for the time-weighted log loss; a
    calculator leaves the other field as ``None``.  ``math.inf`` marks a
    void bound (singular Gram matrix or unobservable top mode).
    ``lambda_top`` is the continuous-time rightmost eigenvalue and
    ``lambda_top_raw`` the eigenvalue of ``A_hat`` it came from.
    """

    theorem1_delta_max: float = None
    theorem2_delta_max: float = None
    lambda_top: complex = 0j
    lambda_top_raw: complex = 0j
    rho_sq: float = 0.0
    gram_min_eig: float = 0.0
    epsilon: float = None
    ill_conditioned: bool = False

    def to_dict(self):
        def num(x):
            if x is None:
                return None
            if math.isinf(x):
                return "+inf" if x > 0 else "-inf"
            return float(x)

        return {
            "theorem1_delta_max": num(self.theorem1_delta_max),
            "theorem2_delta_max": num(self.theorem2_delta_max),
            "lambda_top": [float(self.lambda_top.real), float(self.lambda_top.imag)],
            "lambda_top_raw": [float(self.lambda_top_raw.real), float(self.lambda_top_raw.imag)],
            "rho_sq": num(self.rho_sq),
            "gram_min_eig": num(self.gram_min_eig),
            "epsilon": self.epsilon,
            "ill_conditioned": self.ill_conditioned,
        }


@dataclass(frozen=True)
class SpectrumBound:
    """Upper bound on the real part of the rightmost eigenvalue.

    ``tau_star`` is the minimizing sample time (unstable branch) or the
    minimizing pair ``(tau_1, tau_2)`` (stable branch).
    """

    re_lambda_upper: float
    tau_star: object
    applicable: bool
    branch: str
    re_lambda: float

    def to_dict(self):
        tau = self.tau_star
        if isinstance(tau, tuple):
            tau = [float(x) for x in tau]
        elif tau is not None:
            tau = float(tau)
        upper = self.re_lambda_upper
        return {
            "re_lambda_upper": "+inf" if math.isinf(upper) else float(upper),
            "tau_star": tau,
            "applicable": self.applicable,
            "branch": self.branch,
            "re_lambda": float(self.re_lambda),
        }


# -- helpers ---------------------------------------------------------------


def _continuous_eigs(w, kind):
    if TimeKind(kind) is TimeKind.DISCRETE:
        with np.errstate(divide="ignore"):
            return np.log(w.astype(complex))
    return w.astype(complex)


@dataclass(frozen=True)
class _Mode:
    index: int
    lam: complex
    lam_raw: complex
    u: np.ndarray
    rho_sq: float
    ill_conditioned: bool


def _top_mode(A, C, kind):
    spec = eigen(A)
    cont = _continuous_eigs(spec.eigenvalues, kind)
    re = cont.real
    top = int(np.lexsort((-cont.imag, -re))[0])
    lam_raw = spec.eigenvalues[top]
    tol = 1e-8 * max(1.0, abs(lam_raw))
    members = [i for i, w in enumerate(spec.eigenvalues) if abs(w - lam_raw) <= tol]
    rho_sq = max(float(np.sum(np.abs(C @ spec.right[:, i]) ** 2)) for i in members)
    ill = _ill_conditioned(spec, members)
    return _Mode(top, complex(cont[top]), complex(lam_raw), spec.right[:, top], rho_sq, ill)


def _ill_conditioned(spec, members):
    ill = False
    for i in members:
        overlap = abs(np.vdot(spec.left[:, i], spec.right[:, i]))
        if overlap * ILL_CONDITIONED < 1.0:
            ill = True
    if ill:
        warnings.warn(
            "rightmost eigenvalue is ill-conditioned (nearly defective matrix); "
            "eigenvector-based bounds are unreliable",
            RuntimeWarning,
            stacklevel=3,
        )
    return ill


def _check_inputs(n, init_states, sample_times):
    S = np.asarray(init_states, dtype=float)
    if S.ndim != 2 or S.shape[1] != n:
        raise DimensionError(f"initial states must be (K, {n}), got {S.shape}")
    if len(sample_times) != S.shape[0]:
        raise DimensionError(f"{S.shape[0]} states but {len(sample_times)} time lists")
    times = [np.asarray(t, dtype=float) for t in sample_times]
    if any(np.any(t <= 0) for t in times):
        raise ContractError("sample times must be positive")
    return S, times


def _scaled_gram(S, log_w):
    """``(G_hat, c)`` with ``sum_k exp(log_w[k]) s_k s_k^T = exp(c) G_hat``."""
    finite = np.isfinite(log_w)
    if not finite.any():
        return np.zeros((S.shape[1], S.shape[1])), 0.0
    c = float(log_w[finite].max())
    w = np.where(finite, np.exp(np.where(finite, log_w - c, 0.0)), 0.0)
    G = (S * w[:, None]).T @ S
    return 0.5 * (G + G.T), c


def _logsumexp(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0 or not np.isfinite(x).any():
        return -math.inf
    m = x[np.isfinite(x)].max()
    return float(m + np.log(np.sum(np.exp(x - m))))


def _cap_from_gram(G_hat, c, rho_sq):
    """Return ``(2 / lambda_min(rho_sq e^c G_hat), lambda_min(rho_sq e^c G_hat))``."""
    lo, hi = symmetric_extremal_eig(G_hat)
    if rho_sq <= 0 or hi <= 0 or lo <= SINGULAR_RTOL * hi:
        if lo <= 0 or rho_sq <= 0:
            return math.inf, 0.0
        return math.inf, _safe_exp(math.log(rho_sq) + c + math.log(lo))
    log_min = math.log(rho_sq) + c + math.log(lo)
    return 2.0 * _safe_exp(-log_min), _safe_exp(log_min)


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# -- learning-rate caps ----------------------------------------------------


def theorem1_bound(params_hat, init_states, sample_times, kind=TimeKind.CONTINUOUS):
    """Largest step size compatible with convergence under squared error.

    ``2 / lambda_min(rho^2 sum_k sum_t t^2 exp(2 Re(Lambda) t) s_k s_k^T)``
    where ``Lambda`` is the rightmost eigenvalue of ``A_hat`` and ``rho``
    the largest ``|C_hat u|`` over its unit eigenvectors ``u``.
    """
    A = as_matrix(params_hat.A, square=True)
    S, times = _check_inputs(A.shape[0], init_states, sample_times)
    mode = _top_mode(A, params_hat.C, kind)
    re = mode.lam.real
    log_w = np.array([_logsumexp(2 * np.log(t) + 2 * re * t) for t in times])
    G_hat, c = _scaled_gram(S, log_w)
    cap, gmin = _cap_from_gram(G_hat, c, mode.rho_sq)
    return BoundReport(
        theorem1_delta_max=cap,
        lambda_top=mode.lam,
        lambda_top_raw=mode.lam_raw,
        rho_sq=mode.rho_sq,
        gram_min_eig=gmin,
        ill_conditioned=mode.ill_conditioned,
    )


def _scaled_outputs(A, C, s, t, re, kind):
    """``|C exp((A - re I) t) s|_inf``, i.e. ``|C e^{At} s|_inf e^{-re t}``."""
    if TimeKind(kind) is TimeKind.DISCRETE:
        scale = math.exp(re)
        M = np.linalg.matrix_power(A / scale, int(round(t)))
    else:
        from .numkernel import mat_exp

        M = mat_exp(A - re * np.eye(A.shape[0]), t)
    y = C @ (M @ s)
    if not np.all(np.isfinite(y)):
        from .errors import NumericError

        raise NumericError(f"scaled prediction is not finite at t={t}")
    return float(np.max(np.abs(y)))


def theorem2_bound(params_hat, init_states, sample_times, epsilon, kind=TimeKind.CONTINUOUS):
    """Largest step size compatible with convergence under the log loss.

    ``2 / lambda_min(sum_k sum_t rho^2 exp(2 Re(Lambda) t)
    / (|C_hat e^{A_hat t} s_k|_inf + eps)^2 s_k s_k^T)``.

    Each weight is evaluated as
    ``rho^2 / (|C e^{(A - Re(Lambda)) t} s|_inf + eps e^{-Re(Lambda) t})^2``,
    which stays finite when ``e^{At}`` itself would overflow.
    """
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    A = as_matrix(params_hat.A, square=True)
    C = as_matrix(params_hat.C, "C")
    S, times = _check_inputs(A.shape[0], init_states, sample_times)
    mode = _top_mode(A, C, kind)
    re = mode.lam.real
    log_w = []
    for s, ts in zip(S, times):
        parts = []
        for t in ts:
            y = _scaled_outputs(A, C, s, t, re, kind)
            damp = epsilon * _safe_exp(-re * t)
            denom = y + damp
            parts.append(-2.0 * math.log(denom) if denom > 0 and math.isfinite(denom) else -math.inf)
        log_w.append(_logsumexp(parts))
    G_hat, c = _scaled_gram(S, np.array(log_w))
    cap, gmin = _cap_from_gram(G_hat, c, mode.rho_sq)
    return BoundReport(
        theorem2_delta_max=cap,
        lambda_top=mode.lam,
        lambda_top_raw=mode.lam_raw,
        rho_sq=mode.rho_sq,
        gram_min_eig=gmin,
        epsilon=float(epsilon),
        ill_conditioned=mode.ill_conditioned,
    )


def bound_report(params_hat, init_states, sample_times, epsilon=1.0, kind=TimeKind.CONTINUOUS):
    """Both caps in one report (``gram_min_eig`` refers to the squared-error Gram)."""
    r1 = theorem1_bound(params_hat, init_states, sample_times, kind)
    r2 = theorem2_bound(params_hat, init_states, sample_times, epsilon, kind)
    return BoundReport(
        theorem1_delta_max=r1.theorem1_delta_max,
        theorem2_delta_max=r2.theorem2_delta_max,
        lambda_top=r1.lambda_top,
        lambda_top_raw=r1.lambda_top_raw,
        rho_sq=r1.rho_sq,
        gram_min_eig=r1.gram_min_eig,
        epsilon=float(epsilon),
        ill_conditioned=r1.ill_conditioned,
    )


# -- spectrum bound ---------------------------------------------------------


def corollary1_bound(A_hat, delta, init_states, sample_times, kind=TimeKind.CONTINUOUS, branch=None):
    """Upper bound on ``Re(Lambda)`` implied by convergence with step ``delta``.

    Assumes ``C = I``.  With ``Re(Lambda) >= 0`` (unstable branch)::

        min over tau of  1/(2 tau) log[ 2 / (delta tau^2 lambda_min(G(t >= tau))) ]

    and otherwise (stable branch), over pairs ``tau_1 < tau_2``::

        1/(2 tau_2) log[ 2 / (delta tau_1^2 lambda_min(G(tau_1 <= t <= tau_2))) ]

    where ``G(cond) = sum_k sum_{t in T_k, cond} s_k s_k^T``.  The infimum is
    taken over observed sample times; singular Gram matrices are skipped.
    """
    A = as_matrix(A_hat, square=True)
    if not delta > 0:
        raise ContractError("delta must be positive")
    S, times = _check_inputs(A.shape[0], init_states, sample_times)
    cont = _continuous_eigs(eigen(A).eigenvalues, kind)
    re = float(cont.real.max())
    if branch is None:
        branch = "unstable" if re >= 0 else "stable"
    taus = np.unique(np.concatenate(times))
    outer = np.einsum("ki,kj->kij", S, S)
    # counts[k, i] = number of samples of trajectory k at or after taus[i]
    at_or_after = np.stack([len(t) - np.searchsorted(t, taus, side="left") for t in times])

    best, best_tau = math.inf, None
    if branch == "unstable":
        grams = np.einsum("ki,kab->iab", at_or_after, outer)
        lmins = np.linalg.eigvalsh(grams)
        for i, tau in enumerate(taus):
            lo, hi = lmins[i, 0], lmins[i, -1]
            if hi <= 0 or lo <= SINGULAR_RTOL * hi:
                continue
            val = math.log(2.0 / (delta * tau * tau * lo)) / (2.0 * tau)
            if val < best:
                best, best_tau = val, float(tau)
    elif branch == "stable":
        after = np.stack([len(t) - np.searchsorted(t, taus, side="right") for t in times])
        for i, tau1 in enumerate(taus[:-1]):
            # samples in [tau1, tau2] = (at or after tau1) - (strictly after tau2)
            counts = at_or_after[:, i][:, None] - after[:, i + 1:]
            grams = np.einsum("kj,kab->jab", counts, outer)
            lm = np.linalg.eigvalsh(grams)
            for j, tau2 in enumerate(taus[i + 1:]):
                lo, hi = lm[j, 0], lm[j, -1]
                if hi <= 0 or lo <= SINGULAR_RTOL * hi:
                    continue
                val = math.log(2.0 / (delta * tau1 * tau1 * lo)) / (2.0 * tau2)
                if val < best:
                    best, best_tau = val, (float(tau1), float(tau2))
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return SpectrumBound(float(best), best_tau, best_tau is not None, branch, re)


# -- Hessian structure ------------------------------------------------------


def gauss_newton_hessian(dataset, params_hat, init_mode, spec, blocks=("A", "C", "init"), tol=1e-12):
    """``sum_i grad f_i grad f_i^T`` over all scalar residuals.

    At a zero-residual point this is the exact Hessian of half the loss.
    Coordinates follow :func:`ltisysid.loss.pack` for ``blocks``.

    Raises
    ------
    ContractError
        If the loss at ``params_hat`` exceeds ``tol``.
    """
    loss = loss_value(dataset, params_hat, init_mode, spec)
    if loss > tol:
        raise ContractError(f"loss {loss:.3g} is not zero; the Gauss-Newton identity does not apply")
    J = residual_jacobian(dataset, params_hat, init_mode, spec, blocks)
    H = J.T @ J
    if isinstance(init_mode, Estimated) and "init" in blocks and init_mode.reg_weight:
        n_phi = init_mode.phi.W.size + init_mode.phi.b.size
        H[-n_phi:, -n_phi:] += init_mode.reg_weight * np.eye(n_phi)
    return 0.5 * (H + H.T)


def condition_ratio(params_hat, init_states, sample_times, lam1, lam2, kind=TimeKind.CONTINUOUS):
    """Certified lower bound on the Hessian condition number.

    ``lambda_min(rho_1^2 G_1) / lambda_max(rho_2^2 G_2)`` with
    ``G_i = sum_k sum_t t^2 exp(2 Re(mu_i) t) s_k s_k^T``, where ``mu_i`` is
    the continuous-time counterpart of eigenvalue ``lam_i`` of ``A_hat`` and
    ``rho_i = |C_hat u_i|`` for its unit right eigenvector.
    """
    A = as_matrix(params_hat.A, square=True)
    S, times = _check_inputs(A.shape[0], init_states, sample_times)
    spec = eigen(A)
    cont = _continuous_eigs(spec.eigenvalues, kind)

    def locate(lam):
        d = np.abs(spec.eigenvalues - lam)
        i = int(np.argmin(d))
        if d[i] > 1e-8 * max(1.0, abs(lam)):
            raise ValueError(f"{lam} is not an eigenvalue of A_hat")
        u = spec.right[:, i]
        return cont[i].real, float(np.sum(np.abs(params_hat.C @ u) ** 2))

    re1, rho1 = locate(complex(lam1))
    re2, rho2 = locate(complex(lam2))
    G1, c1 = _scaled_gram(S, np.array([_logsumexp(2 * np.log(t) + 2 * re1 * t) for t in times]))
    G2, c2 = _scaled_gram(S, np.array([_logsumexp(2 * np.log(t) + 2 * re2 * t) for t in times]))
    num = rho1 * symmetric_extremal_eig(G1)[0]
    den = rho2 * symmetric_extremal_eig(G2)[1]
    if den <= 0:
        return math.inf
    return num / den * _safe_exp(c1 - c2)


def iteration_estimate(delta, lam_min_h, eps_acc, initial_dist):
    """Iterations for gradient descent on a quadratic to reach ``eps_acc``.

    ``(log(1/eps_acc) + log(initial_dist)) / log(1 / (1 - delta lam_min_h))``
    along the bottom eigenvector.  Returns ``None`` unless
    ``0 < delta * lam_min_h < 1``.
    """
    q = delta * lam_min_h
    if not 0 < q < 1:
        return None
    if not (eps_acc > 0 and initial_dist > 0):
        raise ContractError("eps_acc and initial_dist must be positive")
    return (math.log(1.0 / eps_acc) + math.log(initial_dist)) / math.log(1.0 / (1.0 - q))
