"""Paired squared-error vs log-loss training protocol on random unstable systems.

Seed derivation for a generator seed ``g``:

* true system: ``generate_system(n, m, g)``
* dataset initial states and sample times: seed ``g + 1000``
* starting model ``(A0, C0)``: ``generate_system(n, m, g + 5000)``
* learned initial states: least-squares fit of the first sample through ``C0``
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .initstate import learned_from_pinv
from .loss import LossSpec
from .model import TimeKind, generate_system, make_dataset
from .numkernel import eigen
from .train import TrainConfig, train

__all__ = [
    "DATA_SEED_OFFSET",
    "INIT_SEED_OFFSET",
    "ProtocolConfig",
    "LossRuns",
    "SeedReport",
    "is_unstable",
    "match_eigenvalues",
    "run_loss_grid",
    "run_seed",
    "unstable_seeds",
]

DATA_SEED_OFFSET = 1000
INIT_SEED_OFFSET = 5000


@dataclass(frozen=True)
class ProtocolConfig:
    """Settings shared by every seed of a reproduction run."""

    n: int = 3
    m: int = 1
    K: int = 50
    length: int = 50
    time_kind: TimeKind = TimeKind.DISCRETE
    deltas: tuple = (1e-2, 1e-3, 1e-4)
    max_iters: int = 20000
    momentum: float = 0.99
    clip_threshold: float = 1.0
    epsilon: float = 1.0


def is_unstable(A, kind=TimeKind.DISCRETE):
    """True when some eigenvalue lies outside the unit disk (or right half-plane)."""
    w = eigen(A).eigenvalues
    if TimeKind(kind) is TimeKind.DISCRETE:
        return bool(np.max(np.abs(w)) > 1)
    return bool(np.max(w.real) > 0)


def unstable_seeds(n, count, m=1, start=0, kind=TimeKind.DISCRETE):
    """The first ``count`` generator seeds ``>= start`` yielding unstable systems."""
    out, g = [], start
    while len(out) < count:
        if is_unstable(generate_system(n, m, g).A, kind):
            out.append(g)
        g += 1
    return out


def match_eigenvalues(estimate, truth):
    """Pair estimated with true eigenvalues minimizing total distance.

    Returns ``(distances, order)``: ``distances[j]`` is ``|estimate[order[j]] - truth[j]|``.
    """
    estimate = np.asarray(estimate, dtype=complex)
    truth = np.asarray(truth, dtype=complex)
    cost = np.abs(truth[:, None] - estimate[None, :])
    cost = np.where(np.isfinite(cost), cost, 1e300)
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(len(truth), dtype=int)
    order[rows] = cols
    return cost[rows, cols][np.argsort(rows)], order


@dataclass
class LossRuns:
    """All grid runs for one loss on one seed, plus the selected best run."""

    loss: str
    results: dict = field(default_factory=dict)
    best_delta: float = None

    @property
    def best(self):
        return self.results[self.best_delta]

    def reduction(self, delta=None):
        """``min(loss_curve) / loss_curve[0]`` over finite values."""
        res = self.results[self.best_delta if delta is None else delta]
        curve = res.loss_curve[np.isfinite(res.loss_curve)]
        return float(curve.min() / curve[0]) if curve.size else math.inf


def _final_finite(res):
    curve = res.loss_curve[np.isfinite(res.loss_curve)]
    return float(curve[-1]) if curve.size else math.inf


def run_loss_grid(dataset, A0, C0, spec, cfg, callback=None):
    """Train from ``(A0, C0)`` at every grid step size; best = lowest final finite loss."""
    from .model import SystemParams

    runs = LossRuns(spec.kind.value)
    init = learned_from_pinv(C0, dataset)
    for delta in cfg.deltas:
        tc = TrainConfig(
            learning_rate=delta,
            init_mode=init,
            loss=spec,
            momentum=cfg.momentum,
            clip_threshold=cfg.clip_threshold,
            max_iters=cfg.max_iters,
        )
        runs.results[delta] = train(dataset, SystemParams(A0, C0), tc, callback)
    # ties resolved by grid order
    runs.best_delta = min(cfg.deltas, key=lambda d: (_final_finite(runs.results[d]), cfg.deltas.index(d)))
    return runs


@dataclass
class SeedReport:
    seed: int
    true_eigs: np.ndarray
    squared: LossRuns
    log: LossRuns

    def recovery(self, which):
        runs = self.squared if which == "squared" else self.log
        est = runs.best.eigen_trace[-1]
        return match_eigenvalues(est, self.true_eigs)[0]

    def stable_mask(self, kind=TimeKind.DISCRETE):
        if TimeKind(kind) is TimeKind.DISCRETE:
            return np.abs(self.true_eigs) < 1
        return self.true_eigs.real < 0

    def summary_row(self, kind=TimeKind.DISCRETE):
        stable = self.stable_mask(kind)
        row = {"seed": self.seed}
        for name, runs in (("mse", self.squared), ("log", self.log)):
            err = self.recovery("squared" if name == "mse" else "log")
            row[f"{name}_best_delta"] = runs.best_delta
            row[f"{name}_status"] = runs.best.status.kind
            row[f"{name}_loss_reduction"] = runs.reduction()
            row[f"{name}_max_eig_error"] = float(err.max())
            row[f"{name}_stable_eig_error"] = float(err[stable].mean()) if stable.any() else math.nan
        return row


def run_seed(seed, cfg=ProtocolConfig(), callback=None):
    """Paired protocol for one generator seed."""
    truth = generate_system(cfg.n, cfg.m, seed)
    data = make_dataset(truth, cfg.K, cfg.length, cfg.time_kind, seed=seed + DATA_SEED_OFFSET)
    start = generate_system(cfg.n, cfg.m, seed + INIT_SEED_OFFSET)
    sq = run_loss_grid(data, start.A, start.C, LossSpec.squared(), cfg, callback)
    lg = run_loss_grid(data, start.A, start.C, LossSpec.time_weighted_log(cfg.epsilon), cfg, callback)
    return SeedReport(seed, eigen(truth.A).eigenvalues, sq, lg)
